//! Sparse dose map `d = P x` stored in compressed-row form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::metrics::Counters;

#[derive(Debug, Clone, PartialEq)]
pub struct DoseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl DoseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed,
    /// exact zeros are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "dose matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        for &(r, c, v) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::invalid(format!(
                    "dose matrix entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "dose matrix entry ({r}, {c}) = {v} is not a finite nonnegative value"
                )));
            }
        }
        triplets.sort_by_key(|a| (a.0, a.1));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = DoseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.values.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr[r + 1] = values.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    /// `P x`. Counts one dose multiplication.
    pub fn apply(&self, x: &[f64], counters: &mut Counters) -> Result<Vec<f64>> {
        check_len("apply_dose", self.cols, x.len())?;
        counters.dose_mults += 1;
        let d = (0..self.rows)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect();
        Ok(d)
    }

    /// `Pᵀ v`. Counts one dose multiplication.
    pub fn apply_transpose(&self, v: &[f64], counters: &mut Counters) -> Result<Vec<f64>> {
        check_len("apply_dose_transpose", self.rows, v.len())?;
        counters.dose_mults += 1;
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.values[k] * vr;
            }
        }
        Ok(out)
    }

    /// Column sums, uncounted. Used by the phantom generator to check every
    /// beamlet reaches at least one voxel.
    pub fn column_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts
    }

    pub fn to_matrix_market(&self) -> String {
        let mut s = String::with_capacity(32 * self.nnz() + 64);
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.rows, self.cols, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:e}", r + 1, c + 1, v);
        }
        s
    }

    pub fn from_matrix_market(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty Matrix Market file"))?;
        let fields: Vec<String> = header
            .split_whitespace()
            .map(|f| f.to_ascii_lowercase())
            .collect();
        if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
            return Err(Error::invalid(format!(
                "bad Matrix Market header: {header}"
            )));
        }
        if fields[2] != "coordinate" || fields[3] != "real" {
            return Err(Error::invalid(format!(
                "only coordinate real matrices are supported, got {} {}",
                fields[2], fields[3]
            )));
        }
        let symmetric = match fields[4].as_str() {
            "general" => false,
            "symmetric" => true,
            other => return Err(Error::invalid(format!("unsupported symmetry `{other}`"))),
        };

        let mut body = lines.filter(|l| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('%')
        });
        let size = body
            .next()
            .ok_or_else(|| Error::invalid("Matrix Market file has no size line"))?;
        let dims: Vec<usize> = size
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad size line `{size}`: {e}")))?;
        if dims.len() != 3 {
            return Err(Error::invalid(format!("bad size line `{size}`")));
        }
        let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);

        let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
        for line in body {
            let mut it = line.split_whitespace();
            let parse_err = || Error::invalid(format!("bad entry line `{line}`"));
            let r: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(parse_err)?;
            let c: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(parse_err)?;
            let v: f64 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(parse_err)?;
            if r == 0 || c == 0 {
                return Err(Error::invalid(format!(
                    "Matrix Market indices are 1-based: `{line}`"
                )));
            }
            triplets.push((r - 1, c - 1, v));
            if symmetric && r != c {
                triplets.push((c - 1, r - 1, v));
            }
        }
        let stored = triplets.len();
        let expected = if symmetric { stored } else { nnz };
        if !symmetric && stored != expected {
            return Err(Error::invalid(format!(
                "Matrix Market file declares {nnz} entries but holds {stored}"
            )));
        }
        Self::from_triplets(rows, cols, triplets)
    }

    pub fn read_matrix_market(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_matrix_market(&text)
    }
}
