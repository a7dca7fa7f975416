//! JSON problem files.
//!
//! ```json
//! {
//!   "n_vars": 2,
//!   "dose_matrix": "identity",
//!   "structures": { "ptv": [0, 1] },
//!   "hard_constraints": [
//!     { "kind": "affine", "coeffs": [2, 1], "offset": -150, "label": "c1" },
//!     { "kind": "upper_tail", "structure": "ptv", "threshold": 60 }
//!   ],
//!   "groups": [
//!     { "index": 1, "functions": [ { "kind": "affine", "coeffs": [-8, -12], "weight": 1 } ] }
//!   ],
//!   "delta_fraction": 0.1,
//!   "nonnegative_vars": false
//! }
//! ```
//!
//! `dose_matrix` is either `"identity"` or a Matrix Market path, resolved
//! relative to the problem file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Constraint, DoseMatrix, EvaluationFunction, LexProblem, PenaltyKind, PriorityGroup, Structure,
};
use crate::error::{Error, Result};

fn default_delta_fraction() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n_vars: usize,
    pub dose_matrix: String,
    #[serde(default)]
    pub structures: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub hard_constraints: Vec<ConstraintSpec>,
    pub groups: Vec<GroupSpec>,
    #[serde(default = "default_delta_fraction")]
    pub delta_fraction: f64,
    #[serde(default = "default_true")]
    pub nonnegative_vars: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    Affine {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    LowerTail {
        structure: String,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    UpperTail {
        structure: String,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    MeanUpperTail {
        structure: String,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub index: usize,
    pub functions: Vec<FunctionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Affine {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    LowerTail {
        structure: String,
        threshold: f64,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    UpperTail {
        structure: String,
        threshold: f64,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    MeanUpperTail {
        structure: String,
        threshold: f64,
        #[serde(default = "default_weight")]
        weight: f64,
    },
}

impl FunctionSpec {
    pub fn penalty(kind: PenaltyKind, structure: String, threshold: f64, weight: f64) -> Self {
        match kind {
            PenaltyKind::LowerTail => FunctionSpec::LowerTail {
                structure,
                threshold,
                weight,
            },
            PenaltyKind::UpperTail => FunctionSpec::UpperTail {
                structure,
                threshold,
                weight,
            },
            PenaltyKind::MeanUpperTail => FunctionSpec::MeanUpperTail {
                structure,
                threshold,
                weight,
            },
        }
    }
}

impl ConstraintSpec {
    pub fn penalty(
        kind: PenaltyKind,
        structure: String,
        threshold: f64,
        label: Option<String>,
    ) -> Self {
        match kind {
            PenaltyKind::LowerTail => ConstraintSpec::LowerTail {
                structure,
                threshold,
                label,
            },
            PenaltyKind::UpperTail => ConstraintSpec::UpperTail {
                structure,
                threshold,
                label,
            },
            PenaltyKind::MeanUpperTail => ConstraintSpec::MeanUpperTail {
                structure,
                threshold,
                label,
            },
        }
    }
}

/// A problem loaded from disk plus the content hash (problem file followed by
/// matrix file) used to tell problems apart.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub problem: LexProblem,
    pub spec: ProblemFile,
    pub hash: String,
    pub path: PathBuf,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ProblemFile {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    /// Builds the in-memory problem. `base_dir` resolves relative matrix paths.
    pub fn build(&self, base_dir: &Path) -> Result<LexProblem> {
        let dose = if self.dose_matrix == "identity" {
            DoseMatrix::identity(self.n_vars)?
        } else {
            let path = base_dir.join(&self.dose_matrix);
            DoseMatrix::read_matrix_market(&path)?
        };
        self.build_with_matrix(dose)
    }

    pub fn build_with_matrix(&self, dose: DoseMatrix) -> Result<LexProblem> {
        if dose.cols() != self.n_vars {
            return Err(Error::invalid(format!(
                "n_vars = {} but the dose matrix has {} columns",
                self.n_vars,
                dose.cols()
            )));
        }

        let mut structures = BTreeMap::new();
        for (name, voxels) in &self.structures {
            structures.insert(
                name.clone(),
                Arc::new(Structure::new(name.clone(), voxels.clone())?),
            );
        }
        let lookup = |name: &str| -> Result<Arc<Structure>> {
            structures
                .get(name)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("unknown structure `{name}`")))
        };

        let mut hard_constraints = Vec::with_capacity(self.hard_constraints.len());
        for (k, spec) in self.hard_constraints.iter().enumerate() {
            let con = match spec {
                ConstraintSpec::Affine {
                    coeffs,
                    offset,
                    label,
                } => Constraint::affine(
                    label.clone().unwrap_or_else(|| format!("affine[{k}]")),
                    coeffs.clone(),
                    *offset,
                ),
                ConstraintSpec::LowerTail {
                    structure,
                    threshold,
                    label,
                }
                | ConstraintSpec::UpperTail {
                    structure,
                    threshold,
                    label,
                }
                | ConstraintSpec::MeanUpperTail {
                    structure,
                    threshold,
                    label,
                } => {
                    let kind = match spec {
                        ConstraintSpec::LowerTail { .. } => PenaltyKind::LowerTail,
                        ConstraintSpec::UpperTail { .. } => PenaltyKind::UpperTail,
                        _ => PenaltyKind::MeanUpperTail,
                    };
                    Constraint::penalty(
                        label
                            .clone()
                            .unwrap_or_else(|| format!("{}({structure})", kind.as_str())),
                        kind,
                        lookup(structure)?,
                        *threshold,
                    )
                }
            };
            hard_constraints.push(con);
        }

        let mut groups = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut functions = Vec::with_capacity(g.functions.len());
            for f in &g.functions {
                let ef = match f {
                    FunctionSpec::Affine {
                        coeffs,
                        offset,
                        weight,
                    } => EvaluationFunction::affine(coeffs.clone(), *offset, *weight)?,
                    FunctionSpec::LowerTail {
                        structure,
                        threshold,
                        weight,
                    } => EvaluationFunction::penalty(
                        PenaltyKind::LowerTail,
                        lookup(structure)?,
                        *threshold,
                        *weight,
                    )?,
                    FunctionSpec::UpperTail {
                        structure,
                        threshold,
                        weight,
                    } => EvaluationFunction::penalty(
                        PenaltyKind::UpperTail,
                        lookup(structure)?,
                        *threshold,
                        *weight,
                    )?,
                    FunctionSpec::MeanUpperTail {
                        structure,
                        threshold,
                        weight,
                    } => EvaluationFunction::penalty(
                        PenaltyKind::MeanUpperTail,
                        lookup(structure)?,
                        *threshold,
                        *weight,
                    )?,
                };
                functions.push(ef);
            }
            groups.push(PriorityGroup::new(g.index, functions)?);
        }
        groups.sort_by_key(|g| g.index);

        let problem = LexProblem {
            dose,
            structures: structures.into_values().collect(),
            hard_constraints,
            groups,
            delta_fraction: self.delta_fraction,
            nonnegative_vars: self.nonnegative_vars,
            initial_point: self.initial_point.clone(),
        };
        problem.validate()?;
        Ok(problem)
    }
}

pub fn load_problem(path: &Path) -> Result<LoadedProblem> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::invalid(format!("{}: not UTF-8: {e}", path.display())))?;
    let spec = ProblemFile::from_json(text).map_err(|e| Error::json(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let problem = spec.build(base)?;
    let mut identity = bytes;
    if spec.dose_matrix != "identity" {
        let matrix_path = base.join(&spec.dose_matrix);
        let matrix = std::fs::read(&matrix_path).map_err(|e| Error::io(&matrix_path, e))?;
        identity.extend_from_slice(&matrix);
    }
    Ok(LoadedProblem {
        problem,
        spec,
        hash: content_hash(&identity),
        path: path.to_path_buf(),
    })
}
