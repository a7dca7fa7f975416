use rayon::prelude::*;

use super::{solve_lex, LexSolution, SolveOptions};
use crate::model::LexProblem;
use crate::superiorize::SuperiorizationConfig;

/// One (K, Λ) pair. `k = None` is the K = ∞ sentinel: superiorization off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub k: Option<usize>,
    pub lambda: usize,
}

#[derive(Debug)]
pub struct SweepRow {
    pub point: GridPoint,
    pub outcome: Result<LexSolution, String>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub best: Option<GridPoint>,
}

impl SweepReport {
    pub fn best_row(&self) -> Option<&SweepRow> {
        let best = self.best?;
        self.rows.iter().find(|r| r.point == best)
    }
}

/// Runs every (K, Λ) combination with `template` supplying the remaining
/// superiorization settings. The best point minimizes total dose
/// multiplications, then total projections plus gradient evaluations, then K,
/// then Λ.
pub fn sweep_parameters(
    problem: &LexProblem,
    k_grid: &[Option<usize>],
    lambda_grid: &[usize],
    options: &SolveOptions,
    template: &SuperiorizationConfig,
) -> SweepReport {
    let points: Vec<GridPoint> = k_grid
        .iter()
        .flat_map(|&k| {
            lambda_grid
                .iter()
                .map(move |&lambda| GridPoint { k, lambda })
        })
        .collect();

    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&point| {
            let mut opts = options.clone();
            opts.superiorization = point.k.map(|k| SuperiorizationConfig {
                k,
                lambda: point.lambda,
                ..template.clone()
            });
            SweepRow {
                point,
                outcome: solve_lex(problem, &opts).map_err(|e| e.to_string()),
            }
        })
        .collect();

    let best = rows
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .ok()
                .map(|s| (r.point, s.metrics.total()))
        })
        .min_by_key(|(p, t)| {
            (
                t.dose_mults,
                t.projections + t.gradient_evals,
                p.k.unwrap_or(usize::MAX),
                p.lambda,
            )
        })
        .map(|(p, _)| p);

    SweepReport { rows, best }
}
