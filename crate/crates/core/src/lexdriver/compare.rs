use serde::{Deserialize, Serialize};

use super::LexSolution;
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;

/// The parts of a run needed to compare it with another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_vars: usize,
    pub problem_hash: Option<String>,
    pub phi_stars: Vec<f64>,
    pub metrics: RunMetrics,
}

impl RunSummary {
    pub fn from_solution(solution: &LexSolution, problem_hash: Option<String>) -> Self {
        RunSummary {
            n_vars: solution.x_final.len(),
            problem_hash,
            phi_stars: solution.phi_stars.clone(),
            metrics: solution.metrics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub quantity: &'static str,
    pub level: Option<usize>,
    /// For level-entry rows: which φ_γ is compared.
    pub objective: Option<usize>,
    pub baseline: f64,
    pub compared: f64,
    pub ratio: f64,
    /// Both values are at or below t_min (the level counts as solved in both runs).
    pub solved: bool,
}

fn ratio(compared: f64, baseline: f64) -> f64 {
    if compared == baseline {
        1.0
    } else {
        compared / baseline
    }
}

/// Ratios `compared / baseline` for objective values, multiplication counts and
/// level-entry objective values. Objective ratios where both runs reached
/// `t_min` are reported as 1 and flagged solved.
pub fn compare_runs(
    baseline: &RunSummary,
    compared: &RunSummary,
    t_min: f64,
) -> Result<Vec<RatioRow>> {
    if let (Some(a), Some(b)) = (&baseline.problem_hash, &compared.problem_hash) {
        if a != b {
            return Err(Error::invalid("runs were made on different problems"));
        }
    }
    if baseline.n_vars != compared.n_vars || baseline.phi_stars.len() != compared.phi_stars.len() {
        return Err(Error::invalid("runs differ in variable or level count"));
    }
    let m = baseline.phi_stars.len();
    let mut rows = Vec::new();

    for (k, (&a, &b)) in baseline
        .phi_stars
        .iter()
        .zip(&compared.phi_stars)
        .enumerate()
    {
        let solved = a <= t_min && b <= t_min && a >= 0.0 && b >= 0.0;
        rows.push(RatioRow {
            quantity: "phi_star",
            level: Some(k + 1),
            objective: Some(k + 1),
            baseline: a,
            compared: b,
            ratio: if solved { 1.0 } else { ratio(b, a) },
            solved,
        });
    }

    let (ta, tb) = (baseline.metrics.total(), compared.metrics.total());
    for (name, a, b) in [
        ("total_dose_mults", ta.dose_mults, tb.dose_mults),
        ("total_projections", ta.projections, tb.projections),
        ("total_gradient_evals", ta.gradient_evals, tb.gradient_evals),
    ] {
        rows.push(RatioRow {
            quantity: name,
            level: None,
            objective: None,
            baseline: a as f64,
            compared: b as f64,
            ratio: ratio(b as f64, a as f64),
            solved: false,
        });
    }

    for la in &baseline.metrics.levels {
        let lb = compared.metrics.level(la.level).ok_or_else(|| {
            Error::invalid(format!("level {} missing from compared run", la.level))
        })?;
        let (a, b) = (la.counters.dose_mults as f64, lb.counters.dose_mults as f64);
        rows.push(RatioRow {
            quantity: "level_dose_mults",
            level: Some(la.level),
            objective: None,
            baseline: a,
            compared: b,
            ratio: ratio(b, a),
            solved: false,
        });
    }

    // φ_γ at the start of level μ is φ_γ at the level-(μ−1) solution
    for level in 2..=m {
        let (Some(la), Some(lb)) = (baseline.metrics.level(level), compared.metrics.level(level))
        else {
            continue;
        };
        for gamma in level..=m {
            let (Some(&a), Some(&b)) = (
                la.phi_at_entry.get(gamma - 1),
                lb.phi_at_entry.get(gamma - 1),
            ) else {
                continue;
            };
            let solved = a <= t_min && b <= t_min && a >= 0.0 && b >= 0.0;
            rows.push(RatioRow {
                quantity: "phi_at_entry",
                level: Some(level),
                objective: Some(gamma),
                baseline: a,
                compared: b,
                ratio: if solved { 1.0 } else { ratio(b, a) },
                solved,
            });
        }
    }
    Ok(rows)
}
