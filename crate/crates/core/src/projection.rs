//! Simultaneous subgradient projections (Cimmino-type) for convex feasibility
//! problems `find x with g_j(x) ≤ 0 for all j`.

use crate::error::{check_len, Error, Result};
use crate::metrics::Counters;
use crate::model::{norm, Constraint, DoseMatrix, EvalPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    /// Relaxation λ, held constant over a run. Must lie in (0, 2).
    pub relaxation: f64,
    /// Optional fixed positive weight per constraint; renormalized over the
    /// violated set each step. `None` means uniform.
    pub constraint_weights: Option<Vec<f64>>,
    pub violation_tol: f64,
    /// Projection budget per feasibility problem.
    pub n_max: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            relaxation: 1.0,
            constraint_weights: None,
            violation_tol: 1e-8,
            n_max: 1000,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::invalid(format!(
                "relaxation must lie in (0, 2), got {}",
                self.relaxation
            )));
        }
        if !(self.violation_tol >= 0.0) {
            return Err(Error::invalid("violation_tol must be nonnegative"));
        }
        if self.n_max == 0 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        if let Some(w) = &self.constraint_weights {
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid("constraint weights must be positive"));
            }
        }
        Ok(())
    }
}

/// The constraint system of one feasibility problem.
#[derive(Debug, Clone, Copy)]
pub struct Cfp<'a> {
    pub dose: &'a DoseMatrix,
    pub constraints: &'a [&'a Constraint],
    /// Clip iterates onto `x ≥ 0` after every step.
    pub nonnegative: bool,
    /// Index of the level-set bound constraint, if any. Iterates that satisfy
    /// every other constraint are tracked so a failed run can still hand back
    /// its best feasible point.
    pub objective: Option<usize>,
}

impl<'a> Cfp<'a> {
    pub fn new(dose: &'a DoseMatrix, constraints: &'a [&'a Constraint], nonnegative: bool) -> Self {
        Cfp {
            dose,
            constraints,
            nonnegative,
            objective: None,
        }
    }

    pub fn with_objective(mut self, index: usize) -> Self {
        self.objective = Some(index);
        self
    }

    pub fn values(&self, pt: &mut EvalPoint, c: &mut Counters) -> Result<Vec<f64>> {
        check_len("feasibility problem point", self.dose.cols(), pt.x().len())?;
        self.constraints
            .iter()
            .map(|con| con.value(pt, self.dose, c))
            .collect()
    }

    pub fn max_violation(values: &[f64]) -> f64 {
        values.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Indices with `g_j > tol`, ascending.
pub fn violated_indices(values: &[f64], tol: f64) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > tol || v.is_nan())
        .map(|(j, _)| j)
        .collect()
}

pub fn violated_set(x: &[f64], cfp: &Cfp<'_>, tol: f64, c: &mut Counters) -> Result<Vec<usize>> {
    let mut pt = EvalPoint::new(x.to_vec());
    let values = cfp.values(&mut pt, c)?;
    Ok(violated_indices(&values, tol))
}

fn clip_nonnegative(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// One step from `pt` given the constraint values already evaluated there.
fn step_from(
    pt: &mut EvalPoint,
    values: &[f64],
    cfp: &Cfp<'_>,
    config: &ProjectionConfig,
    c: &mut Counters,
) -> Result<Vec<f64>> {
    let violated = violated_indices(values, config.violation_tol);
    if violated.is_empty() {
        return Ok(pt.x().to_vec());
    }
    let raw: Vec<f64> = match &config.constraint_weights {
        Some(w) => {
            check_len("constraint weights", cfp.constraints.len(), w.len())?;
            violated.iter().map(|&j| w[j]).collect()
        }
        None => vec![1.0; violated.len()],
    };
    let total: f64 = raw.iter().sum();

    let mut shift = vec![0.0; pt.x().len()];
    for (&j, &w) in violated.iter().zip(&raw) {
        let xi = cfp.constraints[j].subgradient(pt, cfp.dose, c)?;
        c.gradient_evals += 1;
        let n2: f64 = xi.iter().map(|v| v * v).sum();
        if !(n2 > 0.0) {
            return Err(Error::ZeroSubgradient {
                label: cfp.constraints[j].label.clone(),
                violation: values[j],
            });
        }
        let coef = (w / total) * values[j] / n2;
        for (s, g) in shift.iter_mut().zip(&xi) {
            *s += coef * g;
        }
    }
    c.projections += 1;

    let mut next: Vec<f64> = pt
        .x()
        .iter()
        .zip(&shift)
        .map(|(x, s)| x - config.relaxation * s)
        .collect();
    if cfp.nonnegative {
        clip_nonnegative(&mut next);
    }
    Ok(next)
}

/// `x − λ Σ_{j violated} w_j g_j(x)/‖ξ_j‖² ξ_j`, clipped to `x ≥ 0` when the
/// problem asks for it. Returns `x` unchanged if nothing is violated.
pub fn simultaneous_step(
    x: &[f64],
    cfp: &Cfp<'_>,
    config: &ProjectionConfig,
    c: &mut Counters,
) -> Result<Vec<f64>> {
    let mut pt = EvalPoint::new(x.to_vec());
    let values = cfp.values(&mut pt, c)?;
    step_from(&mut pt, &values, cfp, config, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeekStatus {
    Feasible,
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct SeekOutcome {
    pub status: SeekStatus,
    /// Last iterate, with its dose cached when one was needed.
    pub point: EvalPoint,
    /// Constraint values at `point`.
    pub values: Vec<f64>,
    pub steps: usize,
    pub max_violation: f64,
    /// Best iterate satisfying every constraint except the tracked objective
    /// bound, with that bound's constraint value.
    pub best_relaxed: Option<(EvalPoint, f64)>,
}

impl SeekOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == SeekStatus::Feasible
    }
}

/// Iterates [`simultaneous_step`] until nothing is violated or `n_max` steps
/// have been taken.
pub fn seek_feasible(
    x0: &[f64],
    cfp: &Cfp<'_>,
    config: &ProjectionConfig,
    c: &mut Counters,
) -> Result<SeekOutcome> {
    seek(x0, cfp, config, c, None)
}

/// Like [`seek_feasible`] but runs `y^{k+1} = T(y^k + β_k v^k)`: `perturb(k, y)`
/// may move the iterate before each projection step.
pub fn seek_feasible_perturbed(
    x0: &[f64],
    cfp: &Cfp<'_>,
    config: &ProjectionConfig,
    c: &mut Counters,
    perturb: &mut dyn FnMut(usize, &mut [f64]),
) -> Result<SeekOutcome> {
    seek(x0, cfp, config, c, Some(perturb))
}

type Perturbation<'a> = &'a mut dyn FnMut(usize, &mut [f64]);

fn seek(
    x0: &[f64],
    cfp: &Cfp<'_>,
    config: &ProjectionConfig,
    c: &mut Counters,
    mut perturb: Option<Perturbation<'_>>,
) -> Result<SeekOutcome> {
    config.validate()?;
    let mut x = x0.to_vec();
    if cfp.nonnegative {
        clip_nonnegative(&mut x);
    }
    let tol = config.violation_tol;
    let mut best: Option<(EvalPoint, f64)> = None;
    let mut k = 0usize;
    loop {
        let mut pt = EvalPoint::new(x);
        let values = cfp.values(&mut pt, c)?;

        if let Some(obj) = cfp.objective {
            let others_ok = values
                .iter()
                .enumerate()
                .all(|(j, &v)| j == obj || v <= tol);
            if others_ok && best.as_ref().is_none_or(|(_, b)| values[obj] < *b) {
                best = Some((pt.clone(), values[obj]));
            }
        }

        let max_violation = Cfp::max_violation(&values);
        let feasible = values.iter().all(|&v| v <= tol);
        if feasible || k == config.n_max {
            return Ok(SeekOutcome {
                status: if feasible {
                    SeekStatus::Feasible
                } else {
                    SeekStatus::Exhausted
                },
                point: pt,
                values,
                steps: k,
                max_violation,
                best_relaxed: best,
            });
        }

        x = match perturb.as_mut() {
            Some(f) => {
                let mut y = pt.into_x();
                f(k, &mut y);
                if cfp.nonnegative {
                    clip_nonnegative(&mut y);
                }
                simultaneous_step(&y, cfp, config, c)?
            }
            None => step_from(&mut pt, &values, cfp, config, c)?,
        };
        k += 1;
    }
}

/// Distance helper for tests and diagnostics.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff)
}
