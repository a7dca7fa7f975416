//! Superiorization: nonascending perturbations toward a secondary objective ψ,
//! interleaved with the feasibility-seeking steps of a level.

use crate::error::{Error, Result};
use crate::metrics::Counters;
use crate::model::{norm, DoseMatrix, EvalPoint, LexProblem, WeightedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentPolicy {
    /// Restart at `base^1` for every new direction, as in the printed pseudocode.
    ResetPerCall,
    /// One exponent for the whole run, advanced after every trial, so the
    /// accepted step sizes are summable.
    Persistent,
}

/// What a perturbation does when it would leave the nonnegative orthant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundHandling {
    /// Reject the candidate and try a smaller coefficient.
    Reject,
    /// Clip negative components to zero, then apply the ψ test. The clipped
    /// step is never longer than the unclipped one.
    Clip,
}

/// Which later objectives ψ is built from.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiSelection {
    /// ψ = φ_{μ+1}.
    NextGroup,
    /// ψ = Σ weight·φ_γ over the listed groups that come after the current level.
    Groups(Vec<(usize, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperiorizationConfig {
    /// Successful feasibility problems between superiorization bouts.
    pub k: usize,
    /// Maximum accepted perturbation steps per bout.
    pub lambda: usize,
    pub base: f64,
    pub min_stepsize: f64,
    pub exponent_policy: ExponentPolicy,
    pub bounds: BoundHandling,
    pub psi: PsiSelection,
}

impl SuperiorizationConfig {
    pub fn new(k: usize, lambda: usize) -> Self {
        SuperiorizationConfig {
            k,
            lambda,
            base: 0.5,
            min_stepsize: 1e-6,
            exponent_policy: ExponentPolicy::Persistent,
            bounds: BoundHandling::Clip,
            psi: PsiSelection::NextGroup,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.lambda == 0 {
            return Err(Error::invalid("K and Lambda must be at least 1"));
        }
        if !(self.base > 0.0 && self.base < 1.0) {
            return Err(Error::invalid(format!(
                "base must lie in (0, 1), got {}",
                self.base
            )));
        }
        if !(self.min_stepsize > 0.0) {
            return Err(Error::invalid("min_stepsize must be positive"));
        }
        if let PsiSelection::Groups(groups) = &self.psi {
            if groups.iter().any(|&(_, w)| !(w > 0.0)) {
                return Err(Error::invalid("psi group weights must be positive"));
            }
        }
        Ok(())
    }

    /// ψ for a run currently at `level`, or `None` when no later group applies.
    pub fn psi_for(&self, problem: &LexProblem, level: usize) -> Option<WeightedSum> {
        match &self.psi {
            PsiSelection::NextGroup => {
                (level < problem.levels()).then(|| problem.group(level + 1).objective.clone())
            }
            PsiSelection::Groups(groups) => {
                let mut functions = Vec::new();
                for &(g, w) in groups {
                    if g > level && g <= problem.levels() {
                        functions.extend(problem.group(g).objective.scaled(w).functions);
                    }
                }
                (!functions.is_empty()).then(|| WeightedSum::new(functions))
            }
        }
    }
}

/// `−∇ψ/‖∇ψ‖`, or zero where ∇ψ vanishes.
pub fn sup_direction(
    pt: &mut EvalPoint,
    psi: &WeightedSum,
    dose: &DoseMatrix,
    c: &mut Counters,
) -> Result<Vec<f64>> {
    let grad = psi.gradient(pt, dose, c)?;
    c.gradient_evals += 1;
    let n = norm(&grad);
    if n > 0.0 && n.is_finite() {
        Ok(grad.iter().map(|g| -g / n).collect())
    } else {
        Ok(vec![0.0; grad.len()])
    }
}

/// Runs perturbation bouts and remembers the step-size exponent between them.
#[derive(Debug, Clone)]
pub struct Superiorizer {
    config: SuperiorizationConfig,
    exponent: i32,
    accepted_total: f64,
}

impl Superiorizer {
    pub fn new(config: SuperiorizationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Superiorizer {
            config,
            exponent: 1,
            accepted_total: 0.0,
        })
    }

    pub fn config(&self) -> &SuperiorizationConfig {
        &self.config
    }

    /// Sum of every accepted step coefficient so far.
    pub fn accepted_total(&self) -> f64 {
        self.accepted_total
    }

    /// One bout: up to Λ accepted steps `x ← x + base^e · d`, each required to
    /// keep `x ≥ 0` (when asked) and not increase ψ. The result never has a
    /// larger ψ than the input.
    pub fn superiorize(
        &mut self,
        mut pt: EvalPoint,
        psi: &WeightedSum,
        dose: &DoseMatrix,
        nonnegative: bool,
        c: &mut Counters,
    ) -> Result<EvalPoint> {
        let cfg = &self.config;
        let mut accepted = 0usize;
        let mut big_enough = true;
        while accepted < cfg.lambda && big_enough {
            let mut direction = sup_direction(&mut pt, psi, dose, c)?;
            if nonnegative && cfg.bounds == BoundHandling::Clip {
                // components already pinned at zero cannot move further down
                for (d, &x) in direction.iter_mut().zip(pt.x()) {
                    if x <= 0.0 && *d < 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if direction.iter().all(|&v| v == 0.0) {
                break;
            }
            let psi_here = psi.value(&mut pt, dose, c)?;
            if cfg.exponent_policy == ExponentPolicy::ResetPerCall {
                self.exponent = 1;
            }
            loop {
                let coefficient = cfg.base.powi(self.exponent);
                let clip = nonnegative && cfg.bounds == BoundHandling::Clip;
                let candidate: Vec<f64> = pt
                    .x()
                    .iter()
                    .zip(&direction)
                    .map(|(x, d)| {
                        let v = x + coefficient * d;
                        if clip {
                            v.max(0.0)
                        } else {
                            v
                        }
                    })
                    .collect();
                let mut accept = !(nonnegative && candidate.iter().any(|&v| v < 0.0));
                let mut cand = EvalPoint::new(candidate);
                if accept {
                    accept = psi.value(&mut cand, dose, c)? <= psi_here;
                }
                if accept {
                    pt = cand;
                    accepted += 1;
                    c.sup_steps += 1;
                    self.accepted_total += coefficient;
                    if cfg.exponent_policy == ExponentPolicy::Persistent {
                        self.exponent += 1;
                    }
                    break;
                }
                if coefficient > cfg.min_stepsize {
                    self.exponent += 1;
                } else {
                    big_enough = false;
                    break;
                }
            }
        }
        Ok(pt)
    }
}
