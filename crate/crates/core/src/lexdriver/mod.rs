//! The lexicographic level-set scheme end to end: initial feasibility, one
//! level-set run per priority group, slack constraints between levels, and
//! optional superiorization toward later objectives.

mod compare;
mod sweep;

use std::time::Instant;

pub use compare::{compare_runs, RatioRow, RunSummary};
pub use sweep::{sweep_parameters, GridPoint, SweepReport};

use crate::error::{Error, Result};
use crate::levelset::{
    reduce, run_level, Flow, LevelContext, LevelHooks, LevelState, ReductionConfig, SupHook,
};
use crate::metrics::{Counters, LevelMetrics, RunMetrics};
use crate::model::{Constraint, EvalPoint, LexProblem};
use crate::projection::{seek_feasible, Cfp, ProjectionConfig};
use crate::superiorize::{SuperiorizationConfig, Superiorizer};

/// Solve threshold for penalty objectives, whose minimum possible value is 0.
pub const T_MIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum StopRule {
    /// Penalty levels end at t_min; other levels end at their first failed
    /// feasibility problem.
    Tmin,
    /// Validation mode: the known optimal values φ_μ(x*) act as per-level
    /// floors and the run stops once ‖Φ(x) − Φ(x*)‖ ≤ tolerance.
    KnownOptimum { x: Vec<f64>, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub projection: ProjectionConfig,
    pub reduction: ReductionConfig,
    pub superiorization: Option<SuperiorizationConfig>,
    pub stop_rule: StopRule,
    pub t_min: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            projection: ProjectionConfig::default(),
            reduction: ReductionConfig::default(),
            superiorization: None,
            stop_rule: StopRule::Tmin,
            t_min: T_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub index: usize,
    pub level: usize,
    pub phi: Vec<f64>,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexSolution {
    pub x_final: Vec<f64>,
    pub phi_stars: Vec<f64>,
    /// δ_μ used for each level's slack constraint.
    pub deltas: Vec<f64>,
    pub per_level_solutions: Vec<Vec<f64>>,
    pub phi_final: Vec<f64>,
    pub metrics: RunMetrics,
    pub max_constraint_violation: f64,
    pub trajectory: Vec<TrajectoryRow>,
    /// Set when the known-optimum stop rule ended the run.
    pub stopped_early: bool,
}

/// Instrumentation: Φ and hard-constraint violation without touching the run's counters.
fn snapshot(problem: &LexProblem, pt: &EvalPoint) -> Result<(Vec<f64>, f64)> {
    let mut scratch = Counters::default();
    let mut probe = pt.clone();
    let phi = problem.phi_all(&mut probe, &mut scratch)?;
    let viol = problem.max_hard_violation(&mut probe, &mut scratch)?;
    Ok((phi, viol))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn solve_lex(problem: &LexProblem, options: &SolveOptions) -> Result<LexSolution> {
    problem.validate()?;
    options.projection.validate()?;
    let m = problem.levels();

    let known_phi = match &options.stop_rule {
        StopRule::KnownOptimum { x, .. } => {
            if x.len() != problem.n_vars() {
                return Err(Error::invalid(format!(
                    "known optimum has {} entries, problem has {} variables",
                    x.len(),
                    problem.n_vars()
                )));
            }
            Some(snapshot(problem, &EvalPoint::new(x.clone()))?.0)
        }
        StopRule::Tmin => None,
    };
    let tolerance = match &options.stop_rule {
        StopRule::KnownOptimum { tolerance, .. } => *tolerance,
        StopRule::Tmin => 0.0,
    };
    let floor_for = |level: usize| -> Option<f64> {
        if let Some(phi) = &known_phi {
            return Some(phi[level - 1]);
        }
        problem
            .group(level)
            .objective
            .is_penalty_only()
            .then_some(options.t_min)
    };

    let mut superiorizer = options
        .superiorization
        .clone()
        .map(Superiorizer::new)
        .transpose()?;

    let mut metrics = RunMetrics::default();
    let mut trajectory = Vec::new();

    // initial feasibility seeking over the hard constraints
    let started = Instant::now();
    let mut counters = Counters::default();
    let x0 = problem
        .initial_point
        .clone()
        .unwrap_or_else(|| vec![0.0; problem.n_vars()]);
    let hard: Vec<&Constraint> = problem.hard_constraints.iter().collect();
    let cfp = Cfp::new(&problem.dose, &hard, problem.nonnegative_vars);
    let outcome = seek_feasible(&x0, &cfp, &options.projection, &mut counters)?;
    if !outcome.is_feasible() {
        return Err(Error::Infeasible {
            steps: outcome.steps,
            max_violation: outcome.max_violation,
        });
    }
    let mut current = outcome.point;
    metrics.levels.push(LevelMetrics {
        level: 0,
        counters,
        phi_at_entry: Vec::new(),
        wall_time_s: started.elapsed().as_secs_f64(),
    });

    let near_optimum = |phi: &[f64]| {
        known_phi
            .as_ref()
            .is_some_and(|k| distance(phi, k) <= tolerance)
    };
    let (phi0, viol0) = snapshot(problem, &current)?;
    let mut stopped = near_optimum(&phi0);
    trajectory.push(TrajectoryRow {
        index: 0,
        level: 0,
        phi: phi0,
        max_violation: viol0,
    });

    let mut lex_constraints: Vec<Constraint> = Vec::with_capacity(m);
    let mut phi_stars = Vec::with_capacity(m);
    let mut deltas = Vec::with_capacity(m);
    let mut per_level_solutions = Vec::with_capacity(m);

    for level in 1..=m {
        let started = Instant::now();
        let mut counters = Counters::default();
        let (entry_phi, entry_viol) = snapshot(problem, &current)?;
        trajectory.push(TrajectoryRow {
            index: trajectory.len(),
            level,
            phi: entry_phi.clone(),
            max_violation: entry_viol,
        });

        let ctx = LevelContext {
            problem,
            level,
            lex_constraints: &lex_constraints,
            floor: floor_for(level),
        };

        let phi_star = if stopped {
            entry_phi[level - 1]
        } else {
            let start_phi = ctx.phi(&mut current, &mut counters)?;
            let bound = if level == 1 {
                f64::INFINITY
            } else {
                reduce(start_phi, ctx.floor, &options.reduction)
            };
            let state = LevelState::new(level, bound, current.clone(), start_phi);

            let psi = superiorizer
                .as_ref()
                .and_then(|s| s.config().psi_for(problem, level));
            let mut observe = |pt: &EvalPoint| -> Result<Flow> {
                let (phi, viol) = snapshot(problem, pt)?;
                let flow = if near_optimum(&phi) {
                    Flow::Stop
                } else {
                    Flow::Continue
                };
                trajectory.push(TrajectoryRow {
                    index: trajectory.len(),
                    level,
                    phi,
                    max_violation: viol,
                });
                Ok(flow)
            };
            let nonnegative = problem.nonnegative_vars;
            let mut hook;
            let sup_every;
            let superiorize: Option<(usize, SupHook<'_>)> =
                match (superiorizer.as_mut(), psi.as_ref()) {
                    (Some(s), Some(psi)) => {
                        sup_every = s.config().k;
                        hook = move |pt: EvalPoint, c: &mut Counters| {
                            s.superiorize(pt, psi, &problem.dose, nonnegative, c)
                        };
                        Some((sup_every, &mut hook))
                    }
                    _ => None,
                };
            let state = run_level(
                state,
                &ctx,
                &options.projection,
                &options.reduction,
                LevelHooks {
                    superiorize,
                    observe: &mut observe,
                },
                &mut counters,
            )?;
            stopped = stopped || state.stop_requested;
            current = state.best_feasible;
            state.phi_star.expect("finished level records phi*")
        };

        let delta = problem.delta_fraction * phi_star.abs();
        lex_constraints.push(Constraint::new(
            format!("phi_{level} <= phi*_{level} + delta"),
            problem.group(level).objective.clone(),
            phi_star + delta,
        ));
        phi_stars.push(phi_star);
        deltas.push(delta);
        per_level_solutions.push(current.x().to_vec());
        metrics.levels.push(LevelMetrics {
            level,
            counters,
            phi_at_entry: entry_phi,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    let (phi_final, max_violation) = snapshot(problem, &current)?;
    Ok(LexSolution {
        x_final: current.into_x(),
        phi_stars,
        deltas,
        per_level_solutions,
        phi_final,
        metrics,
        max_constraint_violation: max_violation,
        trajectory,
        stopped_early: stopped,
    })
}
