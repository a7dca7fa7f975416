//! Level-set scheme for one optimization level: keep lowering the bound `t` on
//! φ_μ and re-solve the feasibility problem `{φ_μ ≤ t} ∩ Ω_j ∩ Ω^{δ,γ}` until it
//! fails or the bound reaches the level's floor.

use crate::error::Result;
use crate::metrics::Counters;
use crate::model::{Constraint, EvalPoint, LexProblem, WeightedSum};
use crate::projection::{seek_feasible, Cfp, ProjectionConfig};

/// Bound reduction `t = φ − max(fraction·|φ|, eps_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionConfig {
    pub fraction: f64,
    pub eps_abs: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            fraction: 0.1,
            eps_abs: 1e-6,
        }
    }
}

/// New bound strictly below `current`, clamped from below by `floor` (t_min for
/// penalty objectives, a known optimal value in validation runs).
pub fn reduce(current: f64, floor: Option<f64>, cfg: &ReductionConfig) -> f64 {
    let t = current - (cfg.fraction * current.abs()).max(cfg.eps_abs);
    match floor {
        Some(f) => t.max(f),
        None => t,
    }
}

/// Everything one level needs to know about the surrounding problem.
#[derive(Debug, Clone, Copy)]
pub struct LevelContext<'a> {
    pub problem: &'a LexProblem,
    /// 1-based μ.
    pub level: usize,
    /// `φ_γ ≤ φ_γ* + δ_γ` for γ < μ.
    pub lex_constraints: &'a [Constraint],
    pub floor: Option<f64>,
}

impl<'a> LevelContext<'a> {
    pub fn objective(&self) -> &'a WeightedSum {
        &self.problem.group(self.level).objective
    }

    pub fn phi(&self, pt: &mut EvalPoint, c: &mut Counters) -> Result<f64> {
        self.objective().value(pt, &self.problem.dose, c)
    }

    /// Hard and accumulated level constraints, without the objective bound.
    pub fn feasibility_constraints(&self) -> Vec<&'a Constraint> {
        self.problem
            .hard_constraints
            .iter()
            .chain(self.lex_constraints.iter())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LevelState {
    pub level: usize,
    /// Current bound t^{(μ)}; +∞ before the first feasibility problem of level 1.
    pub bound: f64,
    /// Where the next feasibility problem starts (possibly a superiorized point).
    pub current: EvalPoint,
    /// Latest point known to satisfy every hard and level constraint.
    pub best_feasible: EvalPoint,
    pub best_phi: f64,
    pub cfp_count: usize,
    pub cfp_success_count: usize,
    pub successful_bounds: Vec<f64>,
    pub finished: bool,
    pub phi_star: Option<f64>,
    /// The observer asked the whole run to stop.
    pub stop_requested: bool,
}

impl LevelState {
    /// `start` must already satisfy the hard and level constraints.
    pub fn new(level: usize, bound: f64, start: EvalPoint, start_phi: f64) -> Self {
        LevelState {
            level,
            bound,
            current: start.clone(),
            best_feasible: start,
            best_phi: start_phi,
            cfp_count: 0,
            cfp_success_count: 0,
            successful_bounds: Vec::new(),
            finished: false,
            phi_star: None,
            stop_requested: false,
        }
    }
}

/// Solves `{φ_μ ≤ t} ∩ Ω_j ∩ Ω^{δ,γ}` from `state.current`.
///
/// On failure the returned point is the lowest-φ iterate that satisfied every
/// constraint except the bound, or `state.best_feasible` if none did better.
pub fn find_feasible_solution(
    t: f64,
    state: &LevelState,
    ctx: &LevelContext<'_>,
    config: &ProjectionConfig,
    c: &mut Counters,
) -> Result<(EvalPoint, bool)> {
    let bound = Constraint::new(
        format!("phi_{} <= t", ctx.level),
        ctx.objective().clone(),
        t,
    );
    let mut constraints = ctx.feasibility_constraints();
    constraints.push(&bound);
    let objective = constraints.len() - 1;
    let cfp = Cfp::new(
        &ctx.problem.dose,
        &constraints,
        ctx.problem.nonnegative_vars,
    )
    .with_objective(objective);

    let outcome = seek_feasible(state.current.x(), &cfp, config, c)?;
    if outcome.is_feasible() {
        return Ok((outcome.point, true));
    }
    match outcome.best_relaxed {
        Some((pt, value)) if value + t < state.best_phi => Ok((pt, false)),
        _ => Ok((state.best_feasible.clone(), false)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Perturbation hook: takes the current point and returns the perturbed one.
pub type SupHook<'h> = &'h mut dyn FnMut(EvalPoint, &mut Counters) -> Result<EvalPoint>;

/// Hooks a level run calls out to.
pub struct LevelHooks<'h> {
    /// Perturbation applied after every `every`-th successful feasibility problem.
    pub superiorize: Option<(usize, SupHook<'h>)>,
    /// Sees every accepted (feasible) iterate; may stop the run.
    pub observe: &'h mut dyn FnMut(&EvalPoint) -> Result<Flow>,
}

/// Inner loop of the lexicographic level-set scheme for one level.
pub fn run_level(
    mut state: LevelState,
    ctx: &LevelContext<'_>,
    config: &ProjectionConfig,
    reduction: &ReductionConfig,
    hooks: LevelHooks<'_>,
    c: &mut Counters,
) -> Result<LevelState> {
    let LevelHooks {
        mut superiorize,
        observe,
    } = hooks;
    loop {
        let (mut pt, success) = find_feasible_solution(state.bound, &state, ctx, config, c)?;
        state.cfp_count += 1;
        let phi = ctx.phi(&mut pt, c)?;

        if !success {
            if observe(&pt)? == Flow::Stop {
                state.stop_requested = true;
            }
            state.best_feasible = pt.clone();
            state.best_phi = phi;
            state.current = pt;
            state.phi_star = Some(phi);
            state.finished = true;
            return Ok(state);
        }

        state.cfp_success_count += 1;
        state.successful_bounds.push(state.bound);
        state.best_feasible = pt.clone();
        state.best_phi = phi;
        let at_floor = ctx.floor.is_some_and(|f| state.bound <= f);
        if observe(&pt)? == Flow::Stop {
            state.stop_requested = true;
        }
        if at_floor || state.stop_requested {
            state.current = pt;
            state.phi_star = Some(phi);
            state.finished = true;
            return Ok(state);
        }

        let mut next = pt;
        let mut reference = phi;
        if let Some((every, hook)) = superiorize.as_mut() {
            if state.cfp_success_count.is_multiple_of(*every) {
                next = hook(next, c)?;
                reference = reference.min(ctx.phi(&mut next, c)?);
            }
        }
        state.current = next;
        state.bound = reduce(reference, ctx.floor, reduction);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DoseMatrix, EvaluationFunction, PriorityGroup};

    pub(crate) fn toy_problem() -> LexProblem {
        let affine = |c: [f64; 2]| EvaluationFunction::affine(c.to_vec(), 0.0, 1.0).unwrap();
        LexProblem {
            dose: DoseMatrix::identity(2).unwrap(),
            structures: vec![],
            hard_constraints: vec![
                Constraint::affine("c1", vec![2.0, 1.0], -150.0),
                Constraint::affine("c2", vec![2.0, 3.0], -300.0),
                Constraint::affine("c3", vec![4.0, 3.0], -360.0),
                Constraint::affine("c4", vec![-1.0, -2.0], 120.0),
                Constraint::affine("c5", vec![-1.0, 0.0], 0.0),
                Constraint::affine("c6", vec![0.0, -1.0], 0.0),
            ],
            groups: vec![
                PriorityGroup::new(1, vec![affine([-8.0, -12.0])]).unwrap(),
                PriorityGroup::new(2, vec![affine([-14.0, -10.0])]).unwrap(),
                PriorityGroup::new(3, vec![affine([-1.0, -1.0])]).unwrap(),
            ],
            delta_fraction: 0.0,
            nonnegative_vars: false,
            initial_point: Some(vec![0.0, 47.5]),
        }
    }

    fn start_state(problem: &LexProblem, x: Vec<f64>, bound: f64) -> LevelState {
        let mut pt = EvalPoint::new(x);
        let phi = problem.groups[0]
            .phi(&mut pt, &problem.dose, &mut Counters::default())
            .unwrap();
        LevelState::new(1, bound, pt, phi)
    }

    #[test]
    fn reduction_rule() {
        let cfg = ReductionConfig::default();
        assert_eq!(reduce(100.0, None, &cfg), 90.0);
        assert_eq!(reduce(-1000.0, None, &cfg), -1100.0);
        assert_eq!(reduce(0.0, None, &cfg), -1e-6);
        assert_eq!(reduce(0.0, Some(1e-8), &cfg), 1e-8);
        assert_eq!(reduce(5e-9, Some(1e-8), &cfg), 1e-8);
        assert_eq!(reduce(-1150.0, Some(-1200.0), &cfg), -1200.0);
    }

    #[test]
    fn consistent_bound_succeeds() {
        let problem = toy_problem();
        let ctx = LevelContext {
            problem: &problem,
            level: 1,
            lex_constraints: &[],
            floor: None,
        };
        let state = start_state(&problem, vec![5.0, 57.5], f64::INFINITY);
        let mut c = Counters::default();
        let (mut pt, ok) =
            find_feasible_solution(-100.0, &state, &ctx, &ProjectionConfig::default(), &mut c)
                .unwrap();
        assert!(ok);
        assert!(ctx.phi(&mut pt, &mut c).unwrap() <= -100.0 + 1e-8);
    }

    #[test]
    fn satisfied_bound_needs_no_projection() {
        let problem = toy_problem();
        let ctx = LevelContext {
            problem: &problem,
            level: 1,
            lex_constraints: &[],
            floor: None,
        };
        let state = start_state(&problem, vec![5.0, 57.5], f64::INFINITY);
        let mut c = Counters::default();
        let (pt, ok) = find_feasible_solution(
            state.best_phi,
            &state,
            &ctx,
            &ProjectionConfig::default(),
            &mut c,
        )
        .unwrap();
        assert!(ok);
        assert_eq!(pt.x(), &[5.0, 57.5]);
        assert_eq!(c.projections, 0);
    }

    #[test]
    fn bound_below_optimum_fails_with_feasible_point() {
        let problem = toy_problem();
        let ctx = LevelContext {
            problem: &problem,
            level: 1,
            lex_constraints: &[],
            floor: None,
        };
        let state = start_state(&problem, vec![5.0, 57.5], f64::INFINITY);
        let mut c = Counters::default();
        let cfg = ProjectionConfig {
            n_max: 200,
            ..Default::default()
        };
        let (mut pt, ok) = find_feasible_solution(-1300.0, &state, &ctx, &cfg, &mut c).unwrap();
        assert!(!ok);
        assert_eq!(c.projections, 200);
        let viol = problem.max_hard_violation(&mut pt, &mut c).unwrap();
        assert!(viol <= 1e-8);
        let phi = ctx.phi(&mut pt, &mut c).unwrap();
        assert!(phi > -1300.0 && (-1200.0 - 1e-6..=-730.0).contains(&phi));
    }

    #[test]
    fn toy_level_one_lands_within_reduction_gap() {
        let problem = toy_problem();
        let ctx = LevelContext {
            problem: &problem,
            level: 1,
            lex_constraints: &[],
            floor: None,
        };
        let state = start_state(&problem, vec![5.0, 57.5], f64::INFINITY);
        let mut c = Counters::default();
        let mut bounds_seen = Vec::new();
        let mut observe = |pt: &EvalPoint| {
            bounds_seen.push(pt.x().to_vec());
            Ok(Flow::Continue)
        };
        let out = run_level(
            state,
            &ctx,
            &ProjectionConfig::default(),
            &ReductionConfig::default(),
            LevelHooks {
                superiorize: None,
                observe: &mut observe,
            },
            &mut c,
        )
        .unwrap();
        let phi = out.phi_star.unwrap();
        assert!((-1200.0 - 1e-6..=-1080.0).contains(&phi), "phi* = {phi}");
        assert!(out.successful_bounds.windows(2).all(|w| w[1] < w[0]));
        for x in bounds_seen {
            let mut pt = EvalPoint::new(x);
            assert!(problem.max_hard_violation(&mut pt, &mut c).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn floor_ends_level_at_known_value() {
        let problem = toy_problem();
        let ctx = LevelContext {
            problem: &problem,
            level: 1,
            lex_constraints: &[],
            floor: Some(-1200.0),
        };
        let state = start_state(&problem, vec![5.0, 57.5], f64::INFINITY);
        let mut c = Counters::default();
        let mut observe = |_: &EvalPoint| Ok(Flow::Continue);
        let out = run_level(
            state,
            &ctx,
            &ProjectionConfig::default(),
            &ReductionConfig::default(),
            LevelHooks {
                superiorize: None,
                observe: &mut observe,
            },
            &mut c,
        )
        .unwrap();
        assert!((out.phi_star.unwrap() + 1200.0).abs() <= 1e-6);
        assert_eq!(*out.successful_bounds.last().unwrap(), -1200.0);
    }

    #[test]
    fn disabled_hook_matches_plain_run() {
        let problem = toy_problem();
        let ctx = LevelContext {
            problem: &problem,
            level: 1,
            lex_constraints: &[],
            floor: Some(-1200.0),
        };
        let run = |every: Option<usize>| {
            let mut c = Counters::default();
            let mut observe = |_: &EvalPoint| Ok(Flow::Continue);
            let mut hook = |pt: EvalPoint, _: &mut Counters| -> Result<EvalPoint> {
                Ok(EvalPoint::new(pt.x().iter().map(|v| v + 1.0).collect()))
            };
            let out = run_level(
                start_state(&problem, vec![5.0, 57.5], f64::INFINITY),
                &ctx,
                &ProjectionConfig::default(),
                &ReductionConfig::default(),
                LevelHooks {
                    superiorize: every.map(|k| {
                        (
                            k,
                            &mut hook
                                as &mut dyn FnMut(EvalPoint, &mut Counters) -> Result<EvalPoint>,
                        )
                    }),
                    observe: &mut observe,
                },
                &mut c,
            )
            .unwrap();
            (out.best_feasible.x().to_vec(), c)
        };
        assert_eq!(run(None), run(Some(usize::MAX)));
    }

    #[test]
    fn penalty_level_at_zero_is_solved_immediately() {
        use crate::model::{PenaltyKind, Structure};
        use std::sync::Arc;
        let s = Arc::new(Structure::new("organ", vec![0]).unwrap());
        let problem = LexProblem {
            dose: DoseMatrix::identity(1).unwrap(),
            structures: vec![s.clone()],
            hard_constraints: vec![],
            groups: vec![PriorityGroup::new(
                1,
                vec![EvaluationFunction::penalty(PenaltyKind::UpperTail, s, 5.0, 1.0).unwrap()],
            )
            .unwrap()],
            delta_fraction: 0.1,
            nonnegative_vars: true,
            initial_point: None,
        };
        let ctx = LevelContext {
            problem: &problem,
            level: 1,
            lex_constraints: &[],
            floor: Some(1e-8),
        };
        let cfg = ReductionConfig::default();
        let state = start_state(&problem, vec![0.0], reduce(0.0, ctx.floor, &cfg));
        let mut c = Counters::default();
        let mut observe = |_: &EvalPoint| Ok(Flow::Continue);
        let out = run_level(
            state,
            &ctx,
            &ProjectionConfig::default(),
            &cfg,
            LevelHooks {
                superiorize: None,
                observe: &mut observe,
            },
            &mut c,
        )
        .unwrap();
        assert!(out.phi_star.unwrap() <= 1e-8);
        assert_eq!(out.cfp_count, 1);
        assert_eq!(c.projections, 0);
    }
}
