//! Problem data: dose map, planning structures, penalty functionals, priority
//! groups and constraints, together with their values and gradients.

mod dose;
pub mod file;

use std::sync::Arc;

pub use dose::DoseMatrix;

use crate::error::{check_len, Error, Result};
use crate::metrics::Counters;

/// A planning structure: a set of voxel (dose-vector) indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    name: String,
    voxels: Vec<usize>,
}

impl Structure {
    pub fn new(name: impl Into<String>, voxels: Vec<usize>) -> Result<Self> {
        let name = name.into();
        if voxels.is_empty() {
            return Err(Error::invalid(format!("structure `{name}` has no voxels")));
        }
        if voxels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "structure `{name}` voxel indices must be strictly increasing"
            )));
        }
        Ok(Structure { name, voxels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyKind {
    LowerTail,
    UpperTail,
    MeanUpperTail,
}

impl PenaltyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::LowerTail => "lower_tail",
            PenaltyKind::UpperTail => "upper_tail",
            PenaltyKind::MeanUpperTail => "mean_upper_tail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionKind {
    /// Quadratic tail penalty on a structure's dose.
    Penalty {
        kind: PenaltyKind,
        structure: Arc<Structure>,
        threshold: f64,
    },
    /// `coeffs · x + offset`, evaluated on the fluence directly.
    Affine { coeffs: Vec<f64>, offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationFunction {
    pub kind: FunctionKind,
    pub weight: f64,
}

impl EvaluationFunction {
    pub fn penalty(
        kind: PenaltyKind,
        structure: Arc<Structure>,
        threshold: f64,
        weight: f64,
    ) -> Result<Self> {
        Self::checked(
            FunctionKind::Penalty {
                kind,
                structure,
                threshold,
            },
            weight,
        )
    }

    pub fn affine(coeffs: Vec<f64>, offset: f64, weight: f64) -> Result<Self> {
        Self::checked(FunctionKind::Affine { coeffs, offset }, weight)
    }

    fn checked(kind: FunctionKind, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::invalid(format!(
                "evaluation function weight must be positive, got {weight}"
            )));
        }
        Ok(EvaluationFunction { kind, weight })
    }

    pub fn needs_dose(&self) -> bool {
        matches!(self.kind, FunctionKind::Penalty { .. })
    }

    pub fn is_penalty(&self) -> bool {
        self.needs_dose()
    }

    /// Unweighted value. Penalty kinds read `dose`, affine kinds read `x`.
    pub fn value(&self, x: &[f64], dose: &[f64]) -> f64 {
        match &self.kind {
            FunctionKind::Affine { coeffs, offset } => dot(coeffs, x) + offset,
            FunctionKind::Penalty {
                kind,
                structure,
                threshold,
            } => penalty_value(*kind, structure.voxels(), *threshold, dose),
        }
    }

    /// Adds `scale · ∇_d f(d)` into `out` (voxel space). No-op for affine kinds.
    pub fn accumulate_dose_gradient(&self, dose: &[f64], scale: f64, out: &mut [f64]) {
        if let FunctionKind::Penalty {
            kind,
            structure,
            threshold,
        } = &self.kind
        {
            penalty_gradient(*kind, structure.voxels(), *threshold, dose, scale, out);
        }
    }

    /// Subgradient with respect to the dose vector.
    pub fn dose_gradient(&self, dose: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; dose.len()];
        self.accumulate_dose_gradient(dose, 1.0, &mut out);
        out
    }
}

pub fn penalty_value(kind: PenaltyKind, voxels: &[usize], threshold: f64, dose: &[f64]) -> f64 {
    let n = voxels.len() as f64;
    match kind {
        PenaltyKind::LowerTail => {
            voxels
                .iter()
                .map(|&i| (threshold - dose[i]).max(0.0).powi(2))
                .sum::<f64>()
                / n
        }
        PenaltyKind::UpperTail => {
            voxels
                .iter()
                .map(|&i| (dose[i] - threshold).max(0.0).powi(2))
                .sum::<f64>()
                / n
        }
        PenaltyKind::MeanUpperTail => {
            let mean = voxels.iter().map(|&i| dose[i]).sum::<f64>() / n;
            (mean - threshold).max(0.0).powi(2)
        }
    }
}

// One-sided derivative at the kink: the flat side wins, so the gradient is zero
// whenever the penalty is zero.
fn penalty_gradient(
    kind: PenaltyKind,
    voxels: &[usize],
    threshold: f64,
    dose: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    let c = 2.0 * scale / voxels.len() as f64;
    match kind {
        PenaltyKind::LowerTail => {
            for &i in voxels {
                let gap = threshold - dose[i];
                if gap > 0.0 {
                    out[i] -= c * gap;
                }
            }
        }
        PenaltyKind::UpperTail => {
            for &i in voxels {
                let excess = dose[i] - threshold;
                if excess > 0.0 {
                    out[i] += c * excess;
                }
            }
        }
        PenaltyKind::MeanUpperTail => {
            let mean = voxels.iter().map(|&i| dose[i]).sum::<f64>() / voxels.len() as f64;
            let excess = mean - threshold;
            if excess > 0.0 {
                for &i in voxels {
                    out[i] += c * excess;
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A fluence vector together with its lazily computed dose `P x`.
///
/// The dose is computed at most once per point, so any number of functional
/// evaluations at the same `x` costs a single counted multiplication.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    x: Vec<f64>,
    dose: Option<Vec<f64>>,
}

impl EvalPoint {
    pub fn new(x: Vec<f64>) -> Self {
        EvalPoint { x, dose: None }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn into_x(self) -> Vec<f64> {
        self.x
    }

    pub fn has_dose(&self) -> bool {
        self.dose.is_some()
    }

    pub fn dose(&mut self, p: &DoseMatrix, counters: &mut Counters) -> Result<&[f64]> {
        if self.dose.is_none() {
            self.dose = Some(p.apply(&self.x, counters)?);
        }
        Ok(self.dose.as_deref().unwrap())
    }

    fn parts(&self) -> (&[f64], &[f64]) {
        (&self.x, self.dose.as_deref().unwrap_or(&[]))
    }
}

/// `Σ w_i f_i`: the common shape of priority-group objectives, constraint
/// functionals and superiorization targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedSum {
    pub functions: Vec<EvaluationFunction>,
}

impl WeightedSum {
    pub fn new(functions: Vec<EvaluationFunction>) -> Self {
        WeightedSum { functions }
    }

    pub fn needs_dose(&self) -> bool {
        self.functions.iter().any(EvaluationFunction::needs_dose)
    }

    pub fn is_penalty_only(&self) -> bool {
        !self.functions.is_empty() && self.functions.iter().all(EvaluationFunction::is_penalty)
    }

    pub fn scaled(&self, factor: f64) -> WeightedSum {
        WeightedSum {
            functions: self
                .functions
                .iter()
                .map(|f| EvaluationFunction {
                    kind: f.kind.clone(),
                    weight: f.weight * factor,
                })
                .collect(),
        }
    }

    pub fn value(&self, pt: &mut EvalPoint, p: &DoseMatrix, c: &mut Counters) -> Result<f64> {
        if self.needs_dose() {
            pt.dose(p, c)?;
        }
        let (x, d) = pt.parts();
        Ok(self.value_at(x, d))
    }

    /// Value at a point whose dose (if needed) is already known.
    pub fn value_at(&self, x: &[f64], dose: &[f64]) -> f64 {
        self.functions
            .iter()
            .map(|f| f.weight * f.value(x, dose))
            .sum()
    }

    /// Gradient in fluence space: affine coefficients plus `Pᵀ Σ w_i ∇f_i(P x)`.
    pub fn gradient(
        &self,
        pt: &mut EvalPoint,
        p: &DoseMatrix,
        c: &mut Counters,
    ) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; pt.x().len()];
        if self.needs_dose() {
            pt.dose(p, c)?;
            let (_, d) = pt.parts();
            let mut voxel_grad = vec![0.0; d.len()];
            for f in &self.functions {
                f.accumulate_dose_gradient(d, f.weight, &mut voxel_grad);
            }
            grad = p.apply_transpose(&voxel_grad, c)?;
        }
        for f in &self.functions {
            if let FunctionKind::Affine { coeffs, .. } = &f.kind {
                for (g, a) in grad.iter_mut().zip(coeffs) {
                    *g += f.weight * a;
                }
            }
        }
        Ok(grad)
    }
}

/// Priority group I_μ with objective φ_μ = Σ_{i∈I_μ} w_i f_i.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityGroup {
    pub index: usize,
    pub objective: WeightedSum,
}

impl PriorityGroup {
    pub fn new(index: usize, functions: Vec<EvaluationFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::invalid(format!("priority group {index} is empty")));
        }
        Ok(PriorityGroup {
            index,
            objective: WeightedSum::new(functions),
        })
    }

    pub fn phi(&self, pt: &mut EvalPoint, p: &DoseMatrix, c: &mut Counters) -> Result<f64> {
        self.objective.value(pt, p, c)
    }

    pub fn phi_gradient(
        &self,
        pt: &mut EvalPoint,
        p: &DoseMatrix,
        c: &mut Counters,
    ) -> Result<Vec<f64>> {
        self.objective.gradient(pt, p, c)
    }
}

/// Convex constraint `g(x) = Σ w_i f_i(x) − bound ≤ 0`.
///
/// Hard constraints use bound 0 (an affine `a·x + offset`, or a penalty that
/// must vanish). Level-set bounds and lexicographic slack constraints reuse the
/// same shape with a group objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub body: WeightedSum,
    pub bound: f64,
}

impl Constraint {
    pub fn new(label: impl Into<String>, body: WeightedSum, bound: f64) -> Self {
        Constraint {
            label: label.into(),
            body,
            bound,
        }
    }

    /// `coeffs · x + offset ≤ 0`.
    pub fn affine(label: impl Into<String>, coeffs: Vec<f64>, offset: f64) -> Self {
        let f = EvaluationFunction {
            kind: FunctionKind::Affine { coeffs, offset },
            weight: 1.0,
        };
        Constraint::new(label, WeightedSum::new(vec![f]), 0.0)
    }

    /// `f(P x) ≤ 0` for a single penalty functional.
    pub fn penalty(
        label: impl Into<String>,
        kind: PenaltyKind,
        structure: Arc<Structure>,
        threshold: f64,
    ) -> Self {
        let f = EvaluationFunction {
            kind: FunctionKind::Penalty {
                kind,
                structure,
                threshold,
            },
            weight: 1.0,
        };
        Constraint::new(label, WeightedSum::new(vec![f]), 0.0)
    }

    pub fn value(&self, pt: &mut EvalPoint, p: &DoseMatrix, c: &mut Counters) -> Result<f64> {
        Ok(self.body.value(pt, p, c)? - self.bound)
    }

    pub fn value_at(&self, x: &[f64], dose: &[f64]) -> f64 {
        self.body.value_at(x, dose) - self.bound
    }

    pub fn subgradient(
        &self,
        pt: &mut EvalPoint,
        p: &DoseMatrix,
        c: &mut Counters,
    ) -> Result<Vec<f64>> {
        self.body.gradient(pt, p, c)
    }
}

/// A full lexicographic instance: min φ_1, then φ_2, ... subject to the hard
/// constraints and the slack constraints of earlier levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LexProblem {
    pub dose: DoseMatrix,
    pub structures: Vec<Arc<Structure>>,
    pub hard_constraints: Vec<Constraint>,
    pub groups: Vec<PriorityGroup>,
    pub delta_fraction: f64,
    pub nonnegative_vars: bool,
    pub initial_point: Option<Vec<f64>>,
}

impl LexProblem {
    pub fn n_vars(&self) -> usize {
        self.dose.cols()
    }

    pub fn levels(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, level: usize) -> &PriorityGroup {
        &self.groups[level - 1]
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.dose.rows();
        let cols = self.dose.cols();
        if self.groups.is_empty() {
            return Err(Error::invalid("problem has no priority groups"));
        }
        for (k, g) in self.groups.iter().enumerate() {
            if g.index != k + 1 {
                return Err(Error::invalid(format!(
                    "priority group indices must be 1..M without gaps; position {} has index {}",
                    k + 1,
                    g.index
                )));
            }
            if g.objective.functions.is_empty() {
                return Err(Error::invalid(format!(
                    "priority group {} is empty",
                    g.index
                )));
            }
        }
        if !(self.delta_fraction >= 0.0) || !self.delta_fraction.is_finite() {
            return Err(Error::invalid(format!(
                "delta_fraction must be nonnegative, got {}",
                self.delta_fraction
            )));
        }
        let bodies = self
            .hard_constraints
            .iter()
            .map(|c| &c.body)
            .chain(self.groups.iter().map(|g| &g.objective));
        for body in bodies {
            for f in &body.functions {
                match &f.kind {
                    FunctionKind::Affine { coeffs, offset } => {
                        check_len("affine coefficients", cols, coeffs.len())?;
                        if coeffs.iter().chain([offset]).any(|v| !v.is_finite()) {
                            return Err(Error::invalid("affine coefficients must be finite"));
                        }
                    }
                    FunctionKind::Penalty {
                        structure,
                        threshold,
                        ..
                    } => {
                        if !threshold.is_finite() {
                            return Err(Error::invalid(format!(
                                "threshold on `{}` must be finite",
                                structure.name()
                            )));
                        }
                        if let Some(&last) = structure.voxels().last() {
                            if last >= rows {
                                return Err(Error::invalid(format!(
                                    "structure `{}` references voxel {last} but the dose matrix has {rows} rows",
                                    structure.name()
                                )));
                            }
                        }
                    }
                }
            }
        }
        if let Some(x0) = &self.initial_point {
            check_len("initial point", cols, x0.len())?;
        }
        Ok(())
    }

    /// Φ(x) = (φ_1(x), ..., φ_M(x)).
    pub fn phi_all(&self, pt: &mut EvalPoint, c: &mut Counters) -> Result<Vec<f64>> {
        self.groups
            .iter()
            .map(|g| g.phi(pt, &self.dose, c))
            .collect()
    }

    /// Largest positive hard-constraint value at `pt` (0 when feasible).
    pub fn max_hard_violation(&self, pt: &mut EvalPoint, c: &mut Counters) -> Result<f64> {
        let mut worst = 0.0f64;
        for con in &self.hard_constraints {
            worst = worst.max(con.value(pt, &self.dose, c)?);
        }
        if self.nonnegative_vars {
            for &v in pt.x() {
                worst = worst.max(-v);
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn structure(voxels: Vec<usize>) -> Arc<Structure> {
        Arc::new(Structure::new("s", voxels).unwrap())
    }

    fn pen(kind: PenaltyKind, voxels: Vec<usize>, t: f64) -> EvaluationFunction {
        EvaluationFunction::penalty(kind, structure(voxels), t, 1.0).unwrap()
    }

    #[test]
    fn hand_evaluated_penalties() {
        let low = pen(PenaltyKind::LowerTail, vec![0, 1], 10.0);
        assert_eq!(low.value(&[], &[8.0, 12.0]), 2.0);
        let up = pen(PenaltyKind::UpperTail, vec![0, 1], 10.0);
        assert_eq!(up.value(&[], &[8.0, 9.0]), 0.0);
        let mean = pen(PenaltyKind::MeanUpperTail, vec![0, 1, 2], 5.0);
        assert_eq!(mean.value(&[], &[6.0, 6.0, 6.0]), 1.0);
    }

    #[test]
    fn hand_evaluated_gradients() {
        let low = pen(PenaltyKind::LowerTail, vec![0, 1], 10.0);
        assert_eq!(low.dose_gradient(&[8.0, 12.0]), vec![-2.0, 0.0]);
        let up = pen(PenaltyKind::UpperTail, vec![0, 1], 10.0);
        assert_eq!(up.dose_gradient(&[8.0, 9.0]), vec![0.0, 0.0]);
        // kink: d_i == threshold takes the flat side
        assert_eq!(up.dose_gradient(&[10.0, 10.0]), vec![0.0, 0.0]);
        let mean = pen(PenaltyKind::MeanUpperTail, vec![0, 2], 5.0);
        assert_eq!(mean.dose_gradient(&[6.0, 100.0, 6.0]), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn structure_invariants() {
        assert!(Structure::new("a", vec![]).is_err());
        assert!(Structure::new("a", vec![1, 1]).is_err());
        assert!(Structure::new("a", vec![2, 1]).is_err());
        assert!(Structure::new("a", vec![0, 3]).is_ok());
    }

    #[test]
    fn weight_must_be_positive() {
        assert!(EvaluationFunction::affine(vec![1.0], 0.0, 0.0).is_err());
        assert!(EvaluationFunction::affine(vec![1.0], 0.0, -1.0).is_err());
        assert!(EvaluationFunction::affine(vec![1.0], 0.0, f64::NAN).is_err());
    }

    #[test]
    fn toy_phi_and_gradient() {
        let p = DoseMatrix::identity(2).unwrap();
        let g = PriorityGroup::new(
            1,
            vec![EvaluationFunction::affine(vec![-8.0, -12.0], 0.0, 1.0).unwrap()],
        )
        .unwrap();
        let mut c = Counters::default();
        let mut pt = EvalPoint::new(vec![30.0, 80.0]);
        assert_eq!(g.phi(&mut pt, &p, &mut c).unwrap(), -1200.0);
        assert_eq!(
            g.phi_gradient(&mut pt, &p, &mut c).unwrap(),
            vec![-8.0, -12.0]
        );
        // affine functions never touch the dose map
        assert_eq!(c.dose_mults, 0);
    }

    #[test]
    fn weighted_sum_by_hand() {
        let p = DoseMatrix::identity(2).unwrap();
        let s = structure(vec![0]);
        // each penalty equals 1 at d = (11, 9)
        let f1 = EvaluationFunction::penalty(PenaltyKind::UpperTail, s.clone(), 10.0, 2.0).unwrap();
        let f2 = EvaluationFunction::penalty(PenaltyKind::LowerTail, structure(vec![1]), 10.0, 3.0)
            .unwrap();
        let g = PriorityGroup::new(1, vec![f1, f2]).unwrap();
        let mut c = Counters::default();
        let mut pt = EvalPoint::new(vec![11.0, 9.0]);
        assert_eq!(g.phi(&mut pt, &p, &mut c).unwrap(), 5.0);
        let zero = PriorityGroup::new(
            2,
            vec![
                EvaluationFunction::penalty(PenaltyKind::UpperTail, s.clone(), 20.0, 1.0).unwrap(),
                EvaluationFunction::penalty(PenaltyKind::MeanUpperTail, s, 20.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(zero.phi(&mut pt, &p, &mut c).unwrap(), 0.0);
        assert_eq!(
            zero.phi_gradient(&mut pt, &p, &mut c).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn dose_is_computed_once_per_point() {
        let p = DoseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let g = PriorityGroup::new(1, vec![pen(PenaltyKind::UpperTail, vec![0, 1], 1.0)]).unwrap();
        let mut c = Counters::default();
        let mut pt = EvalPoint::new(vec![3.0, 3.0]);
        g.phi(&mut pt, &p, &mut c).unwrap();
        g.phi(&mut pt, &p, &mut c).unwrap();
        assert_eq!(c.dose_mults, 1);
        g.phi_gradient(&mut pt, &p, &mut c).unwrap();
        assert_eq!(c.dose_mults, 2);
        let mut moved = EvalPoint::new(vec![1.0, 1.0]);
        g.phi(&mut moved, &p, &mut c).unwrap();
        assert_eq!(c.dose_mults, 3);
    }

    fn kinds() -> impl Strategy<Value = PenaltyKind> {
        prop_oneof![
            Just(PenaltyKind::LowerTail),
            Just(PenaltyKind::UpperTail),
            Just(PenaltyKind::MeanUpperTail)
        ]
    }

    proptest! {
        #[test]
        fn penalties_are_nonnegative_and_zero_iff_satisfied(
            kind in kinds(),
            d in prop::collection::vec(0.0f64..20.0, 4),
            t in 0.0f64..20.0,
        ) {
            let f = pen(kind, vec![0, 1, 2, 3], t);
            let v = f.value(&[], &d);
            prop_assert!(v >= 0.0);
            let satisfied = match kind {
                PenaltyKind::LowerTail => d.iter().all(|&x| x >= t),
                PenaltyKind::UpperTail => d.iter().all(|&x| x <= t),
                PenaltyKind::MeanUpperTail => d.iter().sum::<f64>() / 4.0 <= t,
            };
            prop_assert_eq!(v == 0.0, satisfied);
        }

        #[test]
        fn penalties_are_convex(
            kind in kinds(),
            d1 in prop::collection::vec(0.0f64..20.0, 4),
            d2 in prop::collection::vec(0.0f64..20.0, 4),
            lam in 0.0f64..=1.0,
            t in 0.0f64..20.0,
        ) {
            let f = pen(kind, vec![0, 1, 2, 3], t);
            let mid: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            let lhs = f.value(&[], &mid);
            let rhs = lam * f.value(&[], &d1) + (1.0 - lam) * f.value(&[], &d2);
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn doubling_weights_doubles_phi(
            d in prop::collection::vec(0.0f64..20.0, 3),
            w in prop::collection::vec(0.1f64..5.0, 3),
        ) {
            let p = DoseMatrix::identity(3).unwrap();
            let build = |scale: f64| {
                PriorityGroup::new(1, vec![
                    EvaluationFunction::penalty(PenaltyKind::LowerTail, structure(vec![0, 1]), 10.0, w[0] * scale).unwrap(),
                    EvaluationFunction::penalty(PenaltyKind::UpperTail, structure(vec![1, 2]), 5.0, w[1] * scale).unwrap(),
                    EvaluationFunction::penalty(PenaltyKind::MeanUpperTail, structure(vec![0, 2]), 4.0, w[2] * scale).unwrap(),
                ]).unwrap()
            };
            let mut c = Counters::default();
            let a = build(1.0).phi(&mut EvalPoint::new(d.clone()), &p, &mut c).unwrap();
            let b = build(2.0).phi(&mut EvalPoint::new(d), &p, &mut c).unwrap();
            prop_assert_eq!(b, 2.0 * a);
        }
    }

    #[test]
    fn validate_catches_bad_structure_index() {
        let s = Arc::new(Structure::new("far", vec![5]).unwrap());
        let problem = LexProblem {
            dose: DoseMatrix::identity(2).unwrap(),
            structures: vec![s.clone()],
            hard_constraints: vec![],
            groups: vec![PriorityGroup::new(
                1,
                vec![EvaluationFunction::penalty(PenaltyKind::UpperTail, s, 1.0, 1.0).unwrap()],
            )
            .unwrap()],
            delta_fraction: 0.1,
            nonnegative_vars: true,
            initial_point: None,
        };
        assert!(problem.validate().is_err());
    }

    #[test]
    fn validate_catches_group_gaps() {
        let f = EvaluationFunction::affine(vec![1.0], 0.0, 1.0).unwrap();
        let problem = LexProblem {
            dose: DoseMatrix::identity(1).unwrap(),
            structures: vec![],
            hard_constraints: vec![],
            groups: vec![
                PriorityGroup::new(1, vec![f.clone()]).unwrap(),
                PriorityGroup::new(3, vec![f]).unwrap(),
            ],
            delta_fraction: 0.0,
            nonnegative_vars: false,
            initial_point: None,
        };
        assert!(problem.validate().is_err());
    }

    #[test]
    fn gradient_chain_rule_matches_hand_value() {
        // d = P x with P = [[1, 2]]; f = upper tail U = 1 on voxel 0.
        let p = DoseMatrix::from_triplets(1, 2, vec![(0, 0, 1.0), (0, 1, 2.0)]).unwrap();
        let g = PriorityGroup::new(1, vec![pen(PenaltyKind::UpperTail, vec![0], 1.0)]).unwrap();
        let mut c = Counters::default();
        let mut pt = EvalPoint::new(vec![1.0, 1.0]);
        // d = 3, f = 4, df/dd = 4, gradient = Pᵀ 4 = (4, 8)
        assert_relative_eq!(g.phi(&mut pt, &p, &mut c).unwrap(), 4.0);
        assert_eq!(g.phi_gradient(&mut pt, &p, &mut c).unwrap(), vec![4.0, 8.0]);
        assert_eq!(c.dose_mults, 2);
    }
}
