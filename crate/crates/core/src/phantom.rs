//! Synthetic IMRT-like phantoms: a voxel grid with geometric structures, a
//! ray-traced sparse dose matrix and a prioritized penalty model whose
//! constraint group is satisfiable by a reference plan.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Counters;
use crate::model::file::{ConstraintSpec, FunctionSpec, GroupSpec, ProblemFile};
use crate::model::{penalty_value, DoseMatrix, LexProblem, PenaltyKind, Structure};

/// Dose entries below this are dropped from the matrix.
pub const DROP_BELOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Organ,
    Tissue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Shell {
        center: [f64; 3],
        inner_radius: f64,
        outer_radius: f64,
    },
    /// Voxels within `width` of `around` but not in it.
    Margin {
        around: String,
        width: f64,
    },
    /// Every voxel outside the listed structures.
    Complement {
        of: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Min,
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpec {
    Absolute(f64),
    /// A fraction of the prescription dose.
    Prescription(f64),
    /// `factor ×` a statistic of the reference plan's dose on this structure.
    Reference {
        stat: Statistic,
        factor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Constraint,
    Group(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub priority: Priority,
    pub kind: PenaltyKindSpec,
    pub threshold: ThresholdSpec,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKindSpec {
    LowerTail,
    UpperTail,
    MeanUpperTail,
}

impl From<PenaltyKindSpec> for PenaltyKind {
    fn from(k: PenaltyKindSpec) -> Self {
        match k {
            PenaltyKindSpec::LowerTail => PenaltyKind::LowerTail,
            PenaltyKindSpec::UpperTail => PenaltyKind::UpperTail,
            PenaltyKindSpec::MeanUpperTail => PenaltyKind::MeanUpperTail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub name: String,
    pub shape: Shape,
    pub role: Role,
    #[serde(default)]
    pub objectives: Vec<ObjectiveSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    /// Exponential attenuation per voxel length of depth.
    pub attenuation: f64,
    /// Gaussian lateral falloff σ in voxels.
    pub lateral_sigma: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub grid: [usize; 3],
    pub beam_count: usize,
    /// Lateral beamlet positions per beam; each position is repeated once per z slice.
    pub beamlets_per_beam: usize,
    pub kernel: Kernel,
    pub structures: Vec<StructureSpec>,
    /// Mean target dose of the reference plan, in Gy.
    #[serde(default = "default_prescription")]
    pub prescription: f64,
    #[serde(default = "default_delta_fraction")]
    pub delta_fraction: f64,
    pub seed: u64,
}

fn default_prescription() -> f64 {
    60.0
}

fn default_delta_fraction() -> f64 {
    0.1
}

impl PhantomConfig {
    /// A 12³ phantom: spherical target, two organs at risk, a tissue margin
    /// and the remaining tissue, with one constraint group and three priority
    /// groups.
    pub fn standard(n: usize, seed: u64) -> Self {
        let c = (n as f64 - 1.0) / 2.0;
        let s = n as f64 / 12.0;
        let reference = |stat, factor| ThresholdSpec::Reference { stat, factor };
        let obj = |priority, kind, threshold| ObjectiveSpec {
            priority,
            kind,
            threshold,
            weight: 1.0,
        };
        use PenaltyKindSpec::*;
        use Priority::*;
        use Statistic::*;
        PhantomConfig {
            grid: [n, n, n],
            beam_count: 5,
            beamlets_per_beam: (2 * n / 3).max(1),
            kernel: Kernel {
                attenuation: 0.03,
                lateral_sigma: 0.6,
                amplitude: 1.0,
            },
            structures: vec![
                StructureSpec {
                    name: "target".into(),
                    shape: Shape::Sphere {
                        center: [c, c, c],
                        radius: 2.6 * s,
                    },
                    role: Role::Target,
                    objectives: vec![
                        obj(Constraint, LowerTail, reference(Min, 0.95)),
                        obj(Constraint, UpperTail, reference(Max, 1.05)),
                        obj(Constraint, MeanUpperTail, reference(Mean, 1.03)),
                    ],
                },
                StructureSpec {
                    name: "spinal_cord".into(),
                    shape: Shape::Box {
                        min: [c - 1.0 * s, c + 4.0 * s, 0.0],
                        max: [c + 1.0 * s, c + 5.5 * s, n as f64 - 1.0],
                    },
                    role: Role::Organ,
                    objectives: vec![
                        obj(Constraint, UpperTail, reference(Max, 1.05)),
                        obj(Group(1), MeanUpperTail, reference(Mean, 0.6)),
                    ],
                },
                StructureSpec {
                    name: "parotid".into(),
                    shape: Shape::Sphere {
                        center: [c + 4.0 * s, c - 2.5 * s, c],
                        radius: 1.8 * s,
                    },
                    role: Role::Organ,
                    objectives: vec![
                        obj(Group(1), UpperTail, reference(Max, 0.7)),
                        obj(Group(2), MeanUpperTail, reference(Mean, 0.5)),
                    ],
                },
                StructureSpec {
                    name: "margin".into(),
                    shape: Shape::Margin {
                        around: "target".into(),
                        width: 2.0 * s,
                    },
                    role: Role::Tissue,
                    objectives: vec![
                        obj(Group(2), MeanUpperTail, reference(Mean, 0.6)),
                        obj(Group(3), UpperTail, reference(Max, 0.8)),
                    ],
                },
                StructureSpec {
                    name: "tissue".into(),
                    shape: Shape::Complement {
                        of: vec!["target".into(), "margin".into()],
                    },
                    role: Role::Tissue,
                    objectives: vec![obj(Group(3), MeanUpperTail, reference(Mean, 0.5))],
                },
            ],
            prescription: 60.0,
            delta_fraction: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.contains(&0) {
            return Err(Error::invalid("phantom grid dimensions must be at least 1"));
        }
        if self.beam_count == 0 || self.beamlets_per_beam == 0 {
            return Err(Error::invalid(
                "phantom needs at least one beam and one beamlet",
            ));
        }
        if !(self.kernel.attenuation >= 0.0)
            || !(self.kernel.lateral_sigma > 0.0)
            || !(self.kernel.amplitude > 0.0)
        {
            return Err(Error::invalid(
                "kernel needs attenuation >= 0, sigma > 0, amplitude > 0",
            ));
        }
        if !(self.prescription > 0.0) {
            return Err(Error::invalid("prescription must be positive"));
        }
        let mut names = BTreeSet::new();
        for s in &self.structures {
            if !names.insert(s.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate structure name `{}`",
                    s.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    n: [usize; 3],
}

impl Grid {
    fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    fn coords(&self, idx: usize) -> [f64; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i as f64, j as f64, k as f64]
    }

    fn center(&self) -> [f64; 3] {
        [
            (self.n[0] as f64 - 1.0) / 2.0,
            (self.n[1] as f64 - 1.0) / 2.0,
            (self.n[2] as f64 - 1.0) / 2.0,
        ]
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Assigns voxels to structures. Targets claim voxels first; organs and
/// tissue never include target voxels.
fn build_structures(cfg: &PhantomConfig, grid: Grid) -> Result<Vec<(String, Vec<usize>)>> {
    let mut sets: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    let mut target_voxels = BTreeSet::new();

    let mut order: Vec<&StructureSpec> = cfg.structures.iter().collect();
    // targets first, then explicit shapes, then derived shapes in listed order
    order.sort_by_key(|s| {
        let derived = matches!(s.shape, Shape::Margin { .. } | Shape::Complement { .. });
        (s.role != Role::Target, derived)
    });

    for spec in order {
        let voxels: BTreeSet<usize> = match &spec.shape {
            Shape::Sphere { center, radius } => (0..grid.len())
                .filter(|&v| dist2(grid.coords(v), *center) <= radius * radius)
                .collect(),
            Shape::Box { min, max } => (0..grid.len())
                .filter(|&v| {
                    let p = grid.coords(v);
                    (0..3).all(|k| p[k] >= min[k] && p[k] <= max[k])
                })
                .collect(),
            Shape::Shell {
                center,
                inner_radius,
                outer_radius,
            } => (0..grid.len())
                .filter(|&v| {
                    let d2 = dist2(grid.coords(v), *center);
                    d2 > inner_radius * inner_radius && d2 <= outer_radius * outer_radius
                })
                .collect(),
            Shape::Margin { around, width } => {
                let base = sets.get(around).ok_or_else(|| {
                    Error::invalid(format!(
                        "margin `{}` refers to unknown or later structure `{around}`",
                        spec.name
                    ))
                })?;
                let base_pts: Vec<[f64; 3]> = base.iter().map(|&v| grid.coords(v)).collect();
                (0..grid.len())
                    .filter(|v| !base.contains(v))
                    .filter(|&v| {
                        let p = grid.coords(v);
                        base_pts.iter().any(|&q| dist2(p, q) <= width * width)
                    })
                    .collect()
            }
            Shape::Complement { of } => {
                let mut excluded = BTreeSet::new();
                for name in of {
                    let set = sets.get(name).ok_or_else(|| {
                        Error::invalid(format!(
                            "complement `{}` refers to unknown or later structure `{name}`",
                            spec.name
                        ))
                    })?;
                    excluded.extend(set.iter().copied());
                }
                (0..grid.len()).filter(|v| !excluded.contains(v)).collect()
            }
        };
        let voxels: BTreeSet<usize> = if spec.role == Role::Target {
            target_voxels.extend(voxels.iter().copied());
            voxels
        } else {
            voxels.difference(&target_voxels).copied().collect()
        };
        if voxels.is_empty() {
            return Err(Error::invalid(format!(
                "structure `{}` contains no voxels",
                spec.name
            )));
        }
        sets.insert(spec.name.clone(), voxels);
    }

    Ok(cfg
        .structures
        .iter()
        .map(|s| (s.name.clone(), sets[&s.name].iter().copied().collect()))
        .collect())
}

struct Beamlet {
    direction: [f64; 3],
    lateral: [f64; 3],
    offset: f64,
    z: f64,
    output: f64,
}

fn beamlets(cfg: &PhantomConfig, grid: Grid) -> Vec<Beamlet> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = grid.n[0].max(grid.n[1]) as f64;
    let spacing = width / cfg.beamlets_per_beam as f64;
    let mut out = Vec::with_capacity(cfg.beam_count * cfg.beamlets_per_beam * grid.n[2]);
    for b in 0..cfg.beam_count {
        let theta = 2.0 * PI * b as f64 / cfg.beam_count as f64;
        let direction = [theta.cos(), theta.sin(), 0.0];
        let lateral = [-theta.sin(), theta.cos(), 0.0];
        for j in 0..cfg.beamlets_per_beam {
            let offset = (j as f64 - (cfg.beamlets_per_beam as f64 - 1.0) / 2.0) * spacing;
            for z in 0..grid.n[2] {
                out.push(Beamlet {
                    direction,
                    lateral,
                    offset,
                    z: z as f64,
                    // per-beamlet output calibration
                    output: rng.gen_range(0.95..1.05),
                });
            }
        }
    }
    out
}

fn ray_trace(cfg: &PhantomConfig, grid: Grid, beams: &[Beamlet]) -> Result<DoseMatrix> {
    let c = grid.center();
    let half_diag = 0.5 * (((grid.n[0] - 1).pow(2) + (grid.n[1] - 1).pow(2)) as f64).sqrt();
    let two_sigma2 = 2.0 * cfg.kernel.lateral_sigma.powi(2);
    let mut triplets = Vec::new();
    for (col, beam) in beams.iter().enumerate() {
        for v in 0..grid.len() {
            let p = grid.coords(v);
            let rel = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            let along: f64 = (0..3).map(|k| rel[k] * beam.direction[k]).sum();
            let across: f64 = (0..3).map(|k| rel[k] * beam.lateral[k]).sum::<f64>() - beam.offset;
            let r2 = across * across + (p[2] - beam.z).powi(2);
            let depth = along + half_diag;
            let value = cfg.kernel.amplitude
                * beam.output
                * (-cfg.kernel.attenuation * depth).exp()
                * (-r2 / two_sigma2).exp();
            if value >= DROP_BELOW {
                triplets.push((v, col, value));
            }
        }
    }
    let dose = DoseMatrix::from_triplets(grid.len(), beams.len(), triplets)?;
    if let Some(col) = dose.column_nnz().iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "beamlet {col} deposits no dose in the grid"
        )));
    }
    Ok(dose)
}

fn stat(dose: &[f64], voxels: &[usize], s: Statistic) -> f64 {
    let it = voxels.iter().map(|&i| dose[i]);
    match s {
        Statistic::Min => it.fold(f64::INFINITY, f64::min),
        Statistic::Max => it.fold(f64::NEG_INFINITY, f64::max),
        Statistic::Mean => it.sum::<f64>() / voxels.len() as f64,
    }
}

/// A constraint threshold that the reference plan violated and was loosened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub structure: String,
    pub kind: String,
    pub requested: f64,
    pub relaxed_to: f64,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub dose: DoseMatrix,
    pub problem_file: ProblemFile,
    pub problem: LexProblem,
    /// Witness fluence satisfying every constraint-group threshold.
    pub reference_fluence: Vec<f64>,
    pub relaxations: Vec<Relaxation>,
}

pub fn generate_phantom(cfg: &PhantomConfig) -> Result<Phantom> {
    cfg.validate()?;
    let grid = Grid { n: cfg.grid };
    let structures = build_structures(cfg, grid)?;
    let beams = beamlets(cfg, grid);
    let dose = ray_trace(cfg, grid, &beams)?;

    // Reference plan: open every beamlet whose central ray passes close to a
    // target voxel, then scale to the prescription.
    let target_voxels: Vec<usize> = cfg
        .structures
        .iter()
        .zip(&structures)
        .filter(|(s, _)| s.role == Role::Target)
        .flat_map(|(_, (_, v))| v.iter().copied())
        .collect();
    if target_voxels.is_empty() {
        return Err(Error::invalid(
            "phantom needs at least one target structure",
        ));
    }
    let c = grid.center();
    let reach = cfg.kernel.lateral_sigma.max(0.5);
    let mut reference: Vec<f64> = beams
        .iter()
        .map(|b| {
            let hit = target_voxels.iter().any(|&v| {
                let p = grid.coords(v);
                let across: f64 =
                    (0..3).map(|k| (p[k] - c[k]) * b.lateral[k]).sum::<f64>() - b.offset;
                across * across + (p[2] - b.z).powi(2) <= reach * reach
            });
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    if reference.iter().all(|&v| v == 0.0) {
        reference.iter_mut().for_each(|v| *v = 1.0);
    }
    let mut scratch = Counters::default();
    let ref_dose = dose.apply(&reference, &mut scratch)?;
    let mean_target = stat(&ref_dose, &target_voxels, Statistic::Mean);
    if !(mean_target > 0.0) {
        return Err(Error::invalid(
            "reference plan deposits no dose in the target",
        ));
    }
    let scale = cfg.prescription / mean_target;
    reference.iter_mut().for_each(|v| *v *= scale);
    let ref_dose: Vec<f64> = ref_dose.iter().map(|d| d * scale).collect();

    let mut hard_constraints = Vec::new();
    let mut groups: BTreeMap<usize, Vec<FunctionSpec>> = BTreeMap::new();
    let mut relaxations = Vec::new();
    for (spec, (name, voxels)) in cfg.structures.iter().zip(&structures) {
        for obj in &spec.objectives {
            let kind: PenaltyKind = obj.kind.into();
            let mut threshold = match obj.threshold {
                ThresholdSpec::Absolute(v) => v,
                ThresholdSpec::Prescription(f) => f * cfg.prescription,
                ThresholdSpec::Reference { stat: s, factor } => factor * stat(&ref_dose, voxels, s),
            };
            match obj.priority {
                Priority::Constraint => {
                    if penalty_value(kind, voxels, threshold, &ref_dose) > 0.0 {
                        let relaxed = match kind {
                            PenaltyKind::LowerTail => stat(&ref_dose, voxels, Statistic::Min),
                            PenaltyKind::UpperTail => stat(&ref_dose, voxels, Statistic::Max),
                            PenaltyKind::MeanUpperTail => stat(&ref_dose, voxels, Statistic::Mean),
                        };
                        relaxations.push(Relaxation {
                            structure: name.clone(),
                            kind: kind.as_str().into(),
                            requested: threshold,
                            relaxed_to: relaxed,
                        });
                        threshold = relaxed;
                    }
                    hard_constraints.push(ConstraintSpec::penalty(
                        kind,
                        name.clone(),
                        threshold,
                        None,
                    ));
                }
                Priority::Group(g) => {
                    if g == 0 {
                        return Err(Error::invalid("priority groups are numbered from 1"));
                    }
                    groups.entry(g).or_default().push(FunctionSpec::penalty(
                        kind,
                        name.clone(),
                        threshold,
                        obj.weight,
                    ));
                }
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::invalid("phantom defines no priority groups"));
    }

    let problem_file = ProblemFile {
        n_vars: dose.cols(),
        dose_matrix: "dose.mtx".into(),
        structures: structures.iter().cloned().collect(),
        hard_constraints,
        groups: groups
            .into_iter()
            .map(|(index, functions)| GroupSpec { index, functions })
            .collect(),
        delta_fraction: cfg.delta_fraction,
        nonnegative_vars: true,
        initial_point: None,
    };
    let problem = problem_file.build_with_matrix(dose.clone())?;
    Ok(Phantom {
        dose,
        problem_file,
        problem,
        reference_fluence: reference,
        relaxations,
    })
}

/// Cumulative dose-volume histogram: `(t, fraction of voxels with d ≥ t)` for
/// `t = 0, w, 2w, ...` up to the first bin past the maximum dose.
pub fn dvh(dose: &[f64], structure: &Structure, bin_width: f64) -> Result<Vec<(f64, f64)>> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::invalid(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    if structure.is_empty() {
        return Err(Error::invalid(format!(
            "structure `{}` is empty",
            structure.name()
        )));
    }
    let mut values: Vec<f64> = Vec::with_capacity(structure.len());
    for &i in structure.voxels() {
        let d = *dose.get(i).ok_or_else(|| {
            Error::invalid(format!(
                "structure `{}` voxel {i} outside dose vector",
                structure.name()
            ))
        })?;
        values.push(d);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let max = *values.last().unwrap();
    let bins = (max.max(0.0) / bin_width).floor() as usize + 1;
    let mut curve = Vec::with_capacity(bins + 1);
    for b in 0..=bins {
        let t = b as f64 * bin_width;
        let below = values.partition_point(|&d| d < t);
        curve.push((t, (values.len() - below) as f64 / n));
    }
    Ok(curve)
}
