//! Randomized checks shared by the property tests and the acceptance runner.
//! Each check returns a description of the first failure it finds.

#![allow(dead_code)]

use std::sync::Arc;

use lexsup::metrics::Counters;
use lexsup::model::{
    Constraint, DoseMatrix, EvalPoint, EvaluationFunction, PenaltyKind, Structure, WeightedSum,
};
use lexsup::projection::{seek_feasible_perturbed, simultaneous_step, Cfp, ProjectionConfig};
use lexsup::superiorize::{
    sup_direction, BoundHandling, ExponentPolicy, SuperiorizationConfig, Superiorizer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub const KINDS: [PenaltyKind; 3] = [
    PenaltyKind::LowerTail,
    PenaltyKind::UpperTail,
    PenaltyKind::MeanUpperTail,
];

pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Halfspaces `a·x ≤ a·z + slack` that all contain `z`.
pub fn system_around(rng: &mut ChaCha8Rng, z: &[f64], m: usize, slack: f64) -> Vec<Constraint> {
    (0..m)
        .map(|j| {
            let a = unit_vector(rng, z.len());
            let az: f64 = a.iter().zip(z).map(|(x, y)| x * y).sum();
            Constraint::affine(format!("h{j}"), a, -(az + slack))
        })
        .collect()
}

pub fn random_dose(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DoseMatrix {
    let mut triplets = Vec::new();
    for c in 0..cols {
        triplets.push((rng.gen_range(0..rows), c, rng.gen_range(0.1..2.0)));
        for r in 0..rows {
            if rng.gen_bool(0.4) {
                triplets.push((r, c, rng.gen_range(0.0..2.0)));
            }
        }
    }
    DoseMatrix::from_triplets(rows, cols, triplets).unwrap()
}

pub fn random_structure(rng: &mut ChaCha8Rng, rows: usize) -> Arc<Structure> {
    let mut voxels: Vec<usize> = (0..rows).filter(|_| rng.gen_bool(0.5)).collect();
    if voxels.is_empty() {
        voxels.push(rng.gen_range(0..rows));
    }
    Arc::new(Structure::new("s", voxels).unwrap())
}

/// One random halfspace: a single-constraint step with λ = 1 against the
/// closed-form projection.
pub fn halfspace_case(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..9);
    let a: Vec<f64> = loop {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if a.iter().map(|v| v * v).sum::<f64>() > 1e-2 {
            break a;
        }
    };
    let b: f64 = rng.gen_range(-10.0..10.0);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let p = DoseMatrix::identity(n).unwrap();
    let h = Constraint::affine("h", a.clone(), -b);
    let refs = [&h];
    let cfp = Cfp::new(&p, &refs, false);
    let got = simultaneous_step(
        &x,
        &cfp,
        &ProjectionConfig::default(),
        &mut Counters::default(),
    )
    .map_err(|e| e.to_string())?;
    let ax: f64 = a.iter().zip(&x).map(|(u, v)| u * v).sum();
    let aa: f64 = a.iter().map(|u| u * u).sum();
    for i in 0..n {
        let expected = if ax > b {
            x[i] - (ax - b) / aa * a[i]
        } else {
            x[i]
        };
        if (got[i] - expected).abs() > 1e-12 {
            return Err(format!(
                "seed {seed}: coordinate {i} is {} instead of {expected}",
                got[i]
            ));
        }
    }
    Ok(())
}

/// One random superiorize call: ψ must not increase, the direction has norm
/// at most 1 and nonnegativity is kept when requested.
pub fn psi_case(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.gen_range(1..10);
    let cols = rng.gen_range(1..8);
    let p = random_dose(&mut rng, rows, cols);
    let functions: Vec<EvaluationFunction> = (0..rng.gen_range(1..4))
        .map(|_| {
            let kind = KINDS[rng.gen_range(0..3)];
            let s = random_structure(&mut rng, rows);
            EvaluationFunction::penalty(kind, s, rng.gen_range(0.0..5.0), rng.gen_range(0.1..3.0))
                .unwrap()
        })
        .collect();
    let psi = WeightedSum::new(functions);
    let nonnegative = rng.gen_bool(0.7);
    let mut cfg = SuperiorizationConfig::new(1, rng.gen_range(1..9));
    cfg.base = rng.gen_range(0.05..0.95);
    cfg.exponent_policy = if rng.gen_bool(0.5) {
        ExponentPolicy::Persistent
    } else {
        ExponentPolicy::ResetPerCall
    };
    cfg.bounds = if rng.gen_bool(0.5) {
        BoundHandling::Clip
    } else {
        BoundHandling::Reject
    };
    let x: Vec<f64> = (0..cols)
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.0..4.0)
            }
        })
        .collect();

    let mut c = Counters::default();
    let mut start = EvalPoint::new(x.clone());
    let d = sup_direction(&mut start, &psi, &p, &mut c).map_err(|e| e.to_string())?;
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(format!("seed {seed}: direction norm {norm}"));
    }
    let before = psi
        .value(&mut start, &p, &mut c)
        .map_err(|e| e.to_string())?;
    let mut s = Superiorizer::new(cfg).map_err(|e| e.to_string())?;
    let mut out = s
        .superiorize(EvalPoint::new(x), &psi, &p, nonnegative, &mut c)
        .map_err(|e| e.to_string())?;
    let after = psi.value(&mut out, &p, &mut c).map_err(|e| e.to_string())?;
    if after > before {
        return Err(format!("seed {seed}: psi rose from {before} to {after}"));
    }
    if nonnegative && out.x().iter().any(|&v| v < 0.0) {
        return Err(format!("seed {seed}: negative component"));
    }
    Ok(())
}

/// `count` kink-free instances of `f ∘ P` for one penalty kind, comparing the
/// analytic gradient with central differences (step 1e-6).
pub fn gradient_cases(kind: PenaltyKind, seed: u64, count: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < count {
        attempts += 1;
        if attempts > 100 * count {
            return Err(format!("{kind:?}: too few kink-free samples"));
        }
        let rows = rng.gen_range(1..12);
        let cols = rng.gen_range(1..8);
        let p = random_dose(&mut rng, rows, cols);
        let s = random_structure(&mut rng, rows);
        let x: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.0..3.0)).collect();
        let dose = p.apply(&x, &mut Counters::default()).unwrap();
        let threshold = rng.gen_range(0.0..6.0);
        let gap = match kind {
            PenaltyKind::MeanUpperTail => {
                let mean = s.voxels().iter().map(|&i| dose[i]).sum::<f64>() / s.len() as f64;
                (mean - threshold).abs()
            }
            _ => s
                .voxels()
                .iter()
                .map(|&i| (dose[i] - threshold).abs())
                .fold(f64::INFINITY, f64::min),
        };
        if gap < 1e-2 {
            continue;
        }
        let weight = rng.gen_range(0.1..3.0);
        let psi = WeightedSum::new(vec![EvaluationFunction::penalty(
            kind, s, threshold, weight,
        )
        .unwrap()]);
        let mut c = Counters::default();
        let analytic = psi
            .gradient(&mut EvalPoint::new(x.clone()), &p, &mut c)
            .unwrap();
        let h = 1e-6;
        for i in 0..cols {
            let mut plus = x.clone();
            plus[i] += h;
            let mut minus = x.clone();
            minus[i] -= h;
            let fp = psi.value(&mut EvalPoint::new(plus), &p, &mut c).unwrap();
            let fm = psi.value(&mut EvalPoint::new(minus), &p, &mut c).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let err = (analytic[i] - fd).abs();
            if err > 1e-4 * analytic[i].abs().max(fd.abs()) && err > 1e-9 {
                return Err(format!(
                    "{kind:?} instance {checked} coord {i}: analytic {} vs fd {fd}",
                    analytic[i]
                ));
            }
        }
        checked += 1;
    }
    Ok(())
}

/// Feasibility seeking on `count` random consistent affine systems with the
/// perturbations `β_k v^k`, `β_k = 0.5^k`, `v^k` random unit vectors.
///
/// The systems have interior points, and over-relaxation (λ = 1.5) lets the
/// iterates enter the interior. With λ = 1 the approach to a face can stay
/// asymptotic even without any perturbation.
pub fn resilience_cases(seed: u64, count: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..count {
        let n = rng.gen_range(2..7);
        let m = rng.gen_range(2..12);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let constraints = system_around(&mut rng, &z, m, 0.5);
        let refs: Vec<&Constraint> = constraints.iter().collect();
        let p = DoseMatrix::identity(n).unwrap();
        let cfp = Cfp::new(&p, &refs, false);
        let config = ProjectionConfig {
            relaxation: 1.5,
            n_max: 20_000,
            ..ProjectionConfig::default()
        };
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let mut prng = ChaCha8Rng::seed_from_u64(seed ^ trial as u64);
        let mut perturb = |k: usize, y: &mut [f64]| {
            let beta = 0.5f64.powi(k as i32);
            let v = unit_vector(&mut prng, y.len());
            for (yi, vi) in y.iter_mut().zip(v) {
                *yi += beta * vi;
            }
        };
        let out =
            seek_feasible_perturbed(&x0, &cfp, &config, &mut Counters::default(), &mut perturb)
                .map_err(|e| e.to_string())?;
        if !out.is_feasible() {
            return Err(format!(
                "system {trial}: max violation {} after {} steps",
                out.max_violation, out.steps
            ));
        }
    }
    Ok(())
}
