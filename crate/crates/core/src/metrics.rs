//! Work counters. Dose-map multiplications are the unit of cost; projections,
//! gradient evaluations and accepted superiorization steps are tracked beside them.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub dose_mults: u64,
    pub projections: u64,
    pub gradient_evals: u64,
    pub sup_steps: u64,
}

impl Add for Counters {
    type Output = Counters;

    fn add(self, rhs: Counters) -> Counters {
        Counters {
            dose_mults: self.dose_mults + rhs.dose_mults,
            projections: self.projections + rhs.projections,
            gradient_evals: self.gradient_evals + rhs.gradient_evals,
            sup_steps: self.sup_steps + rhs.sup_steps,
        }
    }
}

impl AddAssign for Counters {
    fn add_assign(&mut self, rhs: Counters) {
        *self = *self + rhs;
    }
}

/// Counters for one segment of a run. Level 0 is the initial feasibility search.
///
/// Equality ignores `wall_time_s`, so two runs compare equal exactly when
/// their deterministic work counts and entry values agree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: usize,
    pub counters: Counters,
    /// φ_1..φ_M at the point the level started from; empty for level 0.
    pub phi_at_entry: Vec<f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl PartialEq for LevelMetrics {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level
            && self.counters == other.counters
            && self.phi_at_entry == other.phi_at_entry
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub levels: Vec<LevelMetrics>,
}

impl RunMetrics {
    pub fn total(&self) -> Counters {
        self.levels
            .iter()
            .fold(Counters::default(), |acc, l| acc + l.counters)
    }

    pub fn level(&self, level: usize) -> Option<&LevelMetrics> {
        self.levels.iter().find(|l| l.level == level)
    }
}
