//! Lexicographic multicriteria optimization by level-set feasibility problems,
//! simultaneous subgradient projections and superiorization.
//!
//! Each priority group φ_μ is minimized in turn. A level repeatedly lowers a
//! bound `t` and solves `{φ_μ ≤ t} ∩ Ω_j ∩ Ω^{δ,γ}` by projections; the first
//! failure (or reaching a floor such as t_min) fixes φ_μ*, and the slack
//! constraint `φ_μ ≤ φ_μ* + δ_μ` carries over to later levels. With
//! superiorization enabled, iterates are nudged along descent directions of the
//! next objective between feasibility problems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod levelset;
pub mod lexdriver;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod projection;
pub mod superiorize;

pub use error::{Error, Result};
pub use lexdriver::{solve_lex, LexSolution, SolveOptions, StopRule};
pub use model::{LexProblem, PriorityGroup};
