//! Causal solvers and well-posedness diagnostics for non-autonomous evolutionary equations
//!
//! ```text
//! (∂₀ M₀(m₀) + M₁(m₀) + A) u = F
//! ```
//!
//! posed in the exponentially weighted space `L²(ℝ, e^{−2ρt} dt; ℝᵈ)`. Time is discretized on a
//! uniform grid with backward differences, so every discrete solution operator is exactly causal.
//!
//! Everything is generic over the scalar [`Real`] (`f32` or `f64`); the `*64` aliases below fix
//! double precision.

// Negated comparisons are deliberate: NaN must fail every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evo_solver;
pub mod linalg;
pub mod material_law;
pub mod models;
pub mod perturbation;
pub mod scalar;
pub mod spatial_operator;
pub mod subspace;
pub mod weighted_time;

pub use error::{Error, Hypothesis, Result};
pub use evo_solver::{EvoProblem, SolveReport};
pub use material_law::{OperatorFamily, PosDefCertificate};
pub use perturbation::Perturbation;
pub use scalar::Real;
pub use spatial_operator::SkewOperator;
pub use subspace::SubspaceProjector;
pub use weighted_time::{TimeGrid, Trajectory, Weight};

pub type TimeGrid64 = TimeGrid<f64>;
pub type Weight64 = Weight<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type OperatorFamily64 = OperatorFamily<f64>;
pub type SkewOperator64 = SkewOperator<f64>;
pub type SubspaceProjector64 = SubspaceProjector<f64>;
pub type EvoProblem64 = EvoProblem<f64>;
pub type SolveReport64 = SolveReport<f64>;
