//! Stationary discounted logit equilibria for heterogeneous agent
//! populations coupled through a graphon.
//!
//! Actions and types both live on `[0, 1]` and are discretized by a
//! cell-centered [`grid::Grid`]. [`hjb::solve`] finds the discrete value
//! function, from which the occupation measure, the jump kernel and the mean
//! action per type follow. [`dynamics`] holds the myopic logit flow and the
//! discounted logit fixed point, and [`mc`] simulates the underlying jump
//! process for cross-checks.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csvio;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod field;
pub mod graphon;
pub mod grid;
pub mod hjb;
pub mod logit;
pub mod mc;
pub mod scenario;

pub use error::{Error, Result};
pub use exec::Execution;
pub use field::Field;
pub use graphon::GraphonKernel;
pub use grid::Grid;
pub use hjb::{SolveOutcome, SolverConfig, SolverMode, ValueField};
pub use scenario::{FisheryParams, MeasureField, RateProfiles, Scenario, Utility};
