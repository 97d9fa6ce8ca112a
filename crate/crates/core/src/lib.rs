//! Optimal timely sampling of independent Ornstein-Uhlenbeck processes that
//! share one sensor, one exponential server and one erasure channel.
//!
//! * [`optimizer::solve`] computes the optimal threshold waiting policy and
//!   its long-term average sum MSE from closed forms.
//! * [`simulator::run`] replays the sensing loop epoch by epoch with exact
//!   distributions and measures the same quantities empirically.
//! * [`verify`] holds Monte Carlo and quadrature oracles for the closed forms.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod simulator;
pub mod special;
pub mod sweep;
pub mod verify;

pub use analytic::AnalyticContext;
pub use error::{Error, Result, SolverFailure};
pub use model::{SystemConfig, Violation};
pub use optimizer::{solve, OptimalPolicy, SolverSettings};
pub use simulator::{SimOptions, SimulationStats, WaitMode};
