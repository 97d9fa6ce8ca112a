use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("solver failure: {0}")]
    Solver(#[from] SolverFailure),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Reasons the optimal-policy root-finder can give up.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverFailure {
    #[error(
        "objective does not change sign on the bracket: p({beta_lo:e}) = {p_lo:e}, p({beta_hi:e}) = {p_hi:e}"
    )]
    NoSignChange {
        beta_lo: f64,
        p_lo: f64,
        beta_hi: f64,
        p_hi: f64,
    },

    #[error(
        "no convergence after {iterations} iterations: best beta = {best_beta}, tau = {best_tau}, |p| = {residual:e}"
    )]
    NonConvergence {
        iterations: usize,
        best_beta: f64,
        best_tau: f64,
        residual: f64,
    },

    #[error("could not bracket the inverse of {function} at level {level}")]
    Bracket { function: &'static str, level: f64 },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
