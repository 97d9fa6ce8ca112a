//! Optimal threshold policy.
//!
//! The waiting policy is `w(z) = (τ* − z)⁺`, with `z` the previous epoch's
//! total service time and
//!
//! ```text
//! τ*(β) = max(G⁻¹(β), H⁻¹(c)),   c = [K/f_max − K/μ]⁺ / (1 − ε).
//! ```
//!
//! `β*` is the root of `β ↦ p(β, τ*(β))`, located by bisection on
//! `(0, Σ_k σ_k²/(2θ_k))`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analytic::{AnalyticContext, DEFAULT_TAU_TOL};
use crate::error::{Error, Result, SolverFailure};
use crate::model::SystemConfig;
use crate::special::DEFAULT_SERIES_TOL;

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPolicy {
    pub tau_star: f64,
    /// Minimum long-term average sum MSE.
    pub beta_star: f64,
    /// `G⁻¹(β*)`, the threshold the unconstrained problem would use.
    pub tau_unconstrained: f64,
    /// `H⁻¹(c)`, the smallest threshold meeting the sampling budget.
    pub tau_constrained: f64,
    /// Whether the sampling budget decides the threshold.
    pub binding: bool,
    /// `|p(β*, τ*)|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub beta_tol: f64,
    pub tau_tol: f64,
    pub series_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            beta_tol: 1e-9,
            tau_tol: DEFAULT_TAU_TOL,
            series_tol: DEFAULT_SERIES_TOL,
            max_iter: 200,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !(ok(self.beta_tol) && ok(self.tau_tol) && ok(self.series_tol)) {
            return Err(Error::domain(
                "solver tolerances must be positive and finite",
            ));
        }
        if !(self.series_tol < 1.0) {
            return Err(Error::domain("series_tol must be below 1"));
        }
        if self.max_iter < 1 {
            return Err(Error::domain("max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// Lower bound on the mean wait per epoch imposed by the sampling budget.
/// Zero whenever `f_max ≥ μ`.
pub fn constraint_level(config: &SystemConfig) -> f64 {
    let k = config.k as f64;
    let slack = k / config.f_max - k / config.mu;
    slack.max(0.0) / (1.0 - config.eps)
}

/// Threshold waiting rule: idle until `tau` time units have passed since
/// the previous epoch began service.
pub fn waiting(z: f64, tau: f64) -> f64 {
    (tau - z).max(0.0)
}

/// Long-term average sum MSE achieved by an arbitrary threshold.
pub fn policy_mse(config: &SystemConfig, tau: f64) -> Result<f64> {
    AnalyticContext::new(config)?.policy_mse(tau)
}

pub fn solve(config: &SystemConfig, settings: &SolverSettings) -> Result<OptimalPolicy> {
    settings.validate()?;
    let ctx = AnalyticContext::with_tolerances(config, settings.series_tol, settings.tau_tol)?;
    solve_with(&ctx, settings)
}

/// Solves with a prebuilt context, which must have been built with the
/// tolerances in `settings`.
pub fn solve_with(ctx: &AnalyticContext, settings: &SolverSettings) -> Result<OptimalPolicy> {
    let tau_constrained = ctx.h_inverse(constraint_level(ctx.config()))?;
    let threshold = |beta: f64| -> Result<(f64, f64)> {
        let tau_u = ctx.g_inverse(beta)?;
        Ok((tau_u, tau_u.max(tau_constrained)))
    };
    let objective = |beta: f64| -> Result<f64> {
        let (_, tau) = threshold(beta)?;
        ctx.dinkelbach_p(beta, tau)
    };

    let total = ctx.total_variance();
    let mut lo = total * 1e-12;
    let mut hi = total * (1.0 - 1e-12);
    let mut p_lo = objective(lo)?;
    let mut p_hi = objective(hi)?;
    if !(p_lo > 0.0 && p_hi < 0.0) {
        return Err(SolverFailure::NoSignChange {
            beta_lo: lo,
            p_lo,
            beta_hi: hi,
            p_hi,
        }
        .into());
    }

    let mut best = (lo, p_lo);
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = objective(mid)?;
        if p.abs() < best.1.abs() {
            best = (mid, p);
        }
        if p > p_lo || p < p_hi {
            warn!(
                "p(beta, tau(beta)) not monotone: p({lo:e}) = {p_lo:e}, p({mid:e}) = {p:e}, p({hi:e}) = {p_hi:e}"
            );
        }
        if p == 0.0 {
            break;
        }
        if p > 0.0 {
            lo = mid;
            p_lo = p;
        } else {
            hi = mid;
            p_hi = p;
        }
    }

    let (beta_star, p) = best;
    let (tau_unconstrained, tau_star) = threshold(beta_star)?;
    let residual = p.abs();
    if !(residual < settings.beta_tol) {
        return Err(SolverFailure::NonConvergence {
            iterations,
            best_beta: beta_star,
            best_tau: tau_star,
            residual,
        }
        .into());
    }
    Ok(OptimalPolicy {
        tau_star,
        beta_star,
        tau_unconstrained,
        tau_constrained,
        binding: tau_constrained > tau_unconstrained,
        residual,
    })
}
