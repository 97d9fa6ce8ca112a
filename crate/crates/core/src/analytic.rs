//! Closed-form functionals of the threshold policy.
//!
//! Let `Ỹ` be the total service time spent in one epoch: the sum of `ρ`
//! independent `exp(μ)` service times, where the attempt count `ρ` is
//! negative binomial with `K` successes of probability `1 − ε`. Under the
//! threshold policy `w(z) = (τ − z)⁺` the functionals below are
//!
//! * `G(τ) = Σ_k v_k (1 − E[e^{−2θ_k Y}] e^{−2θ_k τ})`, with `v_k = σ_k²/(2θ_k)`
//! * `H(τ) = E[(τ − Ỹ)⁺]`, the mean waiting time
//! * `F_k(τ) = E[e^{−2θ_k max(τ, Ỹ)}]`
//!
//! and the Dinkelbach objective
//!
//! ```text
//! p(β, τ) = Σ_k v_k (E[Γ] − (1/2θ_k)·(μ/(2θ_k+μ))·(1 − F_k(τ))) − β E[Γ],
//! E[Γ]    = H(τ) + K/(μ(1 − ε)).
//! ```
//!
//! `H` and `F_k` are evaluated as series over the attempt count, truncated
//! by a [`TruncationPlan`].

use crate::error::{Error, Result, SolverFailure};
use crate::model::SystemConfig;
use crate::special::{make_truncation_plan, negbin_pmf, upper_gamma_ladder, TruncationPlan};

pub const DEFAULT_TAU_TOL: f64 = 1e-12;

/// Bracket doublings before an inversion gives up.
const MAX_DOUBLINGS: usize = 1100;

/// Immutable evaluation context for one [`SystemConfig`].
#[derive(Debug, Clone)]
pub struct AnalyticContext {
    config: SystemConfig,
    plan: TruncationPlan,
    /// Negative-binomial weights over `plan.range()`.
    weights: Vec<f64>,
    /// `E[e^{−2θ_k Y}] = μ/(μ + 2θ_k)` for `Y ~ exp(μ)`.
    laplace_service: Vec<f64>,
    variances: Vec<f64>,
    mean_service: f64,
    tau_tol: f64,
}

impl AnalyticContext {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        Self::with_tolerances(config, crate::special::DEFAULT_SERIES_TOL, DEFAULT_TAU_TOL)
    }

    pub fn with_tolerances(config: &SystemConfig, series_tol: f64, tau_tol: f64) -> Result<Self> {
        config.ensure_valid()?;
        if !(tau_tol > 0.0) {
            return Err(Error::domain(format!(
                "tau tolerance must be positive, got {tau_tol}"
            )));
        }
        let k = u32::try_from(config.k).map_err(|_| Error::domain("too many processes"))?;
        let plan = make_truncation_plan(k, config.eps, series_tol)?;
        let weights = plan
            .range()
            .map(|rho| negbin_pmf(rho, k, config.eps))
            .collect::<Result<Vec<_>>>()?;
        let mu = config.mu;
        let laplace_service = config.theta.iter().map(|&t| mu / (mu + 2.0 * t)).collect();
        Ok(AnalyticContext {
            variances: config.stationary_variances(),
            mean_service: config.k as f64 / (mu * (1.0 - config.eps)),
            config: config.clone(),
            plan,
            weights,
            laplace_service,
            tau_tol,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn plan(&self) -> &TruncationPlan {
        &self.plan
    }

    pub fn laplace_service(&self) -> &[f64] {
        &self.laplace_service
    }

    /// `Σ_k σ_k²/(2θ_k)`.
    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }

    /// `E[Ỹ] = K/(μ(1 − ε))`, by Wald's identity.
    pub fn mean_epoch_service(&self) -> f64 {
        self.mean_service
    }

    pub fn g_fn(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self.g_at(tau))
    }

    fn g_at(&self, tau: f64) -> f64 {
        self.config
            .theta
            .iter()
            .zip(&self.variances)
            .zip(&self.laplace_service)
            .map(|((&theta, &v), &l)| v * (1.0 - l * (-2.0 * theta * tau).exp()))
            .sum()
    }

    /// Smallest `τ ≥ 0` with `G(τ) = beta`; zero when `beta ≤ G(0)`.
    pub fn g_inverse(&self, beta: f64) -> Result<f64> {
        let total = self.total_variance();
        if !(beta < total) {
            return Err(Error::domain(format!(
                "no finite threshold reaches beta = {beta}; G is bounded by {total}"
            )));
        }
        if beta <= self.g_at(0.0) {
            return Ok(0.0);
        }
        invert_increasing(|t| self.g_at(t), beta, self.tau_tol, "G")
    }

    pub fn h_fn(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self.h_at(tau))
    }

    fn h_at(&self, tau: f64) -> f64 {
        if tau == 0.0 {
            return 0.0;
        }
        let mu = self.config.mu;
        let q = upper_gamma_ladder(mu * tau, self.plan.rho_max + 1);
        self.series_sum(|rho, w| {
            let r = rho as usize;
            let lower = 1.0 - q[r];
            let lower_next = 1.0 - q[r + 1];
            w * (tau * lower - rho as f64 / mu * lower_next)
        })
    }

    /// `τ` with `H(τ) = c`; the bracket grows by doubling.
    pub fn h_inverse(&self, c: f64) -> Result<f64> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain(format!(
                "waiting level must be finite and >= 0, got {c}"
            )));
        }
        if c == 0.0 {
            return Ok(0.0);
        }
        invert_increasing(|t| self.h_at(t), c, self.tau_tol, "H")
    }

    /// `F_k(τ)` for the zero-based process index `k`.
    pub fn f_fn(&self, tau: f64, k: usize) -> Result<f64> {
        check_tau(tau)?;
        if k >= self.config.k {
            return Err(Error::domain(format!(
                "process index {k} out of range for K = {}",
                self.config.k
            )));
        }
        let q_service = upper_gamma_ladder(self.config.mu * tau, self.plan.rho_max);
        Ok(self.f_with(tau, k, &q_service))
    }

    fn f_with(&self, tau: f64, k: usize, q_service: &[f64]) -> f64 {
        let theta = self.config.theta[k];
        let mu = self.config.mu;
        let l = self.laplace_service[k];
        let kill = (-2.0 * theta * tau).exp();
        let q_fast = upper_gamma_ladder((2.0 * theta + mu) * tau, self.plan.rho_max);
        self.series_sum(|rho, w| {
            let r = rho as usize;
            w * (kill * (1.0 - q_service[r]) + l.powi(rho as i32) * q_fast[r])
        })
    }

    /// `P(Ỹ ≤ τ)`: the negative-binomial mixture of Gamma CDFs, and the
    /// derivative of `H`.
    pub fn epoch_service_cdf(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let q = upper_gamma_ladder(self.config.mu * tau, self.plan.rho_max);
        Ok(self.series_sum(|rho, w| w * (1.0 - q[rho as usize])))
    }

    /// `E[Γ] = H(τ) + K/(μ(1 − ε))`.
    pub fn mean_epoch_length(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self.h_at(tau) + self.mean_service)
    }

    /// Expected integrated sum MSE over one epoch and the expected epoch
    /// length, both at threshold `tau`.
    pub fn ratio_terms(&self, tau: f64) -> Result<(f64, f64)> {
        check_tau(tau)?;
        Ok(self.ratio_terms_at(tau))
    }

    fn ratio_terms_at(&self, tau: f64) -> (f64, f64) {
        let length = self.h_at(tau) + self.mean_service;
        let q_service = upper_gamma_ladder(self.config.mu * tau, self.plan.rho_max);
        let numerator = (0..self.config.k)
            .map(|k| {
                let theta = self.config.theta[k];
                let f = self.f_with(tau, k, &q_service);
                self.variances[k] * (length - self.laplace_service[k] * (1.0 - f) / (2.0 * theta))
            })
            .sum();
        (numerator, length)
    }

    /// Dinkelbach objective `p(β, τ)`: numerator minus `β` times the mean
    /// epoch length. Affine and strictly decreasing in `β` for fixed `τ`.
    pub fn dinkelbach_p(&self, beta: f64, tau: f64) -> Result<f64> {
        let (num, len) = self.ratio_terms(tau)?;
        Ok(num - beta * len)
    }

    /// Long-term average sum MSE of threshold `tau`.
    pub fn policy_mse(&self, tau: f64) -> Result<f64> {
        let (num, len) = self.ratio_terms(tau)?;
        Ok(num / len)
    }

    fn series_sum(&self, term: impl Fn(u32, f64) -> f64) -> f64 {
        self.plan
            .range()
            .zip(&self.weights)
            .map(|(rho, &w)| term(rho, w))
            .sum()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "threshold must be finite and >= 0, got {tau}"
        )))
    }
}

/// Solves `f(τ) = level` for a continuous increasing `f` with `f(0) < level`.
fn invert_increasing(
    f: impl Fn(f64) -> f64,
    level: f64,
    tol: f64,
    function: &'static str,
) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while f(hi) < level {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(SolverFailure::Bracket { function, level }.into());
        }
    }
    Ok(bisect(|t| f(t) - level, lo, hi, tol))
}

/// Bisection for a sign change of `f` on `[lo, hi]`, stopping once the
/// bracket is narrower than `tol` or cannot shrink further.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let rising = f(hi) >= f(lo);
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return mid;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if (v < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(eps: f64) -> AnalyticContext {
        AnalyticContext::new(&SystemConfig::symmetric(1, 0.5, 1.0, 1.0, eps, 1.5)).unwrap()
    }

    fn pair(eps: f64) -> AnalyticContext {
        AnalyticContext::new(&SystemConfig::symmetric(2, 0.5, 1.0, 1.0, eps, 1.5)).unwrap()
    }

    fn fig2(eps: f64) -> AnalyticContext {
        AnalyticContext::new(&SystemConfig {
            k: 2,
            theta: vec![0.1, 0.5],
            sigma_sq: vec![1.0, 2.0],
            mu: 1.0,
            eps,
            f_max: 0.95,
        })
        .unwrap()
    }

    #[test]
    fn laplace_service_matches_closed_form() {
        let ctx = fig2(0.3);
        for (l, t) in ctx.laplace_service().iter().zip([0.1, 0.5]) {
            assert!((l - 1.0 / (1.0 + 2.0 * t)).abs() < 1e-15);
        }
    }

    #[test]
    fn g_examples() {
        let ctx = single(0.0);
        assert!((ctx.g_fn(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((ctx.g_fn(200.0).unwrap() - 1.0).abs() < 1e-15);
        // direct evaluation, cross-checked with 30-digit arithmetic
        let v = fig2(0.0).g_fn(1.0).unwrap();
        assert!((v - 3.220_742_421_003_633).abs() < 1e-13);
    }

    #[test]
    fn g_inverse_examples() {
        let ctx = single(0.0);
        let g0 = ctx.g_fn(0.0).unwrap();
        assert_eq!(ctx.g_inverse(g0).unwrap(), 0.0);
        assert_eq!(ctx.g_inverse(0.1).unwrap(), 0.0);
        // 1 − e^{−τ}/2 = 3/4  ⇒  τ = ln 2
        assert!((ctx.g_inverse(0.75).unwrap() - std::f64::consts::LN_2).abs() < 1e-11);
        let ctx = fig2(0.4);
        let b = ctx.g_fn(2.0).unwrap();
        assert!((ctx.g_inverse(b).unwrap() - 2.0).abs() < 1e-10);
        assert!(ctx.g_inverse(ctx.total_variance()).is_err());
    }

    #[test]
    fn h_reduces_to_exponential_closed_form() {
        let ctx = single(0.0);
        assert_eq!(ctx.h_fn(0.0).unwrap(), 0.0);
        for &tau in &[0.1f64, 1.0, 2.5, 9.0] {
            let expected = tau - 1.0 + (-tau).exp();
            assert!(
                (ctx.h_fn(tau).unwrap() - expected).abs() < 1e-14,
                "tau={tau}"
            );
        }
        assert!((ctx.h_fn(1.0).unwrap() - 0.367_879).abs() < 1e-6);
    }

    #[test]
    fn h_matches_high_precision_reference() {
        // 30-digit quadrature of E[(3 − Ỹ)⁺] for K = 2, ε = 0.5, μ = 1
        let v = pair(0.5).h_fn(3.0).unwrap();
        assert!((v - 0.561_911_121_039_008_8).abs() < 1e-12);
    }

    #[test]
    fn h_is_asymptotically_linear() {
        let ctx = fig2(0.6);
        let tau = 400.0;
        let gap = ctx.h_fn(tau).unwrap() - (tau - ctx.mean_epoch_service());
        assert!(gap.abs() < 1e-9);
    }

    #[test]
    fn h_inverse_examples() {
        let ctx = pair(0.0);
        assert_eq!(ctx.h_inverse(0.0).unwrap(), 0.0);
        let c = ctx.h_fn(5.0).unwrap();
        assert!((ctx.h_inverse(c).unwrap() - 5.0).abs() < 1e-10);
        // root of τγ(τ,2) − 2γ(τ,3) = 2 at 30 digits
        assert!((ctx.h_inverse(2.0).unwrap() - 3.878_413_128_391_975).abs() < 1e-10);
        assert!(ctx.h_inverse(-1.0).is_err());
    }

    #[test]
    fn f_examples() {
        let ctx = single(0.0);
        assert!((ctx.f_fn(0.0, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!(ctx.f_fn(300.0, 0).unwrap() < 1e-100);
        let v = pair(0.3).f_fn(2.0, 1).unwrap();
        assert!((v - 0.080_136_587_592_889_97).abs() < 1e-12);
        assert!(pair(0.3).f_fn(1.0, 2).is_err());
    }

    #[test]
    fn f_at_zero_is_laplace_of_epoch_service() {
        let ctx = fig2(0.4);
        for k in 0..2 {
            let l = ctx.laplace_service()[k];
            // E[l^ρ] for negative binomial ρ: ((1−ε) l / (1 − ε l))^K
            let expected = (0.6 * l / (1.0 - 0.4 * l)).powi(2);
            assert!((ctx.f_fn(0.0, k).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_epoch_service_examples() {
        assert_eq!(pair(0.0).mean_epoch_service(), 2.0);
        assert_eq!(pair(0.5).mean_epoch_service(), 4.0);
        let ctx =
            AnalyticContext::new(&SystemConfig::symmetric(1, 0.5, 1.0, 2.0, 0.5, 1.0)).unwrap();
        assert_eq!(ctx.mean_epoch_service(), 1.0);
    }

    #[test]
    fn dinkelbach_sign_at_bracket_ends() {
        let ctx = fig2(0.3);
        let total = ctx.total_variance();
        for &tau in &[0.0, 0.7, 3.0, 25.0] {
            assert!(ctx.dinkelbach_p(0.0, tau).unwrap() > 0.0);
            assert!(ctx.dinkelbach_p(total, tau).unwrap() < 0.0);
        }
    }

    #[test]
    fn dinkelbach_is_affine_in_beta() {
        let ctx = fig2(0.3);
        let tau = 1.7;
        let slope = -ctx.mean_epoch_length(tau).unwrap();
        let p: Vec<f64> = [0.5, 2.0, 3.5]
            .iter()
            .map(|&b| ctx.dinkelbach_p(b, tau).unwrap())
            .collect();
        assert!(((p[1] - p[0]) / 1.5 - slope).abs() < 1e-12);
        assert!(((p[2] - p[1]) / 1.5 - slope).abs() < 1e-12);
        assert!(slope < 0.0);
    }

    #[test]
    fn negative_threshold_is_rejected() {
        let ctx = fig2(0.3);
        assert!(ctx.g_fn(-1.0).is_err());
        assert!(ctx.h_fn(-1.0).is_err());
        assert!(ctx.f_fn(-1.0, 0).is_err());
        assert!(ctx.dinkelbach_p(1.0, f64::NAN).is_err());
    }
}
