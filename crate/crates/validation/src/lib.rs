//! Problem instances shared by the acceptance checks.

use oumse::SystemConfig;

/// Two heterogeneous processes: a slow one with `θ = 0.1` and a faster,
/// noisier one.
pub fn two_process(eps: f64, f_max: f64) -> SystemConfig {
    SystemConfig {
        k: 2,
        theta: vec![0.1, 0.5],
        sigma_sq: vec![1.0, 2.0],
        mu: 1.0,
        eps,
        f_max,
    }
}

/// `k` identical processes with `σ² = 1`, `θ = 0.5`, `μ = 1` and a
/// perfect channel.
pub fn identical(k: usize, f_max: f64) -> SystemConfig {
    SystemConfig::symmetric(k, 0.5, 1.0, 1.0, 0.0, f_max)
}

/// Two processes with the second rate free: `σ² = [2, 1]`, `θ₁ = 0.5`.
pub fn second_rate(theta_2: f64, f_max: f64) -> SystemConfig {
    SystemConfig {
        k: 2,
        theta: vec![0.5, theta_2],
        sigma_sq: vec![2.0, 1.0],
        mu: 1.0,
        eps: 0.0,
        f_max,
    }
}

/// Same as [`second_rate`] with `σ² = [1, 1]` and `θ₁ = 1`.
pub fn second_rate_alt(theta_2: f64, f_max: f64) -> SystemConfig {
    SystemConfig {
        k: 2,
        theta: vec![1.0, theta_2],
        sigma_sq: vec![1.0, 1.0],
        mu: 1.0,
        eps: 0.0,
        f_max,
    }
}

/// `0, step, 2 step, …` up to and including `last`, free of accumulated
/// rounding.
pub fn grid(step: f64, last: f64) -> Vec<f64> {
    let n = (last / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}
