//! Problem instance and the elementary Ornstein-Uhlenbeck quantities.
//!
//! Process `k` evolves as `dX = −θ_k X dt + σ_k dW`. Its stationary variance
//! is `σ_k²/(2θ_k)`, and the MMSE of the receiver's estimate grows with the
//! age `Δ` of the freshest delivered sample as
//! `σ_k²/(2θ_k) · (1 − e^{−2θ_k Δ})`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full problem instance: `K` independent OU processes sampled through one
/// sensor, one exponential server and one erasure channel.
///
/// `sigma_sq` holds the variance-rate parameters `σ_k²`, not `σ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub theta: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    /// Service rate of the shared queue.
    pub mu: f64,
    /// Erasure probability of the channel.
    pub eps: f64,
    /// Total sampling frequency budget.
    pub f_max: f64,
}

/// One broken invariant of a [`SystemConfig`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NoProcesses,
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    NonPositiveTheta {
        index: usize,
        value: f64,
    },
    NonPositiveSigmaSq {
        index: usize,
        value: f64,
    },
    NonPositiveMu(f64),
    NonPositiveFMax(f64),
    ErasureOutOfRange(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoProcesses => write!(f, "number of processes K must be >= 1"),
            Violation::LengthMismatch {
                field,
                expected,
                got,
            } => {
                write!(f, "`{field}` must have K = {expected} entries, found {got}")
            }
            Violation::NonPositiveTheta { index, value } => {
                write!(
                    f,
                    "theta[{index}] must be a positive finite number, got {value}"
                )
            }
            Violation::NonPositiveSigmaSq { index, value } => {
                write!(
                    f,
                    "sigma_sq[{index}] must be a positive finite number, got {value}"
                )
            }
            Violation::NonPositiveMu(v) => write!(f, "service rate mu must be positive, got {v}"),
            Violation::NonPositiveFMax(v) => {
                write!(f, "sampling budget f_max must be positive, got {v}")
            }
            Violation::ErasureOutOfRange(v) if *v >= 1.0 => {
                write!(f, "erasure probability must be < 1, got {v}")
            }
            Violation::ErasureOutOfRange(v) => {
                write!(f, "erasure probability must lie in [0, 1), got {v}")
            }
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl SystemConfig {
    /// Identical processes with shared `theta` and `sigma_sq`.
    pub fn symmetric(k: usize, theta: f64, sigma_sq: f64, mu: f64, eps: f64, f_max: f64) -> Self {
        SystemConfig {
            k,
            theta: vec![theta; k],
            sigma_sq: vec![sigma_sq; k],
            mu,
            eps,
            f_max,
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        if self.k == 0 {
            out.push(Violation::NoProcesses);
        }
        if self.theta.len() != self.k {
            out.push(Violation::LengthMismatch {
                field: "theta",
                expected: self.k,
                got: self.theta.len(),
            });
        }
        if self.sigma_sq.len() != self.k {
            out.push(Violation::LengthMismatch {
                field: "sigma_sq",
                expected: self.k,
                got: self.sigma_sq.len(),
            });
        }
        for (index, &value) in self.theta.iter().enumerate() {
            if !positive(value) {
                out.push(Violation::NonPositiveTheta { index, value });
            }
        }
        for (index, &value) in self.sigma_sq.iter().enumerate() {
            if !positive(value) {
                out.push(Violation::NonPositiveSigmaSq { index, value });
            }
        }
        if !positive(self.mu) {
            out.push(Violation::NonPositiveMu(self.mu));
        }
        if !(self.eps >= 0.0 && self.eps < 1.0) {
            out.push(Violation::ErasureOutOfRange(self.eps));
        }
        if !positive(self.f_max) {
            out.push(Violation::NonPositiveFMax(self.f_max));
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidConfig)
    }

    /// `σ_k²/(2θ_k)` for every process.
    pub fn stationary_variances(&self) -> Vec<f64> {
        self.theta
            .iter()
            .zip(&self.sigma_sq)
            .map(|(&t, &s)| s / (2.0 * t))
            .collect()
    }

    /// `Σ_k σ_k²/(2θ_k)`: the sum MSE of an estimator that never hears
    /// anything, and a strict upper bound for every threshold policy.
    pub fn total_stationary_variance(&self) -> f64 {
        self.stationary_variances().iter().sum()
    }
}

/// Value of one OU process at a point in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuState {
    pub value: f64,
    pub time: f64,
}

pub fn stationary_variance(theta: f64, sigma_sq: f64) -> Result<f64> {
    if !positive(theta) {
        return Err(Error::domain(format!(
            "theta must be positive, got {theta}"
        )));
    }
    Ok(sigma_sq / (2.0 * theta))
}

/// MMSE of the receiver's estimate when the freshest sample is `delta` old.
pub fn mse_instant(theta: f64, sigma_sq: f64, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::domain(format!(
            "sample age must be >= 0, got {delta}"
        )));
    }
    let var = stationary_variance(theta, sigma_sq)?;
    Ok(-var * (-2.0 * theta * delta).exp_m1())
}

/// `∫_a^b mse_instant(θ, σ², t − s) dt` for a sample taken at `s ≤ a ≤ b`.
pub fn mse_integral(theta: f64, sigma_sq: f64, a: f64, b: f64, s: f64) -> Result<f64> {
    if !(s <= a && a <= b) {
        return Err(Error::domain(format!(
            "mse integral needs s <= a <= b, got s = {s}, a = {a}, b = {b}"
        )));
    }
    let var = stationary_variance(theta, sigma_sq)?;
    let two_theta = 2.0 * theta;
    // e^{-2θ(a-s)} − e^{-2θ(b-s)} = e^{-2θ(a-s)} (1 − e^{-2θ(b-a)})
    let decay = (-two_theta * (a - s)).exp() * -(-two_theta * (b - a)).exp_m1();
    Ok(var * ((b - a) - decay / two_theta))
}
