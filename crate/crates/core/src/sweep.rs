//! One-parameter sweeps of the solver, for figure data.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::optimizer::{solve, OptimalPolicy, SolverSettings};

/// Which field of the base config a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SweepParameter {
    Eps,
    /// Number of processes. The base config must be symmetric so that new
    /// processes can copy its parameters.
    K,
    /// `θ` of one process, zero-based internally and written `theta_<k>`
    /// with `k` one-based.
    Theta(usize),
    FMax,
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps" => Ok(SweepParameter::Eps),
            "K" => Ok(SweepParameter::K),
            "f_max" => Ok(SweepParameter::FMax),
            _ => s
                .strip_prefix("theta_")
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|&i| i >= 1)
                .map(|i| SweepParameter::Theta(i - 1))
                .ok_or_else(|| {
                    Error::domain(format!(
                        "unknown sweep parameter `{s}` (expected eps, K, f_max or theta_<k>)"
                    ))
                }),
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParameter::Eps => f.write_str("eps"),
            SweepParameter::K => f.write_str("K"),
            SweepParameter::Theta(i) => write!(f, "theta_{}", i + 1),
            SweepParameter::FMax => f.write_str("f_max"),
        }
    }
}

impl TryFrom<String> for SweepParameter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SweepParameter> for String {
    fn from(p: SweepParameter) -> String {
        p.to_string()
    }
}

/// Solver outputs a sweep can report, in their canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    TauStar,
    BetaStar,
    TauUnconstrained,
    TauConstrained,
    Binding,
}

impl SweepOutput {
    pub const ALL: [SweepOutput; 5] = [
        SweepOutput::TauStar,
        SweepOutput::BetaStar,
        SweepOutput::TauUnconstrained,
        SweepOutput::TauConstrained,
        SweepOutput::Binding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepOutput::TauStar => "tau_star",
            SweepOutput::BetaStar => "beta_star",
            SweepOutput::TauUnconstrained => "tau_unconstrained",
            SweepOutput::TauConstrained => "tau_constrained",
            SweepOutput::Binding => "binding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Defaults to every output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<SweepOutput>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub policy: OptimalPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub outputs: Vec<SweepOutput>,
    pub rows: Vec<SweepRow>,
}

impl SweepSpec {
    pub fn outputs(&self) -> Vec<SweepOutput> {
        self.outputs
            .clone()
            .unwrap_or_else(|| SweepOutput::ALL.to_vec())
    }

    pub fn settings(&self) -> SolverSettings {
        self.solver.unwrap_or_default()
    }

    /// The base config with the swept field set to `value`.
    pub fn config_at(&self, value: f64) -> Result<SystemConfig> {
        let mut c = self.base.clone();
        match self.parameter {
            SweepParameter::Eps => c.eps = value,
            SweepParameter::FMax => c.f_max = value,
            SweepParameter::Theta(i) => {
                let slot = c.theta.get_mut(i).ok_or_else(|| {
                    Error::domain(format!(
                        "{} is out of range for K = {}",
                        self.parameter, self.base.k
                    ))
                })?;
                *slot = value;
            }
            SweepParameter::K => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(Error::domain(format!(
                        "K must be a positive integer, got {value}"
                    )));
                }
                let k = value as usize;
                c = SystemConfig::symmetric(
                    k,
                    self.base.theta[0],
                    self.base.sigma_sq[0],
                    c.mu,
                    c.eps,
                    c.f_max,
                );
            }
        }
        c.ensure_valid()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.ensure_valid()?;
        self.settings().validate()?;
        if self.values.is_empty() {
            return Err(Error::domain("sweep needs at least one value"));
        }
        let increasing = self.values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::domain("sweep values must be strictly monotone"));
        }
        if let Some(o) = &self.outputs {
            if o.is_empty() {
                return Err(Error::domain("sweep outputs must not be empty"));
            }
        }
        if self.parameter == SweepParameter::K {
            let symmetric = self.base.theta.iter().all(|&t| t == self.base.theta[0])
                && self
                    .base
                    .sigma_sq
                    .iter()
                    .all(|&s| s == self.base.sigma_sq[0]);
            if !symmetric {
                return Err(Error::domain("a K sweep needs a symmetric base config"));
            }
        }
        for &v in &self.values {
            self.config_at(v)?;
        }
        Ok(())
    }
}

/// Solves every point of the sweep in parallel. Rows come back in the
/// order of `spec.values`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let settings = spec.settings();
    let rows = spec
        .values
        .par_iter()
        .map(|&value| {
            let policy = solve(&spec.config_at(value)?, &settings)?;
            Ok(SweepRow { value, policy })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        parameter: spec.parameter,
        outputs: spec.outputs(),
        rows,
    })
}
