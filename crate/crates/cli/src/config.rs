//! Config and sweep-spec files.

use std::fs;
use std::path::Path;

use oumse::sweep::SweepSpec;
use oumse::{SolverSettings, SystemConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// On-disk problem instance: the [`SystemConfig`] keys plus optional solver
/// settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "K")]
    k: usize,
    theta: Vec<f64>,
    sigma_sq: Vec<f64>,
    mu: f64,
    eps: f64,
    f_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<SolverSettings>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub system: SystemConfig,
    pub solver: SolverSettings,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::parse(path, e))?;
        let system = SystemConfig {
            k: raw.k,
            theta: raw.theta,
            sigma_sq: raw.sigma_sq,
            mu: raw.mu,
            eps: raw.eps,
            f_max: raw.f_max,
        };
        let solver = raw.solver.unwrap_or_default();
        let mut problems: Vec<String> = match system.validate() {
            Ok(()) => Vec::new(),
            Err(v) => v.iter().map(ToString::to_string).collect(),
        };
        if let Err(e) = solver.validate() {
            problems.push(e.to_string());
        }
        if !problems.is_empty() {
            return Err(CliError::Invalid {
                path: Some(path.to_owned()),
                problems,
            });
        }
        Ok(ConfigFile { system, solver })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    pub fn to_json(&self) -> String {
        let s = &self.system;
        let raw = RawConfig {
            k: s.k,
            theta: s.theta.clone(),
            sigma_sq: s.sigma_sq.clone(),
            mu: s.mu,
            eps: s.eps,
            f_max: s.f_max,
            solver: Some(self.solver),
        };
        serde_json::to_string_pretty(&raw).expect("plain data serializes")
    }
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    let spec: SweepSpec =
        serde_json::from_str(&read(path)?).map_err(|e| CliError::parse(path, e))?;
    spec.validate().map_err(|e| CliError::core(Some(path), e))?;
    Ok(spec)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })
}
