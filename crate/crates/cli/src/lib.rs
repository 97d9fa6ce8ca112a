//! Library side of the `oumse` command-line tool.

pub mod config;
pub mod error;
pub mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use oumse::optimizer::policy_mse;
use oumse::simulator::{Simulation, SimulationStats, StatsAccumulator, WaitMode};
use oumse::sweep::run_sweep;
use oumse::verify::{gamma_quadrature_checks, verify_config, VerifyReport};
use oumse::{solve, OptimalPolicy};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_sweep, ConfigFile};
use crate::error::{CliError, Result};
use crate::output::{write_sweep_csv, RunManifest, TraceWriter};

#[derive(Debug, Parser)]
#[command(
    name = "oumse",
    version,
    about = "Optimal threshold sampling of OU processes over an erasure channel"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the optimal threshold policy and its sum MSE.
    Solve { config: PathBuf },
    /// Simulate the sensing loop under a threshold policy.
    Simulate {
        config: PathBuf,
        /// Threshold to simulate; defaults to the optimal one.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        epochs: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// `grouped` or `split`.
        #[arg(long, default_value = "grouped")]
        mode: WaitMode,
        /// Also simulate the OU sample paths and measure the estimator error.
        #[arg(long)]
        track_paths: bool,
        /// Write a per-epoch CSV trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve over a one-parameter sweep and write CSV.
    Sweep { spec: PathBuf, out: PathBuf },
    /// Check the closed forms against Monte Carlo and quadrature oracles.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000_000)]
        draws: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Serialize)]
struct SolveOutput {
    #[serde(flatten)]
    policy: OptimalPolicy,
    manifest: RunManifest,
}

#[derive(Debug, Serialize)]
struct SimulateOutput {
    tau: f64,
    mode: WaitMode,
    #[serde(flatten)]
    stats: SimulationStats,
    beta_star: f64,
    /// Closed-form sum MSE of the simulated threshold; equals `beta_star`
    /// at the optimal threshold.
    analytic_mse: f64,
    /// `(sum_mse − analytic_mse) / sum_mse_stderr`.
    z_score: f64,
    manifest: RunManifest,
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    #[serde(flatten)]
    report: VerifyReport,
    manifest: RunManifest,
}

/// Grid for the incomplete-Gamma quadrature check.
const GAMMA_XS: [f64; 8] = [0.01, 0.5, 1.0, 3.0, 7.5, 15.0, 30.0, 60.0];
const GAMMA_NS: [u32; 7] = [1, 2, 3, 5, 10, 20, 40];

fn solve_policy(cfg: &ConfigFile, path: &Path) -> Result<OptimalPolicy> {
    solve(&cfg.system, &cfg.solver).map_err(|e| CliError::core(Some(path), e))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    writeln!(out, "{text}").map_err(|e| CliError::write(Path::new("<stdout>"), e))
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Solve { config } => {
            let cfg = ConfigFile::load(config)?;
            let policy = solve_policy(&cfg, config)?;
            let manifest = RunManifest::new(
                "solve",
                &(&cfg.system, &cfg.solver),
                cfg.solver,
                vec![],
                serde_json::Value::Null,
            );
            print_json(out, &SolveOutput { policy, manifest })
        }
        Command::Simulate {
            config,
            tau,
            epochs,
            seed,
            mode,
            track_paths,
            trace,
        } => {
            let cfg = ConfigFile::load(config)?;
            let policy = solve_policy(&cfg, config)?;
            let tau = tau.unwrap_or(policy.tau_star);
            let core = |e| CliError::core(Some(config), e);
            if *epochs == 0 {
                return Err(core(oumse::Error::Domain(
                    "number of epochs must be >= 1".into(),
                )));
            }
            let analytic_mse = policy_mse(&cfg.system, tau).map_err(core)?;
            let sim =
                Simulation::new(&cfg.system, tau, *seed, *mode, *track_paths).map_err(core)?;
            let mut acc = StatsAccumulator::new(cfg.system.k, *epochs, *track_paths);
            let mut writer = match trace {
                Some(p) => {
                    let f = File::create(p).map_err(|e| CliError::write(p, e))?;
                    Some((
                        p,
                        TraceWriter::new(BufWriter::new(f), cfg.system.k)
                            .map_err(|e| CliError::write(p, e))?,
                    ))
                }
                None => None,
            };
            for rec in sim.take(*epochs as usize) {
                acc.push(&rec);
                if let Some((p, w)) = writer.as_mut() {
                    w.push(&rec).map_err(|e| CliError::write(p, e))?;
                }
            }
            if let Some((p, w)) = writer {
                w.finish().map_err(|e| CliError::write(p, e))?;
            }
            let stats = acc.finish();
            let z_score = (stats.sum_mse - analytic_mse) / stats.sum_mse_stderr;
            let manifest = RunManifest::new(
                "simulate",
                &(&cfg.system, &cfg.solver),
                cfg.solver,
                vec![*seed],
                json!({ "tau": tau, "epochs": epochs, "mode": mode, "track_paths": track_paths }),
            );
            print_json(
                out,
                &SimulateOutput {
                    tau,
                    mode: *mode,
                    stats,
                    beta_star: policy.beta_star,
                    analytic_mse,
                    z_score,
                    manifest,
                },
            )
        }
        Command::Sweep {
            spec: spec_path,
            out: csv_path,
        } => {
            let spec = load_sweep(spec_path)?;
            let result = run_sweep(&spec).map_err(|e| CliError::core(Some(spec_path), e))?;
            let f = File::create(csv_path).map_err(|e| CliError::write(csv_path, e))?;
            write_sweep_csv(BufWriter::new(f), &result)
                .map_err(|e| CliError::write(csv_path, e))?;
            let manifest = RunManifest::new(
                "sweep",
                &spec,
                spec.settings(),
                vec![],
                serde_json::Value::Null,
            );
            let manifest_path = manifest_path(csv_path);
            let text = serde_json::to_string_pretty(&manifest).expect("plain data serializes");
            std::fs::write(&manifest_path, text + "\n")
                .map_err(|e| CliError::write(&manifest_path, e))?;
            print_json(
                out,
                &json!({ "rows": result.rows.len(), "csv": csv_path, "manifest": manifest_path }),
            )
        }
        Command::Verify {
            config,
            draws,
            seed,
            json,
        } => {
            let cfg = ConfigFile::load(config)?;
            let core = |e| CliError::core(Some(config), e);
            let mut report = verify_config(&cfg.system, *draws, *seed).map_err(core)?;
            report
                .checks
                .extend(gamma_quadrature_checks(&GAMMA_XS, &GAMMA_NS, 1e-10).map_err(core)?);
            if report.low_power {
                eprintln!(
                    "warning: {draws} draws give low statistical power; use at least {}",
                    oumse::verify::LOW_POWER_DRAWS
                );
            }
            let manifest = RunManifest::new(
                "verify",
                &(&cfg.system, &cfg.solver),
                cfg.solver,
                vec![*seed],
                json!({ "draws": draws }),
            );
            let failed = report.failures().count();
            let total = report.checks.len();
            if *json {
                print_json(out, &VerifyOutput { report, manifest })?;
            } else {
                print_report(out, &report, &manifest)
                    .map_err(|e| CliError::write(Path::new("<stdout>"), e))?;
            }
            if failed > 0 {
                return Err(CliError::Verification { failed, total });
            }
            Ok(())
        }
    }
}

/// `results.csv` → `results.csv.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn print_report(
    out: &mut dyn Write,
    report: &VerifyReport,
    manifest: &RunManifest,
) -> std::io::Result<()> {
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        match c.z {
            Some(z) => writeln!(
                out,
                "{verdict}  {:<28} analytic={:<20.12e} empirical={:<20.12e} se={:.3e} z={z:+.2}",
                c.name, c.analytic, c.empirical, c.stderr
            )?,
            None => writeln!(
                out,
                "{verdict}  {:<28} analytic={:<20.12e} reference={:<20.12e} |diff|={:.1e}",
                c.name,
                c.analytic,
                c.empirical,
                (c.analytic - c.empirical).abs()
            )?,
        }
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    writeln!(
        out,
        "{passed}/{} checks passed ({} draws, seed {})",
        report.checks.len(),
        report.draws,
        report.seed
    )?;
    writeln!(
        out,
        "manifest: {}",
        serde_json::to_string(manifest).expect("plain data serializes")
    )
}
