//! CSV emission and the run manifest.

use std::io::Write;

use chrono::{SecondsFormat, Utc};
use oumse::simulator::EpochRecord;
use oumse::sweep::{SweepOutput, SweepResult};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Significant digits of every number written to CSV.
pub const CSV_DIGITS: usize = 12;

/// Shortest `%g`-style rendering of `x` with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn num(x: f64) -> String {
    format_sig(x, CSV_DIGITS)
}

pub fn write_sweep_csv<W: Write>(out: W, result: &SweepResult) -> csv::Result<()> {
    let cols: Vec<SweepOutput> = SweepOutput::ALL
        .into_iter()
        .filter(|o| result.outputs.contains(o))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![result.parameter.to_string()];
    header.extend(cols.iter().map(|c| c.name().to_owned()));
    w.write_record(&header)?;
    for row in &result.rows {
        let p = &row.policy;
        let mut rec = vec![num(row.value)];
        rec.extend(cols.iter().map(|c| match c {
            SweepOutput::TauStar => num(p.tau_star),
            SweepOutput::BetaStar => num(p.beta_star),
            SweepOutput::TauUnconstrained => num(p.tau_unconstrained),
            SweepOutput::TauConstrained => num(p.tau_constrained),
            SweepOutput::Binding => p.binding.to_string(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming writer for per-epoch simulator traces.
pub struct TraceWriter<W: Write> {
    w: csv::Writer<W>,
    epoch: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, k: usize) -> csv::Result<Self> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["epoch", "wait", "service_total", "length"]
            .map(String::from)
            .to_vec();
        header.extend((1..=k).map(|i| format!("attempts_{i}")));
        header.extend((1..=k).map(|i| format!("mse_contrib_{i}")));
        w.write_record(&header)?;
        Ok(TraceWriter { w, epoch: 0 })
    }

    pub fn push(&mut self, rec: &EpochRecord) -> csv::Result<()> {
        self.epoch += 1;
        let mut row = vec![
            self.epoch.to_string(),
            num(rec.wait),
            num(rec.service_total),
            num(rec.length),
        ];
        row.extend(rec.attempts.iter().map(ToString::to_string));
        row.extend(rec.mse_contrib.iter().map(|&m| num(m)));
        self.w.write_record(&row)
    }

    pub fn finish(mut self) -> csv::Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// What a run needs to be reproduced. Outputs depend on everything here
/// except `timestamp`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the canonical JSON of the run's input document.
    pub config_sha256: String,
    pub solver: oumse::SolverSettings,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub options: serde_json::Value,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new<T: Serialize>(
        command: &'static str,
        input: &T,
        solver: oumse::SolverSettings,
        seeds: Vec<u64>,
        options: serde_json::Value,
    ) -> Self {
        let canonical = serde_json::to_vec(input).expect("plain data serializes");
        let digest = Sha256::digest(&canonical);
        RunManifest {
            tool: "oumse",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            solver,
            seeds,
            options,
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.0, 12), "0");
        assert_eq!(format_sig(2.0, 12), "2");
        assert_eq!(format_sig(0.1, 12), "0.1");
        assert_eq!(format_sig(3.878413128391975, 12), "3.87841312839");
        assert_eq!(format_sig(-0.000123456789012345, 12), "-0.000123456789012");
        assert_eq!(format_sig(1.5e-9, 12), "1.5e-9");
        assert_eq!(format_sig(123456789012345.0, 12), "1.23456789012e14");
        assert_eq!(format_sig(9.9999999999999, 12), "10");
        assert_eq!(format_sig(0.7, 12), "0.7");
    }

    #[test]
    fn hash_ignores_nothing_but_time() {
        let s = oumse::SolverSettings::default();
        let a = RunManifest::new("solve", &[1, 2], s, vec![], serde_json::Value::Null);
        let b = RunManifest::new("solve", &[1, 2], s, vec![], serde_json::Value::Null);
        let c = RunManifest::new("solve", &[1, 3], s, vec![], serde_json::Value::Null);
        assert_eq!(a.config_sha256, b.config_sha256);
        assert_ne!(a.config_sha256, c.config_sha256);
        assert_eq!(a.config_sha256.len(), 64);
    }
}
