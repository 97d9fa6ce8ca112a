//! Exact-distribution discrete-event simulation of the sensing loop.
//!
//! Each epoch starts right after the last process of the previous round is
//! delivered. The sensor waits `(τ − Ỹ_prev)⁺`, then serves the processes in
//! maximum-age-first order. A process is resampled and resent until one copy
//! survives the channel, so every epoch contains exactly one delivery per
//! process. Service times are `exp(μ)` and erasures `Bernoulli(ε)`, all drawn
//! exactly; the MSE is integrated in closed form between receptions.
//!
//! Service, erasure and sample-path randomness come from three independent
//! streams of one seed. Runs that differ only in where the wait is placed
//! therefore see identical service and erasure draws.

mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mse_integral, OuState, SystemConfig};
use crate::optimizer::waiting;

pub use stats::{estimate_sampling_freq, SimulationStats, StatsAccumulator};

/// Grid points per epoch for sample-path error estimates.
pub const PATH_GRID: usize = 20;

const SERVICE_STREAM: u64 = 0;
const ERASURE_STREAM: u64 = 1;
const PATH_STREAM: u64 = 2;

/// Where an epoch's waiting time is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaitMode {
    /// All of it before the first process of the epoch is sampled.
    #[default]
    Grouped,
    /// An equal share `W/K` before each process's first attempt.
    Split,
}

impl std::str::FromStr for WaitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grouped" => Ok(WaitMode::Grouped),
            "split" => Ok(WaitMode::Split),
            other => Err(Error::domain(format!("unknown wait mode `{other}`"))),
        }
    }
}

/// One renewal cycle: from the delivery closing the previous round to the
/// delivery closing this one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub wait: f64,
    pub attempts: Vec<u32>,
    pub service_total: f64,
    pub length: f64,
    /// `∫ mse_k dt` over the epoch, per process.
    pub mse_contrib: Vec<f64>,
    pub samples_taken: u64,
    /// Grid estimate of `∫ Σ_k (X_k − X̂_k)² dt` when paths are tracked.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path_sq_err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub tau: f64,
    pub epochs: u64,
    pub seed: u64,
    pub mode: WaitMode,
    pub track_paths: bool,
}

impl SimOptions {
    pub fn new(tau: f64, epochs: u64, seed: u64) -> Self {
        SimOptions {
            tau,
            epochs,
            seed,
            mode: WaitMode::Grouped,
            track_paths: false,
        }
    }

    pub fn mode(mut self, mode: WaitMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn track_paths(mut self, on: bool) -> Self {
        self.track_paths = on;
        self
    }
}

/// Draws `X_{s+delta}` given `X_s = x_s`: Gaussian with mean
/// `x_s e^{−θ δ}` and variance `σ²/(2θ) (1 − e^{−2θ δ})`.
pub fn ou_transition<R: Rng + ?Sized>(
    x_s: f64,
    theta: f64,
    sigma_sq: f64,
    delta: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "transition step must be positive, got {delta}"
        )));
    }
    let mean = x_s * (-theta * delta).exp();
    let var = -sigma_sq / (2.0 * theta) * (-2.0 * theta * delta).exp_m1();
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + var.sqrt() * z)
}

/// Index (zero-based) of the largest age; ties go to the lowest index.
pub fn maf_select(aoi: &[f64]) -> Result<usize> {
    let (first, rest) = aoi
        .split_first()
        .ok_or_else(|| Error::domain("cannot schedule an empty set of processes"))?;
    let mut best = (0, *first);
    for (i, &a) in rest.iter().enumerate() {
        if a > best.1 {
            best = (i + 1, a);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone)]
struct Tracked {
    state: OuState,
    /// Value of the freshest delivered sample.
    sample_value: f64,
}

#[derive(Debug, Clone)]
struct Process {
    theta: f64,
    sigma_sq: f64,
    /// Generation time of the freshest delivered sample, on the epoch clock.
    sample_time: f64,
    path: Option<Tracked>,
}

#[derive(Debug, Clone, Copy)]
struct Delivery {
    process: usize,
    old_sample: f64,
    sample: f64,
    reception: f64,
}

/// The sensing loop as an endless iterator over measured epochs.
///
/// Construction runs `max(K − 1, 1)` unmeasured warm-up epochs. All
/// processes start with a virtual sample taken and delivered at time 0;
/// the first warm-up epoch waits nothing because no previous service time
/// exists yet.
#[derive(Debug, Clone)]
pub struct Simulation {
    tau: f64,
    eps: f64,
    mode: WaitMode,
    service: Exp<f64>,
    procs: Vec<Process>,
    prev_service: Option<f64>,
    service_rng: ChaCha8Rng,
    erasure_rng: ChaCha8Rng,
    path_rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(
        config: &SystemConfig,
        tau: f64,
        seed: u64,
        mode: WaitMode,
        track_paths: bool,
    ) -> Result<Self> {
        config.ensure_valid()?;
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::domain(format!(
                "threshold must be finite and >= 0, got {tau}"
            )));
        }
        let stream = |n| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n);
            rng
        };
        let mut path_rng = stream(PATH_STREAM);
        let procs = config
            .theta
            .iter()
            .zip(&config.sigma_sq)
            .map(|(&theta, &sigma_sq)| {
                let path = track_paths.then(|| {
                    let z: f64 = StandardNormal.sample(&mut path_rng);
                    let x0 = z * (sigma_sq / (2.0 * theta)).sqrt();
                    Tracked {
                        state: OuState {
                            value: x0,
                            time: 0.0,
                        },
                        sample_value: x0,
                    }
                });
                Process {
                    theta,
                    sigma_sq,
                    sample_time: 0.0,
                    path,
                }
            })
            .collect();
        let mut sim = Simulation {
            tau,
            eps: config.eps,
            mode,
            service: Exp::new(config.mu).map_err(|e| Error::domain(e.to_string()))?,
            procs,
            prev_service: None,
            service_rng: stream(SERVICE_STREAM),
            erasure_rng: stream(ERASURE_STREAM),
            path_rng,
        };
        for _ in 0..config.k.saturating_sub(1).max(1) {
            sim.step();
        }
        Ok(sim)
    }

    fn step(&mut self) -> EpochRecord {
        let k = self.procs.len();
        let wait = self.prev_service.map_or(0.0, |z| waiting(z, self.tau));
        let mut now = 0.0;
        let mut attempts = vec![0u32; k];
        let mut deliveries = Vec::with_capacity(k);
        let mut service_total = 0.0;

        for slot in 0..k {
            // Served processes are masked: with the virtual samples at time 0
            // the first warm-up epoch would otherwise tie on a zero age.
            let aoi: Vec<f64> = self
                .procs
                .iter()
                .zip(&attempts)
                .map(|(p, &a)| {
                    if a > 0 {
                        f64::NEG_INFINITY
                    } else {
                        now - p.sample_time
                    }
                })
                .collect();
            let j = maf_select(&aoi).expect("at least one process");
            now += match self.mode {
                WaitMode::Grouped if slot == 0 => wait,
                WaitMode::Grouped => 0.0,
                WaitMode::Split => wait / k as f64,
            };
            let delivery = loop {
                let sample = now;
                let y = self.service.sample(&mut self.service_rng);
                now += y;
                service_total += y;
                attempts[j] += 1;
                let erased = self.erasure_rng.random::<f64>() < self.eps;
                if !erased {
                    break Delivery {
                        process: j,
                        old_sample: self.procs[j].sample_time,
                        sample,
                        reception: now,
                    };
                }
            };
            self.procs[j].sample_time = delivery.sample;
            deliveries.push(delivery);
        }

        let end = now;
        let mut mse_contrib = vec![0.0; k];
        for d in &deliveries {
            let p = &self.procs[d.process];
            let before = mse_integral(p.theta, p.sigma_sq, 0.0, d.reception, d.old_sample);
            let after = mse_integral(p.theta, p.sigma_sq, d.reception, end, d.sample);
            mse_contrib[d.process] = before
                .and_then(|b| after.map(|a| a + b))
                .expect("sample times precede receptions within an epoch");
        }

        let path_sq_err = self.procs[0]
            .path
            .is_some()
            .then(|| self.track(&deliveries, end));

        for p in &mut self.procs {
            p.sample_time -= end;
            if let Some(t) = &mut p.path {
                t.state.time -= end;
            }
        }
        self.prev_service = Some(service_total);

        EpochRecord {
            wait,
            samples_taken: attempts.iter().map(|&a| a as u64).sum(),
            attempts,
            service_total,
            length: end,
            mse_contrib,
            path_sq_err,
        }
    }

    /// Advances every sample path through the epoch and returns the
    /// stratified grid estimate of the integrated squared estimation error.
    fn track(&mut self, deliveries: &[Delivery], end: f64) -> f64 {
        let cell = end / PATH_GRID as f64;
        let grid: Vec<f64> = (0..PATH_GRID)
            .map(|g| (g as f64 + self.path_rng.random::<f64>()) * cell)
            .collect();
        let rng = &mut self.path_rng;
        let mut sq_err = 0.0;
        for d in deliveries {
            let p = &mut self.procs[d.process];
            let (theta, sigma_sq) = (p.theta, p.sigma_sq);
            let tr = p.path.as_mut().expect("tracked");
            let old_value = tr.sample_value;
            let mut new_value = None;
            let mut advance = |st: &mut OuState, to: f64| {
                if to > st.time {
                    st.value = ou_transition(st.value, theta, sigma_sq, to - st.time, rng)
                        .expect("positive step");
                    st.time = to;
                }
            };
            for &t in &grid {
                if new_value.is_none() && d.sample <= t {
                    advance(&mut tr.state, d.sample);
                    new_value = Some(tr.state.value);
                }
                advance(&mut tr.state, t);
                let estimate = if t >= d.reception {
                    new_value.expect("sampled before reception") * (-theta * (t - d.sample)).exp()
                } else {
                    old_value * (-theta * (t - d.old_sample)).exp()
                };
                sq_err += (tr.state.value - estimate).powi(2);
            }
            if new_value.is_none() {
                advance(&mut tr.state, d.sample);
                new_value = Some(tr.state.value);
            }
            tr.sample_value = new_value.expect("set above");
        }
        sq_err * cell
    }
}

impl Iterator for Simulation {
    type Item = EpochRecord;

    fn next(&mut self) -> Option<EpochRecord> {
        Some(self.step())
    }
}

/// Simulates `opts.epochs` measured epochs and aggregates them.
pub fn run(config: &SystemConfig, opts: &SimOptions) -> Result<SimulationStats> {
    if opts.epochs == 0 {
        return Err(Error::domain("number of epochs must be >= 1"));
    }
    let sim = Simulation::new(config, opts.tau, opts.seed, opts.mode, opts.track_paths)?;
    let mut acc = StatsAccumulator::new(config.k, opts.epochs, opts.track_paths);
    for rec in sim.take(opts.epochs as usize) {
        acc.push(&rec);
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2(eps: f64) -> SystemConfig {
        SystemConfig {
            k: 2,
            theta: vec![0.1, 0.5],
            sigma_sq: vec![1.0, 2.0],
            mu: 1.0,
            eps,
            f_max: 0.95,
        }
    }

    #[test]
    fn maf_examples() {
        assert_eq!(maf_select(&[3.2, 1.0]).unwrap(), 0);
        assert_eq!(maf_select(&[2.0, 2.0]).unwrap(), 0);
        assert_eq!(maf_select(&[1.0, 4.0, 4.0]).unwrap(), 1);
        assert!(maf_select(&[]).is_err());
    }

    #[test]
    fn ou_transition_rejects_nonpositive_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ou_transition(1.0, 0.5, 1.0, 0.0, &mut rng).is_err());
        assert!(ou_transition(1.0, 0.5, 1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn ou_transition_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ou_transition(2.0, 0.5, 1.0, 1e-12, &mut rng).unwrap();
        assert!((x - 2.0).abs() < 1e-5);
    }

    #[test]
    fn epoch_records_are_consistent() {
        let cfg = fig2(0.4);
        let sim = Simulation::new(&cfg, 3.0, 11, WaitMode::Grouped, true).unwrap();
        for rec in sim.take(2000) {
            assert!(rec.attempts.iter().all(|&a| a >= 1));
            assert_eq!(
                rec.samples_taken,
                rec.attempts.iter().map(|&a| a as u64).sum::<u64>()
            );
            assert!(
                (rec.length - rec.wait - rec.service_total).abs() < 1e-12 * rec.length.max(1.0)
            );
            assert!(rec.mse_contrib.iter().all(|&m| m >= 0.0));
            assert!(rec.path_sq_err.unwrap() >= 0.0);
        }
    }

    #[test]
    fn split_mode_conserves_wait_and_draws() {
        let cfg = fig2(0.3);
        let a = Simulation::new(&cfg, 4.0, 5, WaitMode::Grouped, false).unwrap();
        let b = Simulation::new(&cfg, 4.0, 5, WaitMode::Split, false).unwrap();
        for (x, y) in a.zip(b).take(500) {
            assert_eq!(x.attempts, y.attempts);
            assert_eq!(x.service_total, y.service_total);
            assert_eq!(x.wait, y.wait);
            assert!((x.length - y.length).abs() < 1e-12 * x.length);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = fig2(0.3);
        let opts = SimOptions::new(2.0, 5000, 42).track_paths(true);
        assert_eq!(run(&cfg, &opts).unwrap(), run(&cfg, &opts).unwrap());
        let other = SimOptions { seed: 43, ..opts };
        assert_ne!(run(&cfg, &opts).unwrap(), run(&cfg, &other).unwrap());
    }

    #[test]
    fn zero_epochs_is_an_error() {
        let cfg = fig2(0.3);
        assert!(run(&cfg, &SimOptions::new(1.0, 0, 1)).is_err());
        assert!(run(&cfg, &SimOptions::new(-1.0, 10, 1)).is_err());
    }

    #[test]
    fn large_threshold_starves_sampling() {
        let cfg = fig2(0.0);
        let s = run(&cfg, &SimOptions::new(1e4, 200, 1)).unwrap();
        // every epoch lasts about τ and carries exactly K samples
        assert!((s.sampling_freq - 2.0 / 1e4).abs() < 1e-6);
    }
}
