use serde::{Deserialize, Serialize};

use super::EpochRecord;

/// Number of non-overlapping batches used for standard errors.
const BATCHES: usize = 50;

/// Empirical estimates from one simulation run.
///
/// Time averages are ratios of sums over epochs (renewal-reward form).
/// Standard errors come from non-overlapping batch means, which absorb
/// the one-epoch dependence introduced by the threshold rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    pub epochs: u64,
    pub total_time: f64,
    pub sum_mse: f64,
    pub sum_mse_stderr: f64,
    pub per_process_mse: Vec<f64>,
    pub sampling_freq: f64,
    pub sampling_freq_stderr: f64,
    pub mean_epoch_service: f64,
    pub mean_epoch_service_stderr: f64,
    pub mean_epoch_length: f64,
    pub mean_epoch_length_stderr: f64,
    pub mean_wait: f64,
    /// Time average of `Σ_k (X_k − X̂_k)²` from simulated sample paths.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path_mse_stderr: Option<f64>,
}

/// Samples per unit time over the whole run.
pub fn estimate_sampling_freq(stats: &SimulationStats) -> f64 {
    stats.sampling_freq
}

#[derive(Debug, Clone, Default)]
struct Batch {
    epochs: f64,
    length: f64,
    mse: f64,
    samples: f64,
    service: f64,
    path: f64,
}

/// Folds [`EpochRecord`]s into [`SimulationStats`].
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    batch_size: u64,
    batches: Vec<Batch>,
    current: Batch,
    in_current: u64,
    epochs: u64,
    mse: Vec<f64>,
    wait: f64,
    service_sq: f64,
    tracks_paths: bool,
}

impl StatsAccumulator {
    /// `expected_epochs` only sizes the batches; any number may be pushed.
    pub fn new(k: usize, expected_epochs: u64, tracks_paths: bool) -> Self {
        StatsAccumulator {
            batch_size: expected_epochs.div_ceil(BATCHES as u64).max(1),
            batches: Vec::with_capacity(BATCHES + 1),
            current: Batch::default(),
            in_current: 0,
            epochs: 0,
            mse: vec![0.0; k],
            wait: 0.0,
            service_sq: 0.0,
            tracks_paths,
        }
    }

    pub fn push(&mut self, rec: &EpochRecord) {
        for (acc, &m) in self.mse.iter_mut().zip(&rec.mse_contrib) {
            *acc += m;
        }
        self.wait += rec.wait;
        self.service_sq += rec.service_total * rec.service_total;
        let b = &mut self.current;
        b.epochs += 1.0;
        b.length += rec.length;
        b.mse += rec.mse_contrib.iter().sum::<f64>();
        b.samples += rec.samples_taken as f64;
        b.service += rec.service_total;
        b.path += rec.path_sq_err.unwrap_or(0.0);
        self.epochs += 1;
        self.in_current += 1;
        if self.in_current == self.batch_size {
            self.batches.push(std::mem::take(&mut self.current));
            self.in_current = 0;
        }
    }

    pub fn finish(mut self) -> SimulationStats {
        if self.in_current > 0 {
            self.batches.push(std::mem::take(&mut self.current));
        }
        let b = &self.batches;
        let total = |f: fn(&Batch) -> f64| b.iter().map(f).sum::<f64>();
        let n = self.epochs as f64;
        let total_time = total(|x| x.length);
        let service = total(|x| x.service);

        let per_process_mse: Vec<f64> = self.mse.iter().map(|m| m / total_time).collect();
        let mean_service = service / n;
        let service_var = (self.service_sq / n - mean_service * mean_service).max(0.0);
        let (path_mse, path_mse_stderr) = if self.tracks_paths {
            let (r, se) = ratio(b, |x| x.path, |x| x.length);
            (Some(r), Some(se))
        } else {
            (None, None)
        };
        let (_, sum_mse_stderr) = ratio(b, |x| x.mse, |x| x.length);
        let (sampling_freq, sampling_freq_stderr) = ratio(b, |x| x.samples, |x| x.length);
        let (mean_epoch_length, mean_epoch_length_stderr) = ratio(b, |x| x.length, |x| x.epochs);

        SimulationStats {
            epochs: self.epochs,
            total_time,
            sum_mse: per_process_mse.iter().sum(),
            sum_mse_stderr,
            per_process_mse,
            sampling_freq,
            sampling_freq_stderr,
            mean_epoch_service: mean_service,
            mean_epoch_service_stderr: if self.epochs > 1 {
                (service_var / (n - 1.0)).sqrt()
            } else {
                0.0
            },
            mean_epoch_length,
            mean_epoch_length_stderr,
            mean_wait: self.wait / n,
            path_mse,
            path_mse_stderr,
        }
    }
}

/// Ratio-of-sums estimate and its batch-means standard error.
fn ratio(b: &[Batch], num: fn(&Batch) -> f64, den: fn(&Batch) -> f64) -> (f64, f64) {
    let sn: f64 = b.iter().map(num).sum();
    let sd: f64 = b.iter().map(den).sum();
    let r = sn / sd;
    let m = b.len() as f64;
    if b.len() < 2 {
        return (r, 0.0);
    }
    let mean_den = sd / m;
    let ss: f64 = b.iter().map(|x| (num(x) - r * den(x)).powi(2)).sum();
    (r, (ss / (m * (m - 1.0))).sqrt() / mean_den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(length: f64, mse: f64) -> EpochRecord {
        EpochRecord {
            wait: 0.0,
            attempts: vec![1],
            service_total: length,
            length,
            mse_contrib: vec![mse],
            samples_taken: 1,
            path_sq_err: None,
        }
    }

    #[test]
    fn ratio_of_sums_not_mean_of_ratios() {
        let mut acc = StatsAccumulator::new(1, 2, false);
        acc.push(&rec(1.0, 1.0));
        acc.push(&rec(3.0, 9.0));
        let s = acc.finish();
        // (1 + 9) / (1 + 3), whereas the mean of ratios would be 2
        assert_eq!(s.sum_mse, 2.5);
        assert_eq!(s.total_time, 4.0);
        assert_eq!(s.sampling_freq, 0.5);
        assert_eq!(s.mean_epoch_length, 2.0);
    }

    #[test]
    fn single_epoch_has_zero_stderr() {
        let mut acc = StatsAccumulator::new(1, 1, false);
        acc.push(&rec(2.0, 1.0));
        let s = acc.finish();
        assert_eq!(s.sum_mse_stderr, 0.0);
        assert_eq!(s.mean_epoch_service_stderr, 0.0);
    }
}
