//! Integer-shape incomplete Gamma function and the negative-binomial law of
//! the number of channel attempts in an epoch.
//!
//! Every shape parameter that shows up in the threshold formulas is a
//! positive integer (a count of exponential service times), so the
//! regularized lower incomplete Gamma function reduces to a Poisson tail:
//!
//! ```text
//! γ(x, n) = 1 − e^{−x} Σ_{j<n} x^j / j!
//! ```
//!
//! Nothing here ever forms `x^j` or `j!` on their own. Poisson weights are
//! taken from log space and then stepped with multiplicative recurrences.

use crate::error::{Error, Result};

/// Below this the factorial is formed as an exact-ish product.
const DIRECT_FACTORIAL_LIMIT: u64 = 170;

/// Binomial coefficients switch to log space above this many successes.
const LOG_SPACE_K: u32 = 50;

/// Default tail mass left out when the attempt-count series is truncated.
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= DIRECT_FACTORIAL_LIMIT {
        let mut p = 1.0_f64;
        for j in 2..=n {
            p *= j as f64;
        }
        return p.ln();
    }
    // Stirling series for ln Γ(z) at z = n + 1; the truncation error is
    // far below one ulp for z > 170.
    let z = n as f64 + 1.0;
    let z2 = z * z;
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * z)
        - 1.0 / (360.0 * z * z2)
        + 1.0 / (1260.0 * z * z2 * z2)
}

/// Poisson weight `e^{-x} x^n / n!` evaluated in log space.
pub fn poisson_weight(x: f64, n: u64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * x.ln() - x - ln_factorial(n)).exp()
}

/// Regularized lower incomplete Gamma function `γ(x, n)` for integer shape.
///
/// Below the mode (`x < n + 1`) the lower series is summed directly so that
/// small values keep full relative precision; above it the finite
/// exponential sum for the complement is accumulated from its largest term
/// downwards.
pub fn reg_incomplete_gamma(x: f64, n: u32) -> Result<f64> {
    if n < 1 {
        return Err(Error::domain(format!(
            "incomplete gamma shape must be >= 1, got {n}"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "incomplete gamma argument must be finite and >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    if x < nf + 1.0 {
        // γ(x,n) = e^{-x} x^n / n! · Σ_{j≥0} x^j / ((n+1)···(n+j))
        let lead = poisson_weight(x, n as u64);
        if lead == 0.0 {
            return Ok(0.0);
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = 1.0;
        loop {
            term *= x / (nf + j);
            sum += term;
            if term < sum * f64::EPSILON * 0.5 {
                break;
            }
            j += 1.0;
        }
        Ok((lead * sum).min(1.0))
    } else {
        // Q = Σ_{j=0}^{n-1} e^{-x} x^j / j!, terms decreasing as j drops.
        let mut term = poisson_weight(x, (n - 1) as u64);
        let mut upper = term;
        let mut j = (n - 1) as f64;
        while j > 0.0 {
            term *= j / x;
            upper += term;
            if term < upper * f64::EPSILON * 0.5 {
                break;
            }
            j -= 1.0;
        }
        Ok((1.0 - upper).clamp(0.0, 1.0))
    }
}

/// Upper regularized incomplete Gamma values `Q(x, n) = 1 − γ(x, n)` for
/// every `n` in `0..=n_max`, built in one pass.
///
/// `ladder[n]` holds `Q(x, n)`; `Q(x, 0)` is 0 by convention. Positive terms
/// are added in increasing `n`, so the ladder is accurate wherever `Q` is
/// not vanishingly small.
pub fn upper_gamma_ladder(x: f64, n_max: u32) -> Vec<f64> {
    debug_assert!(x >= 0.0);
    let mut ladder = Vec::with_capacity(n_max as usize + 1);
    ladder.push(0.0);
    let mut acc = 0.0;
    if x == 0.0 {
        ladder.resize(n_max as usize + 1, 1.0);
        return ladder;
    }
    let lnx = x.ln();
    let mut ln_fact = 0.0;
    for j in 0..n_max {
        if j > 1 {
            ln_fact += (j as f64).ln();
        }
        acc += (j as f64 * lnx - x - ln_fact).exp();
        ladder.push(acc.min(1.0));
    }
    ladder
}

/// Probability that exactly `rho` attempts are needed to collect `k`
/// successes when each attempt survives the channel with probability
/// `1 − eps`:
///
/// ```text
/// C(rho − 1, k − 1) · eps^{rho − k} · (1 − eps)^k
/// ```
pub fn negbin_pmf(rho: u32, k: u32, eps: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::domain("number of successes must be >= 1"));
    }
    if rho < k {
        return Err(Error::domain(format!(
            "attempt count {rho} is smaller than the number of successes {k}"
        )));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::domain(format!(
            "erasure probability must lie in [0, 1), got {eps}"
        )));
    }
    let failures = rho - k;
    if eps == 0.0 {
        return Ok(if failures == 0 { 1.0 } else { 0.0 });
    }
    if k <= LOG_SPACE_K {
        // C(rho-1, k-1) = Π_{i=1}^{k-1} (failures + i) / i
        let mut binom = 1.0_f64;
        for i in 1..k {
            binom *= (failures + i) as f64 / i as f64;
        }
        let p = binom * eps.powi(failures as i32) * (1.0 - eps).powi(k as i32);
        if p.is_finite() {
            return Ok(p);
        }
    }
    let ln_binom =
        ln_factorial(rho as u64 - 1) - ln_factorial(k as u64 - 1) - ln_factorial(failures as u64);
    Ok((ln_binom + failures as f64 * eps.ln() + k as f64 * (-eps).ln_1p()).exp())
}

/// Finite window of attempt counts over which the epoch-level series are
/// summed, together with the probability mass left outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPlan {
    pub rho_min: u32,
    pub rho_max: u32,
    pub tail_mass: f64,
}

impl TruncationPlan {
    pub fn range(&self) -> std::ops::RangeInclusive<u32> {
        self.rho_min..=self.rho_max
    }
}

/// `P(more than r attempts)`: fewer than `k` successes in `r` trials.
fn negbin_tail(r: u32, k: u32, eps: f64) -> f64 {
    let ln_s = (-eps).ln_1p();
    let ln_f = eps.ln();
    let ln_r_fact = ln_factorial(r as u64);
    (0..k)
        .map(|j| {
            let ln_binom = ln_r_fact - ln_factorial(j as u64) - ln_factorial((r - j) as u64);
            (ln_binom + j as f64 * ln_s + (r - j) as f64 * ln_f).exp()
        })
        .sum()
}

/// Smallest `rho_max` whose negative-binomial tail beyond it is below `tol`.
pub fn make_truncation_plan(k: u32, eps: f64, tol: f64) -> Result<TruncationPlan> {
    if k < 1 {
        return Err(Error::domain("number of processes must be >= 1"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::domain(format!(
            "truncation tolerance must lie in (0, 1), got {tol}"
        )));
    }
    if eps == 1.0 {
        return Err(Error::domain(
            "erasure probability 1 never delivers a sample; the attempt series does not terminate",
        ));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::domain(format!(
            "erasure probability must lie in [0, 1), got {eps}"
        )));
    }
    if eps == 0.0 {
        return Ok(TruncationPlan {
            rho_min: k,
            rho_max: k,
            tail_mass: 0.0,
        });
    }
    let mut r = k;
    let mut tail = negbin_tail(r, k, eps);
    while tail >= tol {
        r = r
            .checked_add(1)
            .ok_or_else(|| Error::domain("attempt series too long"))?;
        tail = negbin_tail(r, k, eps);
    }
    Ok(TruncationPlan {
        rho_min: k,
        rho_max: r,
        tail_mass: tail,
    })
}
