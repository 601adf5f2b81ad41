//! Chain diagnostics and summary statistics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Sample autocorrelations `ρ_0..ρ_{n-1}` (biased, denominator `n`),
/// computed by FFT.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return vec![0.0; n];
    }
    buf.iter().take(n).map(|c| c.re / c0).collect()
}

/// Effective sample size from Geyer's initial monotone sequence estimator,
/// capped at the series length. A constant series has ESS 0.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let first = x[0];
    if x.iter().all(|v| *v == first) {
        return 0.0;
    }
    let rho = autocorrelation(x);
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let gamma = rho[k] + rho[k + 1];
        if gamma <= 0.0 {
            break;
        }
        let gamma = gamma.min(prev);
        tau += 2.0 * gamma;
        prev = gamma;
        k += 2;
    }
    if tau <= 1.0 {
        return n as f64;
    }
    (n as f64 / tau).min(n as f64)
}

/// Split-R̂: each chain is halved (dropping the middle draw of odd lengths)
/// and the between/within variance ratio is computed over the halves.
/// Clamped below at 1.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let len = chains.first().map_or(0, Vec::len);
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidInput("chains must have equal length".into()));
    }
    let half = len / 2;
    if chains.is_empty() || half < 2 {
        return Err(Error::InvalidInput(
            "split R-hat needs at least two halves of length 2".into(),
        ));
    }
    let mut splits: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        splits.push(&c[..half]);
        splits.push(&c[len - half..]);
    }
    let m = splits.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = splits.iter().map(|s| mean(s)).collect();
    let w = splits.iter().map(|s| variance(s)).sum::<f64>() / m;
    let b = n * variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt().max(1.0))
}

/// Quantile with linear interpolation between order statistics (the
/// `(n - 1) q` convention).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sort a copy and take several quantiles.
pub fn quantiles(x: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    qs.iter().map(|q| quantile(&sorted, *q)).collect()
}
