//! Effective sample size and split-R-hat.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::stats;

/// Normalised autocorrelation `rho_0..rho_{n-1}` (biased autocovariance,
/// divisor `n`), computed by zero-padded FFT.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = stats::mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return vec![0.0; n];
    }
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// Single-sequence ESS by Geyer's initial positive sequence, with the
/// monotone refinement. Capped at the sequence length. A constant sequence
/// reports its length.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    if stats::variance(x) == 0.0 {
        return n as f64;
    }
    let rho = autocorrelation(x);
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        k += 1;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

/// ESS summed across independent segments (chains) of a pooled series.
pub fn ess_segments(x: &[f64], segments: &[usize]) -> f64 {
    let mut start = 0;
    let mut total = 0.0;
    for &len in segments {
        total += ess(&x[start..start + len]);
        start += len;
    }
    total
}

/// `sd(x) / sqrt(ESS(x))`; infinite for a single value.
pub fn mc_se(x: &[f64], segments: &[usize]) -> f64 {
    if x.len() < 2 {
        return f64::INFINITY;
    }
    let var = stats::variance(x);
    if var == 0.0 {
        return 0.0;
    }
    (var / ess_segments(x, segments)).sqrt()
}

/// Split-R-hat over equal-length sequences. Zero within-chain variance gives
/// 1.0 when chains also agree and infinity when they do not.
pub fn split_rhat(sequences: &[&[f64]]) -> Result<f64> {
    if sequences.len() < 2 {
        return Err(Error::NotEnoughDraws { needed: 2, have: sequences.len() });
    }
    let len = sequences[0].len();
    if sequences.iter().any(|s| s.len() != len) {
        return Err(Error::UnequalChains);
    }
    if len < 4 {
        return Err(Error::NotEnoughDraws { needed: 4, have: len });
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = sequences.iter().flat_map(|s| [&s[..half], &s[len - half..]]).collect();
    let means: Vec<f64> = halves.iter().map(|h| stats::mean(h)).collect();
    let within = stats::mean(&halves.iter().map(|h| stats::variance(h)).collect::<Vec<_>>());
    let between = half as f64 * stats::variance(&means);
    if within == 0.0 {
        return Ok(if between == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nh = half as f64;
    let var_plus = (nh - 1.0) / nh * within + between / nh;
    Ok((var_plus / within).sqrt())
}
