//! Maximum-likelihood tail fitting with KS-minimized cutoff, used to check
//! the heavy-tail behavior of degree and importance samples empirically.
//! An exponential tail fit with the same cutoff search serves as the
//! light-tailed control.

use crate::types::{GraphError, Result};

#[derive(Debug, Clone, serde::Serialize)]
pub struct TailFitReport {
    pub alpha_hat: f64,
    pub x_min: f64,
    pub ks_distance: f64,
    pub tail_len: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ExpTailFitReport {
    pub lambda_hat: f64,
    pub x_min: f64,
    pub ks_distance: f64,
    pub tail_len: usize,
}

/// Minimum tail size considered when scanning cutoff candidates; guards the
/// KS statistic against trivially small tails.
const MIN_TAIL: usize = 50;
/// Cap on the number of cutoff candidates scanned.
const MAX_CANDIDATES: usize = 100;

fn prepare(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 100 {
        return Err(GraphError::Invalid(format!(
            "tail fit requires >= 100 samples, got {}",
            samples.len()
        )));
    }
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    if xs.len() < 100 {
        return Err(GraphError::Invalid("too few positive finite samples".into()));
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if xs.first() == xs.last() {
        return Err(GraphError::DegenerateSample);
    }
    Ok(xs)
}

fn candidates(xs: &[f64]) -> Vec<f64> {
    let min_tail = MIN_TAIL.min(xs.len() / 2).max(2);
    let mut cands: Vec<f64> = xs[..xs.len() - min_tail].to_vec();
    cands.dedup();
    if cands.len() > MAX_CANDIDATES {
        let step = cands.len() as f64 / MAX_CANDIDATES as f64;
        cands = (0..MAX_CANDIDATES)
            .map(|i| cands[(i as f64 * step) as usize])
            .collect();
    }
    cands
}

fn ks(tail: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = tail.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in tail.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Continuous Pareto tail: density proportional to x^-alpha above x_min.
/// alpha by MLE, x_min by KS minimization over sample-value candidates.
pub fn fit_power_law_tail(samples: &[f64]) -> Result<TailFitReport> {
    let xs = prepare(samples)?;
    let mut best: Option<TailFitReport> = None;
    for x_min in candidates(&xs) {
        let start = xs.partition_point(|&x| x < x_min);
        let tail = &xs[start..];
        let log_sum: f64 = tail.iter().map(|&x| (x / x_min).ln()).sum();
        if log_sum <= 0.0 {
            continue; // tail has no spread above this cutoff
        }
        let alpha = 1.0 + tail.len() as f64 / log_sum;
        let d = ks(tail, |x| 1.0 - (x_min / x).powf(alpha - 1.0));
        if best.as_ref().map_or(true, |b| d < b.ks_distance) {
            best = Some(TailFitReport { alpha_hat: alpha, x_min, ks_distance: d, tail_len: tail.len() });
        }
    }
    best.ok_or(GraphError::DegenerateSample)
}

/// Shifted exponential tail above x_min, same cutoff search; the control fit.
pub fn fit_exponential_tail(samples: &[f64]) -> Result<ExpTailFitReport> {
    let xs = prepare(samples)?;
    let mut best: Option<ExpTailFitReport> = None;
    for x_min in candidates(&xs) {
        let start = xs.partition_point(|&x| x < x_min);
        let tail = &xs[start..];
        let mean_excess: f64 = tail.iter().map(|&x| x - x_min).sum::<f64>() / tail.len() as f64;
        if mean_excess <= 0.0 {
            continue;
        }
        let lambda = 1.0 / mean_excess;
        let d = ks(tail, |x| 1.0 - (-lambda * (x - x_min)).exp());
        if best.as_ref().map_or(true, |b| d < b.ks_distance) {
            best = Some(ExpTailFitReport { lambda_hat: lambda, x_min, ks_distance: d, tail_len: tail.len() });
        }
    }
    best.ok_or(GraphError::DegenerateSample)
}
