//! Deterministic numerical kernels shared by the metrics.
//!
//! Natural logarithms throughout; variances use the population (1/n)
//! convention.

mod ami;
mod kmeans;
mod svd;

pub use ami::adjusted_mutual_information;
pub use kmeans::{kmeans, ClusterAssignment};
pub use svd::{nuclear_norm, singular_values};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("degenerate series: zero variance")]
    DegenerateSeries,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("k = {k} exceeds sample count {n}")]
    TooManyClusters { k: usize, n: usize },
}

const PROB_TOLERANCE: f64 = 1e-7;

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64, NumericsError> {
    let mut h = 0.0;
    for &v in p {
        if v < -PROB_TOLERANCE {
            return Err(NumericsError::NegativeProbability(v));
        }
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    Ok(h.max(0.0))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Population covariance.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

fn is_degenerate(v: &[f64], var: f64) -> bool {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    var <= (1e-12 * scale).powi(2) || var == 0.0
}

/// Pearson correlation with population moments.
pub fn pearson_corr(s: &[f64], a: &[f64]) -> Result<f64, NumericsError> {
    if s.len() != a.len() {
        return Err(NumericsError::LengthMismatch(s.len(), a.len()));
    }
    if s.len() < 2 {
        return Err(NumericsError::TooFewSamples { needed: 2, got: s.len() });
    }
    if s.iter().chain(a).any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let (vs, va) = (variance(s), variance(a));
    if is_degenerate(s, vs) || is_degenerate(a, va) {
        return Err(NumericsError::DegenerateSeries);
    }
    let r = covariance(s, a) / (vs.sqrt() * va.sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

/// `(w - mean) / std + 1` with population std; all ones when std is ~0.
pub fn standardize(w: &[f64]) -> Vec<f64> {
    let sd = variance(w).sqrt();
    if !(sd > 1e-12) {
        return vec![1.0; w.len()];
    }
    let m = mean(w);
    w.iter().map(|x| (x - m) / sd + 1.0).collect()
}
