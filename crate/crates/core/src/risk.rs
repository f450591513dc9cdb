//! Sample expected shortfall and expected windfall of revenue samples.
//!
//! Both the optimization models and the backtest statistics use these
//! functions, so there is a single source of truth for the tail bookkeeping
//! `K = floor(alpha * T)`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("degenerate quantile: floor({alpha} * {t}) = 0, expected shortfall undefined")]
    DegenerateQuantile { alpha: f64, t: usize },
    #[error("empty or non-finite revenue samples")]
    InvalidSamples,
}

/// A non-empty sequence of finite revenue samples.
#[derive(Debug, Clone)]
pub struct RevenueSamples {
    values: Vec<f64>,
}

impl RevenueSamples {
    pub fn new(values: Vec<f64>) -> Result<Self, RiskError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::InvalidSamples);
        }
        Ok(RevenueSamples { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Number of tail samples `K = floor(alpha * T)`.
///
/// `K = 0` is an error: the shortfall formulation divides by `K`.
pub fn k_of(alpha: f64, t: usize) -> Result<usize, RiskError> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    assert!(t >= 1, "T must be positive");
    let k = (alpha * t as f64).floor() as usize;
    if k == 0 {
        Err(RiskError::DegenerateQuantile { alpha, t })
    } else {
        Ok(k)
    }
}

/// Expected shortfall: the negated mean of the K smallest samples.
/// Lower is better.
pub fn expected_shortfall(r: &RevenueSamples, alpha: f64) -> Result<f64, RiskError> {
    let k = k_of(alpha, r.len())?;
    let mut sorted = r.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail: f64 = sorted[..k].iter().sum();
    Ok(-(tail / k as f64))
}

/// Expected windfall: the mean of the K largest samples. Higher is better.
pub fn expected_windfall(r: &RevenueSamples, alpha: f64) -> Result<f64, RiskError> {
    let k = k_of(alpha, r.len())?;
    let mut sorted = r.values.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let head: f64 = sorted[..k].iter().sum();
    Ok(head / k as f64)
}

/// The Rockafellar-Uryasev linear representation of the expected shortfall,
/// minimized over the threshold variable:
/// `min over tau of (-tau + (1/K) * sum max(tau - r_t, 0))`.
///
/// The optimum is attained at some `tau in {r_t}`, so a scan over the sample
/// values is exact. Kept alongside the sort-based route as an algebraic
/// cross-check; both must agree.
pub fn expected_shortfall_lp_form(r: &RevenueSamples, alpha: f64) -> Result<f64, RiskError> {
    let k = k_of(alpha, r.len())? as f64;
    let mut best = f64::INFINITY;
    for &tau in &r.values {
        let penalty: f64 = r.values.iter().map(|&v| (tau - v).max(0.0)).sum();
        best = best.min(-tau + penalty / k);
    }
    Ok(best)
}
