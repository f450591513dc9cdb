//! Summary statistics, the per-table aggregates (revenue, volume, bid
//! shape) and moving-block subsampling confidence intervals for backtest
//! revenue series.

use crate::bidmodels::Side;
use crate::risk::{expected_shortfall, expected_windfall, RevenueSamples};

use super::{BacktestError, BacktestReport};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample standard deviation (n-1), min and max. `None` when empty.
pub fn summary_stats(values: &[f64]) -> Option<SummaryStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(SummaryStats {
        count: n,
        mean,
        std: var.sqrt(),
        min,
        max,
    })
}

/// Mean, expected shortfall and expected windfall of the hourly normalized
/// revenues, using the same tail estimators as the optimizer.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RevenueStatistics {
    pub mean: f64,
    pub expected_shortfall: f64,
    pub expected_windfall: f64,
}

pub fn revenue_statistics(
    report: &BacktestReport,
    alpha: f64,
) -> Result<RevenueStatistics, BacktestError> {
    revenue_statistics_of(&report.hourly_normalized_revenue(), alpha)
}

pub fn revenue_statistics_of(
    series: &[f64],
    alpha: f64,
) -> Result<RevenueStatistics, BacktestError> {
    let samples = RevenueSamples::new(series.to_vec())?;
    Ok(RevenueStatistics {
        mean: samples.mean(),
        expected_shortfall: expected_shortfall(&samples, alpha)?,
        expected_windfall: expected_windfall(&samples, alpha)?,
    })
}

/// Hourly volume means and supply/demand splits in percent. Splits are
/// `None` when the corresponding total volume is zero.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct VolumeStatistics {
    pub mean_attempted: f64,
    pub mean_cleared: f64,
    pub attempted_supply_pct: Option<f64>,
    pub attempted_demand_pct: Option<f64>,
    pub cleared_supply_pct: Option<f64>,
    pub cleared_demand_pct: Option<f64>,
}

pub fn volume_statistics(report: &BacktestReport) -> Option<VolumeStatistics> {
    if report.outcomes.is_empty() {
        return None;
    }
    let n = report.outcomes.len() as f64;
    let mut att_s = 0.0;
    let mut att_d = 0.0;
    let mut clr_s = 0.0;
    let mut clr_d = 0.0;
    for o in &report.outcomes {
        att_s += o.settlement.attempted_supply;
        att_d += o.settlement.attempted_demand;
        clr_s += o.settlement.cleared_supply;
        clr_d += o.settlement.cleared_demand;
    }
    let split = |s: f64, d: f64| {
        let total = s + d;
        if total > 0.0 {
            (Some(100.0 * s / total), Some(100.0 * d / total))
        } else {
            (None, None)
        }
    };
    let (asp, adp) = split(att_s, att_d);
    let (csp, cdp) = split(clr_s, clr_d);
    Some(VolumeStatistics {
        mean_attempted: (att_s + att_d) / n,
        mean_cleared: (clr_s + clr_d) / n,
        attempted_supply_pct: asp,
        attempted_demand_pct: adp,
        cleared_supply_pct: csp,
        cleared_demand_pct: cdp,
    })
}

/// Shape statistics of the emitted bids: position counts per (hour, node)
/// and segment-count fractions per curve, in percent.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BidStatistics {
    /// Percent of (hour, node) positions holding exactly one side.
    pub single_position_pct: f64,
    /// Percent of (hour, node) positions holding both sides.
    pub double_position_pct: f64,
    pub max_segments: usize,
    /// Percent of curves with exactly one segment.
    pub one_step_pct: f64,
    /// Percent of curves with exactly two segments.
    pub two_step_pct: f64,
    /// Percent of curves with three or more segments.
    pub more_step_pct: f64,
}

pub fn bid_statistics(report: &BacktestReport) -> Option<BidStatistics> {
    let mut positions = 0usize;
    let mut doubles = 0usize;
    let mut curves = 0usize;
    let mut one = 0usize;
    let mut two = 0usize;
    let mut max_segments = 0usize;
    for o in &report.outcomes {
        for c in o.bids.curves.values() {
            if c.is_empty() {
                continue;
            }
            positions += 1;
            if !c.supply.is_empty() && !c.demand.is_empty() {
                doubles += 1;
            }
            for side in [Side::Supply, Side::Demand] {
                let len = c.side(side).len();
                if len == 0 {
                    continue;
                }
                curves += 1;
                max_segments = max_segments.max(len);
                match len {
                    1 => one += 1,
                    2 => two += 1,
                    _ => {}
                }
            }
        }
    }
    if positions == 0 {
        return None;
    }
    let pct = |num: usize, den: usize| 100.0 * num as f64 / den as f64;
    Some(BidStatistics {
        single_position_pct: pct(positions - doubles, positions),
        double_position_pct: pct(doubles, positions),
        max_segments,
        one_step_pct: pct(one, curves),
        two_step_pct: pct(two, curves),
        more_step_pct: pct(curves - one - two, curves),
    })
}

/// The block statistic of a subsampling interval.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub enum BlockStatistic {
    Mean,
    ExpectedShortfall { alpha: f64 },
}

impl BlockStatistic {
    fn apply(&self, block: &[f64]) -> Result<f64, BacktestError> {
        match self {
            BlockStatistic::Mean => Ok(block.iter().sum::<f64>() / block.len() as f64),
            BlockStatistic::ExpectedShortfall { alpha } => {
                let samples = RevenueSamples::new(block.to_vec())?;
                Ok(expected_shortfall(&samples, *alpha)?)
            }
        }
    }
}

/// Moving-block subsampling interval for a statistic of `values`.
///
/// Contiguous blocks of `block_length` are taken at a stride of
/// `min(24, len - block_length)` (at least 1), the statistic is evaluated on
/// each block, and the empirical `(1 +/- confidence) / 2` quantiles of the
/// block statistics bound the interval.
pub fn subsample_ci(
    values: &[f64],
    statistic: BlockStatistic,
    block_length: usize,
    confidence: f64,
) -> Result<(f64, f64), BacktestError> {
    if block_length == 0 || block_length > values.len() {
        return Err(BacktestError::InvalidStatistics(format!(
            "block_length {} not in 1..={}",
            block_length,
            values.len()
        )));
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(BacktestError::InvalidStatistics(format!(
            "confidence {confidence} not in (0, 1)"
        )));
    }
    let stride = (values.len() - block_length).min(24).max(1);
    let mut block_stats = Vec::new();
    let mut start = 0;
    while start + block_length <= values.len() {
        block_stats.push(statistic.apply(&values[start..start + block_length])?);
        start += stride;
    }
    block_stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = nearest_rank(&block_stats, (1.0 - confidence) / 2.0);
    let hi = nearest_rank(&block_stats, (1.0 + confidence) / 2.0);
    Ok((lo, hi))
}

/// Nearest-rank empirical quantile of sorted data.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Renders a fixed-width comparison table over backtest reports: daily
/// normalized revenue statistics, a subsampling CI on its mean, clearance
/// and solve-time figures.
pub fn render_summary_table(
    reports: &[&BacktestReport],
    block_length: usize,
    confidence: f64,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9} {:>6} {:>10}\n",
        "model",
        "days",
        "mean",
        "std",
        "min",
        "max",
        "ci-lo",
        "ci-hi",
        "cleared%",
        "fail",
        "solve-ms"
    ));
    for r in reports {
        let daily = r.daily_normalized_revenue();
        let s = summary_stats(&daily).unwrap_or(SummaryStats {
            count: 0,
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            max: 0.0,
        });
        let (lo, hi) = subsample_ci(
            &daily,
            BlockStatistic::Mean,
            block_length.min(daily.len().max(1)),
            confidence,
        )
        .unwrap_or((f64::NAN, f64::NAN));
        out.push_str(&format!(
            "{:<14} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>9.2} {:>6} {:>10.2}\n",
            r.model.to_string(),
            s.count,
            s.mean,
            s.std,
            s.min,
            s.max,
            lo,
            hi,
            100.0 * r.clearance_fraction(),
            r.num_failures(),
            r.mean_solve_time_ms(),
        ));
    }
    out
}
