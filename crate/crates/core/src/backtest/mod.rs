//! Rolling backtests: per-hour model building, bid extraction, clearing
//! against realized day-ahead prices and settlement at the delta price.
//!
//! Hours are independent given the price panel, so they run on a rayon
//! pool; results are collected in chronological order and are identical for
//! any worker count. A failed hour (insufficient history, no model, solver
//! trouble) becomes an explicit zero-bid outcome with a reason string —
//! the backtest itself only errors on misconfiguration.

mod clearing;
mod stats;

use chrono::{DateTime, Duration, FixedOffset, Utc};
use rayon::prelude::*;
use thiserror::Error;

use crate::bidmodels::{
    build_sample_v, build_sample_vp, enforce_market_rules, extract_bids, score_positions,
    BidSet, ModelConfig, ModelError, PositionScore, Side, SolverSettings,
};
use crate::market_data::{rolling_window, MarketDataError, PricePanel, TrainingWindow};
use crate::solver::solve_lp;

pub use clearing::{settle, Settlement};
pub use stats::{
    bid_statistics, render_summary_table, revenue_statistics, subsample_ci, summary_stats,
    volume_statistics, BidStatistics, BlockStatistic, RevenueStatistics, SummaryStats,
    VolumeStatistics,
};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Data(#[from] MarketDataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Risk(#[from] crate::risk::RiskError),
    #[error("no nodes to backtest")]
    NoNodes,
    #[error("invalid statistics request: {0}")]
    InvalidStatistics(String),
    #[error("missing realized prices for {node} at {hour}")]
    MissingRealized {
        node: String,
        hour: DateTime<Utc>,
    },
}

/// The four backtest recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Volume-price co-optimization over the preselected positions.
    SampleVp,
    /// Self-scheduled volumes at always-clear prices over the preselected
    /// positions.
    SampleV,
    /// Per-position bid curves, budget spread evenly over the top positions.
    SampleP,
    /// Per-position bid curves, a few best positions at the per-position cap.
    SamplePMax,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelKind::SampleVp => "sample-vp",
            ModelKind::SampleV => "sample-v",
            ModelKind::SampleP => "sample-p",
            ModelKind::SamplePMax => "sample-p-max",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sample-vp" => Ok(ModelKind::SampleVp),
            "sample-v" => Ok(ModelKind::SampleV),
            "sample-p" => Ok(ModelKind::SampleP),
            "sample-p-max" => Ok(ModelKind::SamplePMax),
            other => Err(format!(
                "unknown model {other:?}; expected sample-vp, sample-v, sample-p or sample-p-max"
            )),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BacktestConfig {
    pub model: ModelKind,
    /// First target hour (usually midnight of the first backtest day, UTC).
    pub start: DateTime<Utc>,
    pub num_days: usize,
    pub lookback_days: usize,
    /// Market timezone as a fixed UTC offset, seconds east.
    pub market_offset_seconds: i32,
    /// Nodes to trade (typically cluster representatives). `None` = all.
    pub nodes: Option<Vec<String>>,
    /// Positions kept per side for the budget-spreading recipes.
    pub top_positions: usize,
    /// Positions kept per side for the at-cap recipe.
    pub max_positions: usize,
    pub model_config: ModelConfig,
    pub solver: SolverSettings,
}

impl BacktestConfig {
    pub fn new(model: ModelKind, start: DateTime<Utc>, num_days: usize) -> Self {
        BacktestConfig {
            model,
            start,
            num_days,
            lookback_days: 365,
            market_offset_seconds: 0,
            nodes: None,
            top_positions: 100,
            max_positions: 10,
            model_config: ModelConfig::default(),
            solver: SolverSettings::default(),
        }
    }

    pub fn market_offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.market_offset_seconds).expect("valid offset")
    }
}

/// Result of one target hour.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HourlyOutcome {
    pub target_hour: DateTime<Utc>,
    pub revenue: f64,
    pub settlement: Settlement,
    pub num_segments: usize,
    pub solve_time_ms: f64,
    /// Why this hour produced no bids, if it failed.
    pub failure: Option<String>,
    pub bids: BidSet,
}

impl HourlyOutcome {
    pub fn attempted_volume(&self) -> f64 {
        self.settlement.attempted_volume()
    }

    pub fn cleared_volume(&self) -> f64 {
        self.settlement.cleared_volume()
    }

    fn failed(target: DateTime<Utc>, reason: String) -> Self {
        HourlyOutcome {
            target_hour: target,
            revenue: 0.0,
            settlement: Settlement::default(),
            num_segments: 0,
            solve_time_ms: 0.0,
            failure: Some(reason),
            bids: BidSet::empty(target),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BacktestReport {
    pub model: ModelKind,
    /// The budget W used to normalize revenues.
    pub total_volume: f64,
    pub outcomes: Vec<HourlyOutcome>,
}

impl BacktestReport {
    pub fn hourly_normalized_revenue(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|o| o.revenue / self.total_volume)
            .collect()
    }

    /// Normalized revenue summed per 24-hour backtest day.
    pub fn daily_normalized_revenue(&self) -> Vec<f64> {
        let Some(first) = self.outcomes.first() else {
            return Vec::new();
        };
        let mut days: Vec<f64> = Vec::new();
        for o in &self.outcomes {
            let d = (o.target_hour - first.target_hour).num_hours() / 24;
            let d = d as usize;
            if days.len() <= d {
                days.resize(d + 1, 0.0);
            }
            days[d] += o.revenue / self.total_volume;
        }
        days
    }

    /// Cleared over attempted volume, all hours pooled.
    pub fn clearance_fraction(&self) -> f64 {
        let attempted: f64 = self.outcomes.iter().map(|o| o.attempted_volume()).sum();
        if attempted == 0.0 {
            return 0.0;
        }
        self.outcomes
            .iter()
            .map(|o| o.cleared_volume())
            .sum::<f64>()
            / attempted
    }

    pub fn num_failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.failure.is_some()).count()
    }

    pub fn mean_solve_time_ms(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().map(|o| o.solve_time_ms).sum::<f64>()
            / self.outcomes.len() as f64
    }
}

/// Runs one recipe over `num_days * 24` consecutive target hours.
pub fn run_backtest(
    panel: &PricePanel,
    config: &BacktestConfig,
) -> Result<BacktestReport, BacktestError> {
    let nodes = resolve_nodes(panel, config)?;

    let targets: Vec<DateTime<Utc>> = (0..config.num_days * 24)
        .map(|h| config.start + Duration::hours(h as i64))
        .collect();

    let outcomes: Vec<HourlyOutcome> = targets
        .par_iter()
        .map(|&target| run_hour(panel, config, &nodes, target))
        .collect();

    Ok(BacktestReport {
        model: config.model,
        total_volume: config.model_config.total_volume,
        outcomes,
    })
}

fn resolve_nodes(
    panel: &PricePanel,
    config: &BacktestConfig,
) -> Result<Vec<String>, BacktestError> {
    let nodes: Vec<String> = match &config.nodes {
        Some(n) => n.clone(),
        None => panel.nodes().to_vec(),
    };
    if nodes.is_empty() {
        return Err(BacktestError::NoNodes);
    }
    config.model_config.validate()?;
    Ok(nodes)
}

/// Builds, solves, extracts and settles a single target hour. Failures
/// (coverage, model, solver, settlement) become explicit zero-bid outcomes,
/// exactly as inside [`run_backtest`].
pub fn optimize_hour(
    panel: &PricePanel,
    config: &BacktestConfig,
    target: DateTime<Utc>,
) -> Result<HourlyOutcome, BacktestError> {
    let nodes = resolve_nodes(panel, config)?;
    Ok(run_hour(panel, config, &nodes, target))
}

fn run_hour(
    panel: &PricePanel,
    config: &BacktestConfig,
    nodes: &[String],
    target: DateTime<Utc>,
) -> HourlyOutcome {
    let window = match rolling_window(
        panel,
        target,
        config.lookback_days,
        nodes,
        config.market_offset(),
    ) {
        Ok(w) => w,
        Err(e) => return HourlyOutcome::failed(target, format!("coverage: {e}")),
    };

    let started = std::time::Instant::now();
    let bids = build_bids(&window, config);
    let solve_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut bids = match bids {
        Ok(b) => b,
        Err(reason) => {
            let mut o = HourlyOutcome::failed(target, reason);
            o.solve_time_ms = solve_time_ms;
            return o;
        }
    };
    enforce_market_rules(&mut bids, &config.model_config);

    let settlement = match settle(&bids, panel) {
        Ok(s) => s,
        Err(e) => {
            // Keep the bids: they are still valid output (e.g. optimizing a
            // future hour with no realized prices yet), they just settle to
            // nothing.
            let mut o = HourlyOutcome::failed(target, format!("settlement: {e}"));
            o.solve_time_ms = solve_time_ms;
            o.num_segments = bids.num_segments();
            o.bids = bids;
            return o;
        }
    };
    HourlyOutcome {
        target_hour: target,
        revenue: settlement.revenue,
        settlement,
        num_segments: bids.num_segments(),
        solve_time_ms,
        failure: None,
        bids,
    }
}

/// Scores every (node, side) with the per-position bid-curve LP and keeps
/// the best `per_side` of each side, in rank order.
fn preselect(
    window: &TrainingWindow,
    nodes: &[String],
    config: &BacktestConfig,
    per_side: usize,
) -> Vec<PositionScore> {
    let scores = score_positions(window, nodes, &config.model_config, &config.solver);
    let mut kept = Vec::new();
    let (mut n_supply, mut n_demand) = (0usize, 0usize);
    for s in scores {
        if !s.objective.is_finite() {
            continue;
        }
        match s.side {
            Side::Supply if n_supply < per_side => {
                n_supply += 1;
                kept.push(s);
            }
            Side::Demand if n_demand < per_side => {
                n_demand += 1;
                kept.push(s);
            }
            _ => {}
        }
    }
    kept
}

fn build_bids(window: &TrainingWindow, config: &BacktestConfig) -> Result<BidSet, String> {
    let mc = &config.model_config;
    match config.model {
        ModelKind::SampleP => {
            let selected = preselect(window, &window.nodes, config, config.top_positions);
            spread_budget(&selected, mc, window.target_hour)
        }
        ModelKind::SamplePMax => {
            let selected = preselect(window, &window.nodes, config, config.max_positions);
            spread_budget(&selected, mc, window.target_hour)
        }
        ModelKind::SampleVp => {
            let selected = preselect(window, &window.nodes, config, config.top_positions);
            let positions: Vec<(String, Side)> = selected
                .iter()
                .map(|s| (s.node.clone(), s.side))
                .collect();
            solve_and_extract(window, &positions, config, build_sample_vp)
        }
        ModelKind::SampleV => {
            let selected = preselect(window, &window.nodes, config, config.top_positions);
            // Optionally forbid holding both sides of one node: keep the
            // better-scored side (rank order is score order).
            let mut positions: Vec<(String, Side)> = Vec::new();
            let mut taken: std::collections::BTreeSet<String> = Default::default();
            for s in &selected {
                if !mc.allow_double_positions && !taken.insert(s.node.clone()) {
                    continue;
                }
                positions.push((s.node.clone(), s.side));
            }
            solve_and_extract(window, &positions, config, build_sample_v)
        }
    }
}

fn solve_and_extract(
    window: &TrainingWindow,
    positions: &[(String, Side)],
    config: &BacktestConfig,
    builder: fn(
        &TrainingWindow,
        &[(String, Side)],
        &ModelConfig,
    ) -> Result<crate::bidmodels::BuiltModel, ModelError>,
) -> Result<BidSet, String> {
    if positions.is_empty() {
        return Err("model: no scorable positions".into());
    }
    let built =
        builder(window, positions, &config.model_config).map_err(|e| format!("model: {e}"))?;
    let sol = solve_lp(
        &built.lp,
        config.solver.feasibility_tol,
        config.solver.iteration_limit,
    );
    if !sol.is_optimal() {
        return Err(format!("solver: {:?}", sol.status));
    }
    extract_bids(&sol, &built.vars, &config.model_config).map_err(|e| format!("model: {e}"))
}

/// Spreads the budget evenly over the selected positions, reusing the
/// scoring LP solutions (which carry unit volume) as the bid curves.
fn spread_budget(
    selected: &[PositionScore],
    mc: &ModelConfig,
    target: DateTime<Utc>,
) -> Result<BidSet, String> {
    if selected.is_empty() {
        return Err("model: no scorable positions".into());
    }
    let multiplier = mc
        .per_position_cap
        .min(mc.total_volume / selected.len() as f64);
    let mut merged = BidSet::empty(target);
    for s in selected {
        let (built, sol) = s.built.as_ref().expect("finite score has a solution");
        let mut bids =
            extract_bids(sol, &built.vars, mc).map_err(|e| format!("model: {e}"))?;
        bids.scale_volumes(multiplier);
        merge_bids(&mut merged, bids);
    }
    Ok(merged)
}

fn merge_bids(dst: &mut BidSet, src: BidSet) {
    for (node, curves) in src.curves {
        let entry = dst.curves.entry(node).or_default();
        entry.supply.extend(curves.supply);
        entry.demand.extend(curves.demand);
        entry
            .supply
            .sort_by(|a, b| a.price.partial_cmp(&b.price).unwrap());
        entry
            .demand
            .sort_by(|a, b| a.price.partial_cmp(&b.price).unwrap());
    }
}
