//! The sample-based optimization models: sample-VP (volumes and prices
//! co-optimized), sample-V (self-scheduling, volumes only) and sample-P
//! (opportunistic, prices only), plus bid-curve extraction, market-rule
//! enforcement and block/tiered conversions.
//!
//! All models maximize the mean of the per-sample revenues subject to an
//! upper bound on the sample expected shortfall, written in the (tau, z)
//! linear form. Candidate bid prices are taken from the training day-ahead
//! prices, which lets clearing be precomputed into cleared-delta matrices so
//! the volume-price co-optimization stays a pure LP.

mod bids;
mod models;

use thiserror::Error;

use crate::market_data::TrainingWindow;
use crate::risk::RiskError;
use crate::solver::SolveStatus;

pub use bids::{
    block_payoff, enforce_market_rules, extract_bids, tiered_payoff, to_tiered, BidSegment,
    BidSet, Interpretation, NodeCurves,
};
pub use models::{
    build_sample_p_lp, build_sample_p_milp, build_sample_v, build_sample_vp,
    build_sample_vp_milp, score_positions, BidPrice, BuiltModel, PositionScore, SolverSettings,
    VariableMap, WeightVar,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("no model can be built: {0}")]
    NoModel(String),
    #[error("MILP instance too large: {binaries} binaries exceeds limit {limit}")]
    TooLarge { binaries: usize, limit: usize },
    #[error("node {0} not present in the training window")]
    UnknownNode(String),
    #[error("bid extraction refused: solution status is {status:?}")]
    ExtractionRefused { status: SolveStatus },
    #[error("invalid bid curve: {0}")]
    InvalidCurve(String),
}

/// Market side of a bid position.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Supply,
    Demand,
}

impl Side {
    /// Sign convention of volumes: supply positive, demand negative.
    pub fn sign(self) -> f64 {
        match self {
            Side::Supply => 1.0,
            Side::Demand => -1.0,
        }
    }

    /// Inclusive clearing rule against a day-ahead price.
    pub fn clears(self, day_ahead: f64, bid_price: f64) -> bool {
        match self {
            Side::Supply => day_ahead >= bid_price,
            Side::Demand => day_ahead <= bid_price,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Supply => write!(f, "supply"),
            Side::Demand => write!(f, "demand"),
        }
    }
}

/// Model parameters shared by all optimization models.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Expected-shortfall quantile level in (0, 1).
    pub alpha: f64,
    /// Volume-normalized expected-shortfall upper bound, $/MWh.
    /// `INFINITY` disables the risk constraint.
    pub rho_tilde: f64,
    /// Total attempted volume budget W, MWh (L1 norm over all positions).
    pub total_volume: f64,
    /// Maximum volume per (node, side) position, MWh.
    pub per_position_cap: f64,
    /// Optional `[lower, upper]` bounds on net volume (supply minus demand).
    pub net_volume_bounds: Option<(f64, f64)>,
    /// Candidate-price bounds for supply bids, $/MWh.
    pub supply_price_bounds: (f64, f64),
    /// Candidate-price bounds for demand bids, $/MWh.
    pub demand_price_bounds: (f64, f64),
    /// Minimum distance between adjacent supply segment prices, $/MWh
    /// (enforced post-optimization).
    pub min_distance_supply: f64,
    /// Minimum distance between adjacent demand segment prices, $/MWh.
    pub min_distance_demand: f64,
    /// Maximum number of segments per curve.
    pub max_segments: usize,
    /// Minimum submittable segment volume, MWh.
    pub min_segment_volume: f64,
    /// Bid price used when submitting sample-V supply positions.
    pub supply_always_clear_price: f64,
    /// Bid price used when submitting sample-V demand positions.
    pub demand_always_clear_price: f64,
    /// Whether one node may carry both a supply and a demand position in the
    /// sample-V preselection.
    pub allow_double_positions: bool,
    /// Weights at or below this magnitude are treated as solver noise.
    pub extraction_epsilon: f64,
    /// Guard on the number of binary variables in MILP builders.
    pub milp_binary_limit: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            alpha: 0.05,
            rho_tilde: 1.0,
            total_volume: 1000.0,
            per_position_cap: 50.0,
            net_volume_bounds: None,
            supply_price_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            demand_price_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            min_distance_supply: 0.0,
            min_distance_demand: 0.0,
            max_segments: 10,
            min_segment_volume: 1.0,
            supply_always_clear_price: -1000.0,
            demand_always_clear_price: 1000.0,
            allow_double_positions: false,
            extraction_epsilon: 1e-9,
            milp_binary_limit: 5000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ModelError::NoModel(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if !(self.total_volume > 0.0) {
            return Err(ModelError::NoModel("total_volume must be > 0".into()));
        }
        if !(self.per_position_cap > 0.0) {
            return Err(ModelError::NoModel("per_position_cap must be > 0".into()));
        }
        if self.supply_price_bounds.0 > self.supply_price_bounds.1
            || self.demand_price_bounds.0 > self.demand_price_bounds.1
        {
            return Err(ModelError::NoModel("price bounds inverted".into()));
        }
        if self.rho_tilde.is_nan() || self.rho_tilde < 0.0 {
            return Err(ModelError::NoModel("rho_tilde must be >= 0".into()));
        }
        Ok(())
    }

    pub fn price_bounds(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Supply => self.supply_price_bounds,
            Side::Demand => self.demand_price_bounds,
        }
    }

    pub fn always_clear_price(&self, side: Side) -> f64 {
        match side {
            Side::Supply => self.supply_always_clear_price,
            Side::Demand => self.demand_always_clear_price,
        }
    }

    pub fn min_distance(&self, side: Side) -> f64 {
        match side {
            Side::Supply => self.min_distance_supply,
            Side::Demand => self.min_distance_demand,
        }
    }
}

/// Sorted, deduplicated candidate bid prices for one (node, side), drawn
/// from the training day-ahead prices and filtered to the price bounds.
#[derive(Debug, Clone)]
pub struct CandidatePrices {
    pub node: String,
    pub side: Side,
    pub prices: Vec<f64>,
}

pub fn candidate_prices(
    window: &TrainingWindow,
    node: &str,
    side: Side,
    price_bounds: (f64, f64),
) -> Result<CandidatePrices, ModelError> {
    let ni = window
        .node_index(node)
        .ok_or_else(|| ModelError::UnknownNode(node.to_string()))?;
    let mut prices: Vec<f64> = (0..window.num_samples())
        .map(|t| window.da_of(t, ni))
        .filter(|p| *p >= price_bounds.0 && *p <= price_bounds.1)
        .collect();
    prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
    prices.dedup();
    Ok(CandidatePrices {
        node: node.to_string(),
        side,
        prices,
    })
}

/// The T x P cleared-rejected delta matrix of one (node, side):
/// entry (t, q) is `delta_t` if candidate price q clears against the
/// training day-ahead price `lambda_t`, else 0.
#[derive(Debug, Clone)]
pub struct ClearedDeltaMatrix {
    pub node: String,
    pub side: Side,
    pub prices: Vec<f64>,
    num_samples: usize,
    values: Vec<f64>,
}

impl ClearedDeltaMatrix {
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_prices(&self) -> usize {
        self.prices.len()
    }

    pub fn entry(&self, t: usize, q: usize) -> f64 {
        self.values[t * self.prices.len() + q]
    }

    /// Mean of column `q` over samples.
    pub fn column_mean(&self, q: usize) -> f64 {
        (0..self.num_samples).map(|t| self.entry(t, q)).sum::<f64>() / self.num_samples as f64
    }
}

pub fn build_cleared_delta_matrix(
    window: &TrainingWindow,
    node: &str,
    side: Side,
    candidates: &CandidatePrices,
) -> Result<ClearedDeltaMatrix, ModelError> {
    let ni = window
        .node_index(node)
        .ok_or_else(|| ModelError::UnknownNode(node.to_string()))?;
    let t = window.num_samples();
    let p = candidates.prices.len();
    let mut values = Vec::with_capacity(t * p);
    for ti in 0..t {
        let lambda = window.da_of(ti, ni);
        let delta = window.delta_of(ti, ni);
        for &price in &candidates.prices {
            values.push(if side.clears(lambda, price) { delta } else { 0.0 });
        }
    }
    Ok(ClearedDeltaMatrix {
        node: node.to_string(),
        side,
        prices: candidates.prices.clone(),
        num_samples: t,
        values,
    })
}
