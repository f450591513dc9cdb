//! Convergence (virtual) bidding optimization toolkit.
//!
//! Builds optimal supply/demand convergence bid curves from historical
//! day-ahead and real-time locational marginal prices via sample-based
//! mean-expected-shortfall linear programs, and backtests the resulting
//! strategies against realized prices.
//!
//! Module map:
//! - [`market_data`]: LMP ingestion, delta prices, rolling training windows,
//!   event-synchronization node clustering.
//! - [`risk`]: sample expected shortfall / windfall and `K = floor(alpha * T)`
//!   bookkeeping.
//! - [`solver`]: canonical LP/MILP representation, embedded simplex solver
//!   and branch-and-bound.
//! - [`bidmodels`]: the sample-VP, sample-V and sample-P optimization models,
//!   bid extraction and market-rule enforcement.
//! - [`backtest`]: rolling-window simulation driver, clearing, settlement and
//!   statistics with subsampling confidence intervals.
//! - [`synthetic`]: deterministic synthetic price panel generator for tests
//!   and demos.

pub mod backtest;
pub mod bidmodels;
pub mod market_data;
pub mod risk;
pub mod solver;
pub mod synthetic;

pub use backtest::{BacktestConfig, BacktestReport, HourlyOutcome, ModelKind};
pub use bidmodels::{BidSegment, BidSet, ModelConfig, Side};
pub use market_data::{NodeClustering, PricePanel, TrainingWindow};
pub use risk::RevenueSamples;
pub use solver::{LinearProgram, MixedIntegerProgram, Solution, SolveStatus};
