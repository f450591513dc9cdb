//! Run configuration: one structured TOML file holds everything a run
//! needs; command-line flags override individual keys. The effective
//! (post-override) configuration is hashed and the hash is stamped into
//! every output file for provenance.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use convbid::bidmodels::{ModelConfig, SolverSettings};
use convbid::market_data::CsvSchema;
use convbid::{BacktestConfig, ModelKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{validation, CliError};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub backtest: BacktestSection,
    pub cluster: ClusterSection,
    pub solver: SolverSettings,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Raw price CSV (ingest input).
    pub prices: Option<PathBuf>,
    /// Validated panel cache (ingest output, everything else's input).
    pub cache: Option<PathBuf>,
    /// Market timezone as a fixed UTC offset, seconds east.
    pub market_offset_seconds: i32,
    /// Column names of the raw CSV.
    pub schema: CsvSchema,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            prices: None,
            cache: None,
            market_offset_seconds: 0,
            schema: CsvSchema::default(),
        }
    }
}

// no deny_unknown_fields here: serde cannot combine it with `flatten`
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(flatten)]
    pub config: ModelConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::SampleVp,
            config: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    /// First target hour, UTC (usually midnight of the first backtest day).
    pub start: Option<DateTime<Utc>>,
    pub num_days: usize,
    pub lookback_days: usize,
    /// Positions kept per side for the budget-spreading recipes.
    pub top_positions: usize,
    /// Positions kept per side for the at-cap recipe.
    pub max_positions: usize,
    /// Nodes to trade (typically cluster representatives). `None` = all.
    pub nodes: Option<Vec<String>>,
    /// Worker threads; 0 = one per logical CPU. Results are identical for
    /// any worker count.
    pub workers: usize,
}

impl Default for BacktestSection {
    fn default() -> Self {
        BacktestSection {
            start: None,
            num_days: 30,
            lookback_days: 365,
            top_positions: 100,
            max_positions: 10,
            nodes: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    /// Event-synchronization score above which two nodes are merged.
    pub threshold: f64,
    /// |delta| quantile defining an "event" hour.
    pub event_quantile: f64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            threshold: 0.98,
            event_quantile: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Subsampling block length in days for confidence intervals.
    pub block_days: usize,
    pub confidence: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            block_days: 7,
            confidence: 0.95,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| validation(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model
            .config
            .validate()
            .map_err(|e| validation(format!("model configuration: {e}")))?;
        if !(0.0 < self.output.confidence && self.output.confidence < 1.0) {
            return Err(validation(format!(
                "output.confidence {} not in (0, 1)",
                self.output.confidence
            )));
        }
        if self.output.block_days == 0 {
            return Err(validation("output.block_days must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.cluster.event_quantile) {
            return Err(validation(format!(
                "cluster.event_quantile {} not in [0, 1]",
                self.cluster.event_quantile
            )));
        }
        // the cache is checked when loaded: ingest creates it
        if let Some(path) = &self.data.prices {
            if !path.exists() {
                return Err(validation(format!(
                    "referenced path does not exist: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration, truncated for readability.
    /// Stamped into every output file. The worker count and output
    /// directory are excluded: they are execution details that never
    /// change results.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.backtest.workers = 0;
        semantic.output.dir = PathBuf::new();
        let canonical = serde_json::to_vec(&semantic).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        let mut hex = String::with_capacity(16);
        for b in &digest[..8] {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    pub fn to_backtest_config(
        &self,
        start: DateTime<Utc>,
        num_days: usize,
    ) -> BacktestConfig {
        BacktestConfig {
            model: self.model.kind,
            start,
            num_days,
            lookback_days: self.backtest.lookback_days,
            market_offset_seconds: self.data.market_offset_seconds,
            nodes: self.backtest.nodes.clone(),
            top_positions: self.backtest.top_positions,
            max_positions: self.backtest.max_positions,
            model_config: self.model.config.clone(),
            solver: self.solver,
        }
    }
}
