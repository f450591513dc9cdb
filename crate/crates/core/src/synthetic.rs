//! Deterministic synthetic price panels for tests, benchmarks and demos.
//!
//! Nodes come in groups: within a group the delta series is identical, so
//! event-synchronization clustering collapses each group to one
//! representative. Prices are quantized to a configurable tick so the
//! candidate-price sets stay small.

use std::io::Write;

use chrono::{DateTime, Duration, Utc};

use crate::market_data::{PricePanel, PriceRecord};

/// SplitMix64: a tiny, seedable, reproducible generator. The output stream
/// is fixed for all time; synthetic fixtures must never change under
/// dependency upgrades, which rules out external RNG crates here.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Roughly standard normal (sum of uniforms, rescaled).
    pub fn next_gauss(&mut self) -> f64 {
        let s: f64 = (0..4).map(|_| self.next_f64()).sum();
        (s - 2.0) * (3.0f64).sqrt()
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    /// Nodes per delta-identical group.
    pub group_size: usize,
    pub start: DateTime<Utc>,
    pub num_days: usize,
    pub seed: u64,
    /// Price tick; all prices are multiples of it.
    pub price_quantum: f64,
    /// If set, real-time equals day-ahead everywhere (delta identically 0).
    pub zero_delta: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_nodes: 20,
            group_size: 4,
            start: "2019-01-01T00:00:00Z".parse().unwrap(),
            num_days: 730,
            seed: 7,
            price_quantum: 0.25,
            zero_delta: false,
        }
    }
}

fn quantize(x: f64, q: f64) -> f64 {
    (x / q).round() * q
}

/// Deterministic node name, zero-padded so lexicographic equals numeric
/// order.
pub fn node_name(i: usize) -> String {
    format!("NODE{i:03}")
}

pub fn generate_records(cfg: &SyntheticConfig) -> Vec<PriceRecord> {
    let hours = cfg.num_days * 24;
    let num_groups = cfg.num_nodes.div_ceil(cfg.group_size.max(1));

    // Shared per-group delta series: mild noise plus occasional spikes, so
    // the |delta| tail is fat enough for event clustering to bite.
    let mut group_delta: Vec<Vec<f64>> = Vec::with_capacity(num_groups);
    for g in 0..num_groups {
        let mut rng = SplitMix64::new(cfg.seed ^ (0xA5A5_0000 + g as u64));
        let mut series = Vec::with_capacity(hours);
        for _ in 0..hours {
            let d = if cfg.zero_delta {
                0.0
            } else if rng.next_f64() < 0.01 {
                // spike hour
                let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                sign * (40.0 + 40.0 * rng.next_f64())
            } else {
                3.0 * rng.next_gauss()
            };
            series.push(quantize(d, cfg.price_quantum));
        }
        group_delta.push(series);
    }

    let mut records = Vec::with_capacity(cfg.num_nodes * hours);
    for ni in 0..cfg.num_nodes {
        let g = ni / cfg.group_size.max(1);
        let mut rng = SplitMix64::new(cfg.seed ^ (0x5A5A_0000 + ni as u64));
        let node = node_name(ni);
        let offset = 2.0 * (ni % cfg.group_size.max(1)) as f64;
        for h in 0..hours {
            let hod = (h % 24) as f64;
            // diurnal shape: low overnight, evening peak
            let diurnal = 10.0 * (std::f64::consts::TAU * (hod - 6.0) / 24.0).sin();
            let da = quantize(
                30.0 + offset + diurnal + 2.0 * rng.next_gauss(),
                cfg.price_quantum,
            );
            let delta = group_delta[g][h];
            records.push(PriceRecord {
                node: node.clone(),
                timestamp: cfg.start + Duration::hours(h as i64),
                da_lmp: da,
                rt_lmp: da - delta,
            });
        }
    }
    records
}

pub fn generate_panel(cfg: &SyntheticConfig) -> PricePanel {
    PricePanel::from_records(generate_records(cfg)).expect("synthetic records are well-formed")
}

/// Writes records in the default ingestion CSV schema.
pub fn write_csv<W: Write>(records: &[PriceRecord], out: &mut W) -> std::io::Result<()> {
    crate::market_data::write_price_csv(records, out)
}
