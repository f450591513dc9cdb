//! Historical LMP ingestion, delta prices, rolling training windows and
//! event-synchronization node clustering.
//!
//! A loaded [`PricePanel`] is immutable and safe to share across workers.
//! Missing (node, hour) cells are stored as NaN and never enter a training
//! window; windows require complete coverage, there is no imputation.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset, TimeZone, Timelike, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate record for node {node} at {timestamp}")]
    Duplicate {
        line: usize,
        node: String,
        timestamp: DateTime<Utc>,
    },
    #[error("line {line}: non-finite price for node {node}")]
    NonFinitePrice { line: usize, node: String },
    #[error("line {line}: timestamp {timestamp} is not on an hour boundary")]
    NotHourAligned {
        line: usize,
        timestamp: DateTime<Utc>,
    },
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("insufficient history for target {target}: missing hours {missing:?}")]
    Coverage {
        target: DateTime<Utc>,
        missing: Vec<DateTime<Utc>>,
    },
    #[error("lookback_days must be >= 1")]
    EmptyLookback,
}

/// One raw price observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRecord {
    pub node: String,
    pub timestamp: DateTime<Utc>,
    pub da_lmp: f64,
    pub rt_lmp: f64,
}

/// Column-name map for CSV ingestion; OASIS-style exports vary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CsvSchema {
    pub node: String,
    pub timestamp: String,
    pub da_lmp: String,
    pub rt_lmp: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            node: "node".into(),
            timestamp: "timestamp".into(),
            da_lmp: "da_lmp".into(),
            rt_lmp: "rt_lmp".into(),
        }
    }
}

/// Aligned nodal time series of day-ahead, real-time and delta LMPs.
///
/// Matrices are N x H row-major; missing cells are NaN.
#[derive(Debug, Clone)]
pub struct PricePanel {
    nodes: Vec<String>,
    hours: Vec<DateTime<Utc>>,
    da: Vec<f64>,
    rt: Vec<f64>,
    delta: Vec<f64>,
}

impl PricePanel {
    /// Builds a panel from records. The hour axis is the continuous hourly
    /// range spanning the observed timestamps.
    pub fn from_records(records: Vec<PriceRecord>) -> Result<Self, MarketDataError> {
        if records.is_empty() {
            return Ok(PricePanel {
                nodes: Vec::new(),
                hours: Vec::new(),
                da: Vec::new(),
                rt: Vec::new(),
                delta: Vec::new(),
            });
        }
        let mut nodes: Vec<String> = records.iter().map(|r| r.node.clone()).collect();
        nodes.sort();
        nodes.dedup();
        let node_idx: BTreeMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let first = records.iter().map(|r| r.timestamp).min().unwrap();
        let last = records.iter().map(|r| r.timestamp).max().unwrap();
        let h = ((last - first).num_hours() + 1) as usize;
        let n = nodes.len();
        let hours: Vec<DateTime<Utc>> = (0..h).map(|i| first + Duration::hours(i as i64)).collect();
        let mut da = vec![f64::NAN; n * h];
        let mut rt = vec![f64::NAN; n * h];
        for r in &records {
            let ni = node_idx[r.node.as_str()];
            let hi = (r.timestamp - first).num_hours() as usize;
            da[ni * h + hi] = r.da_lmp;
            rt[ni * h + hi] = r.rt_lmp;
        }
        let delta: Vec<f64> = da.iter().zip(&rt).map(|(a, b)| a - b).collect();
        Ok(PricePanel {
            nodes,
            hours,
            da,
            rt,
            delta,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Flattens the panel back into records, skipping missing cells.
    /// Round-trips through [`PricePanel::from_records`].
    pub fn to_records(&self) -> Vec<PriceRecord> {
        let h = self.hours.len();
        let mut records = Vec::new();
        for (ni, node) in self.nodes.iter().enumerate() {
            for (hi, &timestamp) in self.hours.iter().enumerate() {
                let da_lmp = self.da[ni * h + hi];
                let rt_lmp = self.rt[ni * h + hi];
                if da_lmp.is_nan() || rt_lmp.is_nan() {
                    continue;
                }
                records.push(PriceRecord {
                    node: node.clone(),
                    timestamp,
                    da_lmp,
                    rt_lmp,
                });
            }
        }
        records
    }

    pub fn hours(&self) -> &[DateTime<Utc>] {
        &self.hours
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_hours(&self) -> usize {
        self.hours.len()
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(node)).ok()
    }

    fn hour_index(&self, ts: DateTime<Utc>) -> Option<usize> {
        let first = *self.hours.first()?;
        if ts < first {
            return None;
        }
        let i = (ts - first).num_hours() as usize;
        if i < self.hours.len() {
            Some(i)
        } else {
            None
        }
    }

    pub fn da_at(&self, node_idx: usize, ts: DateTime<Utc>) -> Option<f64> {
        let hi = self.hour_index(ts)?;
        let v = self.da[node_idx * self.num_hours() + hi];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn rt_at(&self, node_idx: usize, ts: DateTime<Utc>) -> Option<f64> {
        let hi = self.hour_index(ts)?;
        let v = self.rt[node_idx * self.num_hours() + hi];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn delta_at(&self, node_idx: usize, ts: DateTime<Utc>) -> Option<f64> {
        let hi = self.hour_index(ts)?;
        let v = self.delta[node_idx * self.num_hours() + hi];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Delta row for one node; NaN marks missing cells.
    pub fn delta_series(&self, node_idx: usize) -> &[f64] {
        let h = self.num_hours();
        &self.delta[node_idx * h..(node_idx + 1) * h]
    }

    pub fn missing_cells(&self) -> usize {
        self.da.iter().filter(|v| v.is_nan()).count()
    }

    /// A copy of the panel truncated to hours strictly before `cutoff`.
    /// Used by the no-lookahead audit.
    pub fn truncated_before(&self, cutoff: DateTime<Utc>) -> PricePanel {
        let h = self.num_hours();
        let keep = self.hours.iter().filter(|&&t| t < cutoff).count();
        let mut da = Vec::with_capacity(self.num_nodes() * keep);
        let mut rt = Vec::with_capacity(self.num_nodes() * keep);
        let mut delta = Vec::with_capacity(self.num_nodes() * keep);
        for ni in 0..self.num_nodes() {
            da.extend_from_slice(&self.da[ni * h..ni * h + keep]);
            rt.extend_from_slice(&self.rt[ni * h..ni * h + keep]);
            delta.extend_from_slice(&self.delta[ni * h..ni * h + keep]);
        }
        PricePanel {
            nodes: self.nodes.clone(),
            hours: self.hours[..keep].to_vec(),
            da,
            rt,
            delta,
        }
    }
}

/// The per-target-hour sample set used to build a model.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    pub nodes: Vec<String>,
    /// Sample timestamps, strictly before the target day, oldest first.
    pub timestamps: Vec<DateTime<Utc>>,
    /// T x N row-major delta prices.
    pub delta: Vec<f64>,
    /// T x N row-major day-ahead prices.
    pub da: Vec<f64>,
    pub target_hour: DateTime<Utc>,
    /// Hour of day in the market timezone.
    pub hour_of_day: u8,
}

impl TrainingWindow {
    pub fn num_samples(&self) -> usize {
        self.timestamps.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn delta_of(&self, sample: usize, node: usize) -> f64 {
        self.delta[sample * self.nodes.len() + node]
    }

    pub fn da_of(&self, sample: usize, node: usize) -> f64 {
        self.da[sample * self.nodes.len() + node]
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }
}

/// Slices the training window for `target_hour`: the same hour of day on
/// each of the `lookback_days` days preceding the target day.
///
/// With a fixed-offset market timezone "same hour of day" is exactly a
/// 24-hour stride, so samples are `target - k * 24h` for `k = 1..=lookback`.
pub fn rolling_window(
    panel: &PricePanel,
    target_hour: DateTime<Utc>,
    lookback_days: usize,
    nodes: &[String],
    market_offset: FixedOffset,
) -> Result<TrainingWindow, MarketDataError> {
    if lookback_days == 0 {
        return Err(MarketDataError::EmptyLookback);
    }
    let mut node_indices = Vec::with_capacity(nodes.len());
    for n in nodes {
        let idx = panel
            .node_index(n)
            .ok_or_else(|| MarketDataError::UnknownNode(n.clone()))?;
        node_indices.push(idx);
    }

    let mut timestamps: Vec<DateTime<Utc>> = (1..=lookback_days)
        .map(|k| target_hour - Duration::hours(24 * k as i64))
        .collect();
    timestamps.reverse(); // oldest first

    let mut missing = Vec::new();
    for &ts in &timestamps {
        let complete = node_indices
            .iter()
            .all(|&ni| panel.da_at(ni, ts).is_some() && panel.rt_at(ni, ts).is_some());
        if !complete {
            missing.push(ts);
        }
    }
    if !missing.is_empty() {
        return Err(MarketDataError::Coverage {
            target: target_hour,
            missing,
        });
    }

    let n = nodes.len();
    let t = timestamps.len();
    let mut delta = Vec::with_capacity(t * n);
    let mut da = Vec::with_capacity(t * n);
    for &ts in &timestamps {
        for &ni in &node_indices {
            delta.push(panel.delta_at(ni, ts).unwrap());
            da.push(panel.da_at(ni, ts).unwrap());
        }
    }
    let hour_of_day = market_offset
        .from_utc_datetime(&target_hour.naive_utc())
        .hour() as u8;
    Ok(TrainingWindow {
        nodes: nodes.to_vec(),
        timestamps,
        delta,
        da,
        target_hour,
        hour_of_day,
    })
}

/// Map from node to its cluster representative.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NodeClustering {
    pub representative: BTreeMap<String, String>,
    pub threshold: f64,
}

impl NodeClustering {
    /// The deduplicated, sorted list of representatives.
    pub fn representatives(&self) -> Vec<String> {
        let mut reps: Vec<String> = self.representative.values().cloned().collect();
        reps.sort();
        reps.dedup();
        reps
    }
}

/// Pairwise event-synchronization score of two event index sets:
/// `|A intersect B| / sqrt(|A| * |B|)`, with exact-hour coincidence.
/// Zero if either set is empty. Symmetric by construction.
pub fn event_synchronization_score(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    // Both inputs are sorted index lists.
    let mut i = 0;
    let mut j = 0;
    let mut common = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / ((a.len() as f64) * (b.len() as f64)).sqrt()
}

/// Event hours of a node: hours where `|delta|` exceeds the `event_quantile`
/// quantile of the node's `|delta|` over the panel (nearest-rank quantile).
pub fn event_hours(panel: &PricePanel, node_idx: usize, event_quantile: f64) -> Vec<usize> {
    let series = panel.delta_series(node_idx);
    let mut magnitudes: Vec<f64> = series.iter().filter(|v| !v.is_nan()).map(|v| v.abs()).collect();
    if magnitudes.is_empty() {
        return Vec::new();
    }
    magnitudes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((event_quantile * magnitudes.len() as f64).floor() as usize)
        .min(magnitudes.len() - 1);
    let threshold = magnitudes[rank];
    series
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan() && v.abs() > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Merges nodes whose pairwise event-synchronization score reaches
/// `threshold` (transitive closure); the representative is the
/// lexicographically smallest node of each cluster.
pub fn cluster_nodes(
    panel: &PricePanel,
    threshold: f64,
    event_quantile: f64,
) -> NodeClustering {
    assert!((0.0..=1.0).contains(&threshold), "threshold must be in [0,1]");
    assert!(
        event_quantile > 0.0 && event_quantile < 1.0,
        "event_quantile must be in (0,1)"
    );
    let n = panel.num_nodes();
    let events: Vec<Vec<usize>> = (0..n)
        .map(|i| event_hours(panel, i, event_quantile))
        .collect();

    // Union-find over node indices.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != c {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let score = event_synchronization_score(&events[i], &events[j]);
            if score >= threshold {
                let ri = find(&mut parent, i);
                let rj = find(&mut parent, j);
                if ri != rj {
                    // Panel nodes are sorted, so the smaller index is the
                    // lexicographically smaller node.
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut representative = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        representative.insert(panel.nodes[i].clone(), panel.nodes[r].clone());
    }
    NodeClustering {
        representative,
        threshold,
    }
}

/// Writes records in the default ingestion CSV schema. Floats use the
/// shortest round-trip decimal form, so read-back is exact.
pub fn write_price_csv<W: std::io::Write>(
    records: &[PriceRecord],
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "node,timestamp,da_lmp,rt_lmp")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.node,
            r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            r.da_lmp,
            r.rt_lmp
        )?;
    }
    Ok(())
}

/// Loads a price panel from CSV per the given column-name schema.
pub fn load_price_csv(path: &Path, schema: &CsvSchema) -> Result<PricePanel, MarketDataError> {
    let file = std::fs::File::open(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_price_reader(file, schema)
}

/// Same as [`load_price_csv`] for any reader.
pub fn load_price_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<PricePanel, MarketDataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MarketDataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, MarketDataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MarketDataError::Parse {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let node_col = col(&schema.node)?;
    let ts_col = col(&schema.timestamp)?;
    let da_col = col(&schema.da_lmp)?;
    let rt_col = col(&schema.rt_lmp)?;

    let mut records = Vec::new();
    let mut seen: BTreeMap<(String, DateTime<Utc>), usize> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| MarketDataError::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |c: usize| -> Result<&str, MarketDataError> {
            row.get(c).ok_or_else(|| MarketDataError::Parse {
                line,
                message: "short row".into(),
            })
        };
        let node = field(node_col)?.to_string();
        let ts_raw = field(ts_col)?;
        let timestamp = DateTime::parse_from_rfc3339(ts_raw)
            .map_err(|e| MarketDataError::Parse {
                line,
                message: format!("bad timestamp {ts_raw:?}: {e}"),
            })?
            .with_timezone(&Utc);
        if timestamp.timestamp() % 3600 != 0 {
            return Err(MarketDataError::NotHourAligned { line, timestamp });
        }
        let parse_price = |c: usize, what: &str| -> Result<f64, MarketDataError> {
            field(c)?.trim().parse::<f64>().map_err(|e| MarketDataError::Parse {
                line,
                message: format!("bad {what}: {e}"),
            })
        };
        let da_lmp = parse_price(da_col, "da_lmp")?;
        let rt_lmp = parse_price(rt_col, "rt_lmp")?;
        if !da_lmp.is_finite() || !rt_lmp.is_finite() {
            return Err(MarketDataError::NonFinitePrice { line, node });
        }
        if seen.insert((node.clone(), timestamp), line).is_some() {
            return Err(MarketDataError::Duplicate {
                line,
                node,
                timestamp,
            });
        }
        records.push(PriceRecord {
            node,
            timestamp,
            da_lmp,
            rt_lmp,
        });
    }
    PricePanel::from_records(records)
}
