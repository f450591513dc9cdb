//! Bid curves: extraction from solved models, market-rule enforcement,
//! block/tiered conversion and (de)serialization.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};

use crate::solver::Solution;

use super::{BidPrice, ModelConfig, ModelError, Side, VariableMap};

/// One bid segment. Volumes are signed: supply positive, demand negative.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BidSegment {
    pub price: f64,
    pub volume: f64,
}

/// The supply and demand curves of one node, each sorted by ascending price.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct NodeCurves {
    pub supply: Vec<BidSegment>,
    pub demand: Vec<BidSegment>,
}

impl NodeCurves {
    pub fn side(&self, side: Side) -> &[BidSegment] {
        match side {
            Side::Supply => &self.supply,
            Side::Demand => &self.demand,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut Vec<BidSegment> {
        match side {
            Side::Supply => &mut self.supply,
            Side::Demand => &mut self.demand,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.supply.is_empty() && self.demand.is_empty()
    }
}

/// How segment volumes combine when several prices clear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    /// Each segment is an independent block; cleared volume is the sum of
    /// the volumes of all clearing segments.
    Block,
    /// Segments are cumulative tiers; cleared volume is the volume of the
    /// deepest clearing tier.
    Tiered,
}

/// A full set of bid curves for one target hour.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BidSet {
    pub target_hour: DateTime<Utc>,
    pub interpretation: Interpretation,
    pub curves: BTreeMap<String, NodeCurves>,
}

impl BidSet {
    pub fn empty(target_hour: DateTime<Utc>) -> Self {
        BidSet {
            target_hour,
            interpretation: Interpretation::Block,
            curves: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.curves.values().all(|c| c.is_empty())
    }

    pub fn num_segments(&self) -> usize {
        self.curves
            .values()
            .map(|c| c.supply.len() + c.demand.len())
            .sum()
    }

    /// Total attempted volume, the L1 norm over all segments.
    pub fn total_attempted_volume(&self) -> f64 {
        self.curves
            .values()
            .flat_map(|c| c.supply.iter().chain(&c.demand))
            .map(|s| s.volume.abs())
            .sum()
    }

    /// Scales every segment volume; used to spread a budget over curves that
    /// were optimized at unit volume.
    pub fn scale_volumes(&mut self, factor: f64) {
        for curves in self.curves.values_mut() {
            for seg in curves.supply.iter_mut().chain(curves.demand.iter_mut()) {
                seg.volume *= factor;
            }
        }
    }

    /// Writes the bid set as CSV with a stable column set. Floats use the
    /// shortest round-trip decimal form, so read-back is bit-exact.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target_hour", "node", "side", "segment_index", "price", "volume"])
            .map_err(csv_err)?;
        let hour = self.target_hour.to_rfc3339();
        for (node, curves) in &self.curves {
            for side in [Side::Supply, Side::Demand] {
                for (i, seg) in curves.side(side).iter().enumerate() {
                    w.write_record([
                        hour.as_str(),
                        node.as_str(),
                        &side.to_string(),
                        &i.to_string(),
                        &seg.price.to_string(),
                        &seg.volume.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush().map_err(|e| ModelError::InvalidCurve(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, ModelError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Reads a bid set previously written by `write_csv`. All rows must share
    /// one target hour.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let mut target: Option<DateTime<Utc>> = None;
        let mut curves: BTreeMap<String, NodeCurves> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 6 {
                return Err(ModelError::InvalidCurve(format!(
                    "expected 6 columns, got {}",
                    rec.len()
                )));
            }
            let hour: DateTime<Utc> = rec[0]
                .parse::<DateTime<chrono::FixedOffset>>()
                .map_err(|e| ModelError::InvalidCurve(format!("bad target_hour: {e}")))?
                .with_timezone(&Utc);
            match target {
                None => target = Some(hour),
                Some(t) if t != hour => {
                    return Err(ModelError::InvalidCurve(
                        "mixed target hours in one bid file".into(),
                    ))
                }
                _ => {}
            }
            let side = match &rec[2] {
                "supply" => Side::Supply,
                "demand" => Side::Demand,
                other => {
                    return Err(ModelError::InvalidCurve(format!("unknown side {other:?}")))
                }
            };
            let price: f64 = rec[4]
                .parse()
                .map_err(|e| ModelError::InvalidCurve(format!("bad price: {e}")))?;
            let volume: f64 = rec[5]
                .parse()
                .map_err(|e| ModelError::InvalidCurve(format!("bad volume: {e}")))?;
            curves
                .entry(rec[1].to_string())
                .or_default()
                .side_mut(side)
                .push(BidSegment { price, volume });
        }
        let target = target.ok_or_else(|| ModelError::InvalidCurve("empty bid file".into()))?;
        Ok(BidSet {
            target_hour: target,
            interpretation: Interpretation::Block,
            curves,
        })
    }
}

fn csv_err(e: csv::Error) -> ModelError {
    ModelError::InvalidCurve(e.to_string())
}

/// Turns an optimal model solution into block bid curves. Weights at or
/// below `extraction_epsilon` are discarded as solver noise; anything else
/// becomes a segment. Refuses non-optimal solutions.
pub fn extract_bids(
    solution: &Solution,
    vars: &VariableMap,
    config: &ModelConfig,
) -> Result<BidSet, ModelError> {
    if !solution.is_optimal() {
        return Err(ModelError::ExtractionRefused {
            status: solution.status,
        });
    }
    let mut curves: BTreeMap<String, NodeCurves> = BTreeMap::new();
    for w in &vars.weights {
        let x = solution.primal[w.col];
        if x.abs() <= config.extraction_epsilon {
            continue;
        }
        let price = match w.price {
            BidPrice::Candidate(p) => p,
            BidPrice::AlwaysClear => config.always_clear_price(w.side),
        };
        curves
            .entry(w.node.clone())
            .or_default()
            .side_mut(w.side)
            .push(BidSegment {
                price,
                volume: w.side.sign() * x,
            });
    }
    for c in curves.values_mut() {
        c.supply.sort_by(|a, b| a.price.partial_cmp(&b.price).unwrap());
        c.demand.sort_by(|a, b| a.price.partial_cmp(&b.price).unwrap());
    }
    Ok(BidSet {
        target_hour: vars.target_hour,
        interpretation: Interpretation::Block,
        curves,
    })
}

/// Enforces submittability rules on every curve, in order:
/// 1. drop segments below the minimum segment volume;
/// 2. while two adjacent prices are closer than the side's minimum distance,
///    drop the smaller-magnitude one (the higher price on ties);
/// 3. if more than `max_segments` remain, drop the smallest-magnitude
///    segments (the higher price on ties).
/// Returns the number of segments dropped.
pub fn enforce_market_rules(bids: &mut BidSet, config: &ModelConfig) -> usize {
    let mut dropped = 0;
    for curves in bids.curves.values_mut() {
        for side in [Side::Supply, Side::Demand] {
            let segs = curves.side_mut(side);
            let before = segs.len();
            segs.retain(|s| s.volume.abs() >= config.min_segment_volume);

            let d = config.min_distance(side);
            if d > 0.0 {
                loop {
                    let Some(i) = (1..segs.len())
                        .find(|&i| segs[i].price - segs[i - 1].price < d)
                    else {
                        break;
                    };
                    // drop the smaller-magnitude of the pair; higher price on ties
                    let drop = if segs[i - 1].volume.abs() < segs[i].volume.abs() {
                        i - 1
                    } else {
                        i
                    };
                    segs.remove(drop);
                }
            }

            while segs.len() > config.max_segments {
                let drop = segs
                    .iter()
                    .enumerate()
                    .min_by(|(ia, a), (ib, b)| {
                        a.volume
                            .abs()
                            .partial_cmp(&b.volume.abs())
                            .unwrap()
                            .then(ib.cmp(ia)) // tie: prefer the higher price
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                segs.remove(drop);
            }
            dropped += before - segs.len();
        }
    }
    bids.curves.retain(|_, c| !c.is_empty());
    dropped
}

/// Payoff of block segments at clearing price `lambda` and price spread
/// `delta`: every clearing segment settles its full signed volume.
pub fn block_payoff(segments: &[BidSegment], side: Side, lambda: f64, delta: f64) -> f64 {
    segments
        .iter()
        .filter(|s| side.clears(lambda, s.price))
        .map(|s| s.volume * delta)
        .sum()
}

/// Converts block segments to the equivalent cumulative tiered curve.
/// Supply tiers ascend in price, demand tiers descend; tier volumes are the
/// running sums. Duplicate prices on one side are rejected.
pub fn to_tiered(segments: &[BidSegment], side: Side) -> Result<Vec<BidSegment>, ModelError> {
    let mut sorted = segments.to_vec();
    match side {
        Side::Supply => sorted.sort_by(|a, b| a.price.partial_cmp(&b.price).unwrap()),
        Side::Demand => sorted.sort_by(|a, b| b.price.partial_cmp(&a.price).unwrap()),
    }
    for pair in sorted.windows(2) {
        if pair[0].price == pair[1].price {
            return Err(ModelError::InvalidCurve(format!(
                "duplicate {side} price {}",
                pair[0].price
            )));
        }
    }
    let mut cum = 0.0;
    Ok(sorted
        .into_iter()
        .map(|s| {
            cum += s.volume;
            BidSegment {
                price: s.price,
                volume: cum,
            }
        })
        .collect())
}

/// Payoff of a tiered curve (as produced by `to_tiered`) at clearing price
/// `lambda`: the deepest clearing tier settles its cumulative volume.
pub fn tiered_payoff(tiers: &[BidSegment], side: Side, lambda: f64, delta: f64) -> f64 {
    let mut cleared = 0.0;
    for t in tiers {
        if side.clears(lambda, t.price) {
            cleared = t.volume;
        }
    }
    cleared * delta
}
