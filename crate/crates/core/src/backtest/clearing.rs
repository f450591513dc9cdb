//! Clearing against realized day-ahead prices and settlement at the delta
//! price. Clearing is inclusive on both sides: a supply segment clears when
//! the realized price is at or above its bid price, a demand segment when at
//! or below.

use crate::bidmodels::{tiered_payoff, BidSet, Interpretation, Side};
use crate::market_data::PricePanel;

use super::BacktestError;

/// Settlement of one bid set at its target hour. Volumes are L1 magnitudes,
/// split by side.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct Settlement {
    pub revenue: f64,
    pub attempted_supply: f64,
    pub attempted_demand: f64,
    pub cleared_supply: f64,
    pub cleared_demand: f64,
}

impl Settlement {
    pub fn attempted_volume(&self) -> f64 {
        self.attempted_supply + self.attempted_demand
    }

    pub fn cleared_volume(&self) -> f64 {
        self.cleared_supply + self.cleared_demand
    }

    fn attempted_mut(&mut self, side: Side) -> &mut f64 {
        match side {
            Side::Supply => &mut self.attempted_supply,
            Side::Demand => &mut self.attempted_demand,
        }
    }

    fn cleared_mut(&mut self, side: Side) -> &mut f64 {
        match side {
            Side::Supply => &mut self.cleared_supply,
            Side::Demand => &mut self.cleared_demand,
        }
    }
}

/// Clears and settles `bids` against the panel's realized prices at the bid
/// set's target hour. Revenue of a cleared segment is its signed volume
/// times the realized delta (day-ahead minus real-time).
pub fn settle(bids: &BidSet, panel: &PricePanel) -> Result<Settlement, BacktestError> {
    let hour = bids.target_hour;
    let mut out = Settlement::default();
    for (node, curves) in &bids.curves {
        let missing = || BacktestError::MissingRealized {
            node: node.clone(),
            hour,
        };
        let ni = panel.node_index(node).ok_or_else(missing)?;
        let lambda = panel.da_at(ni, hour).ok_or_else(missing)?;
        let delta = panel.delta_at(ni, hour).ok_or_else(missing)?;
        for side in [Side::Supply, Side::Demand] {
            let segs = curves.side(side);
            match bids.interpretation {
                Interpretation::Block => {
                    for s in segs {
                        *out.attempted_mut(side) += s.volume.abs();
                        if side.clears(lambda, s.price) {
                            *out.cleared_mut(side) += s.volume.abs();
                            out.revenue += s.volume * delta;
                        }
                    }
                }
                Interpretation::Tiered => {
                    // Tier volumes are cumulative; the deepest clearing tier
                    // settles, and the last tier is the attempted volume.
                    if let Some(last) = segs.last() {
                        *out.attempted_mut(side) += last.volume.abs();
                    }
                    let mut cleared = 0.0f64;
                    for s in segs {
                        if side.clears(lambda, s.price) {
                            cleared = s.volume;
                        }
                    }
                    *out.cleared_mut(side) += cleared.abs();
                    out.revenue += tiered_payoff(segs, side, lambda, delta);
                }
            }
        }
    }
    Ok(out)
}
