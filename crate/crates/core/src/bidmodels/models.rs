//! LP and MILP builders for the sample-VP, sample-V and sample-P models.

use chrono::{DateTime, Utc};

use crate::market_data::TrainingWindow;
use crate::risk::k_of;
use crate::solver::{
    solve_lp, LinearProgram, MixedIntegerProgram, Relation, Sense, Solution,
};

use super::{
    build_cleared_delta_matrix, candidate_prices, ModelConfig, ModelError, Side,
};

/// Solver tolerances and limits threaded through the model layer.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub iteration_limit: usize,
    pub milp_gap: f64,
    pub milp_node_limit: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feasibility_tol: crate::solver::DEFAULT_TOL,
            iteration_limit: 500_000,
            milp_gap: crate::solver::DEFAULT_GAP,
            milp_node_limit: 200_000,
        }
    }
}

/// The bid price an LP weight column stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BidPrice {
    /// A candidate price taken from the training day-ahead prices.
    Candidate(f64),
    /// Submitted at the configured always-clear price (sample-V volumes).
    AlwaysClear,
}

/// One LP weight column: which (node, side, price) it is the volume of.
#[derive(Debug, Clone)]
pub struct WeightVar {
    pub col: usize,
    pub node: String,
    pub side: Side,
    pub price: BidPrice,
}

/// Records which LP column is which bid weight, plus the signed per-sample
/// revenue coefficients so the training revenue vector can be reconstructed
/// from a primal point.
#[derive(Debug, Clone)]
pub struct VariableMap {
    pub target_hour: DateTime<Utc>,
    pub weights: Vec<WeightVar>,
    pub num_samples: usize,
    /// `num_samples x weights.len()` row-major signed coefficients.
    revenue_coeffs: Vec<f64>,
}

impl VariableMap {
    /// In-sample revenue vector r of a primal point.
    pub fn revenue_vector(&self, primal: &[f64]) -> Vec<f64> {
        let n = self.weights.len();
        (0..self.num_samples)
            .map(|t| {
                self.weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| self.revenue_coeffs[t * n + i] * primal[w.col])
                    .sum()
            })
            .collect()
    }
}

/// An optimization model plus its variable map.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub lp: LinearProgram,
    pub vars: VariableMap,
}

struct EsRows;

/// Adds the (tau, z) expected-shortfall machinery:
/// `z_t >= tau - r_t` with `r_t = sum_j a_{t,j} x_j`, and
/// `-tau + (1/K) sum z_t <= rho`.
fn add_es_rows(
    lp: &mut LinearProgram,
    col_coeffs: &[(usize, Vec<f64>)],
    t: usize,
    k: usize,
    rho: f64,
) -> EsRows {
    let tau = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    let z: Vec<usize> = (0..t).map(|_| lp.add_var(0.0, f64::INFINITY, 0.0)).collect();
    for ti in 0..t {
        let mut row = vec![(z[ti], 1.0), (tau, -1.0)];
        for (col, coeffs) in col_coeffs {
            if coeffs[ti] != 0.0 {
                row.push((*col, coeffs[ti]));
            }
        }
        lp.add_constraint(row, Relation::Ge, 0.0);
    }
    let mut es_row = vec![(tau, -1.0)];
    let inv_k = 1.0 / k as f64;
    for &zt in &z {
        es_row.push((zt, inv_k));
    }
    lp.add_constraint(es_row, Relation::Le, rho);
    EsRows
}

/// Adds the volume constraint set: total L1 budget, per-position caps and
/// optional net-volume bounds. `groups` lists the weight columns of each
/// position; `sides` the matching side.
fn add_volume_rows(
    lp: &mut LinearProgram,
    groups: &[Vec<usize>],
    sides: &[Side],
    config: &ModelConfig,
) {
    let all: Vec<(usize, f64)> = groups
        .iter()
        .flatten()
        .map(|&c| (c, 1.0))
        .collect();
    if !all.is_empty() {
        lp.add_constraint(all, Relation::Le, config.total_volume);
    }
    for cols in groups {
        if !cols.is_empty() {
            let row: Vec<(usize, f64)> = cols.iter().map(|&c| (c, 1.0)).collect();
            lp.add_constraint(row, Relation::Le, config.per_position_cap);
        }
    }
    if let Some((lo, hi)) = config.net_volume_bounds {
        let row: Vec<(usize, f64)> = groups
            .iter()
            .zip(sides)
            .flat_map(|(cols, side)| cols.iter().map(|&c| (c, side.sign())))
            .collect();
        if !row.is_empty() {
            lp.add_constraint(row.clone(), Relation::Ge, lo);
            lp.add_constraint(row, Relation::Le, hi);
        }
    }
}

/// Builds the sample-VP LP: one nonnegative weight per (position, candidate
/// price), revenues through the precomputed cleared-delta matrices.
pub fn build_sample_vp(
    window: &TrainingWindow,
    positions: &[(String, Side)],
    config: &ModelConfig,
) -> Result<BuiltModel, ModelError> {
    config.validate()?;
    if positions.is_empty() {
        return Err(ModelError::NoModel("no positions requested".into()));
    }
    let t = window.num_samples();

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut weights: Vec<WeightVar> = Vec::new();
    let mut col_coeffs: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut sides: Vec<Side> = Vec::new();

    for (node, side) in positions {
        let cands = candidate_prices(window, node, *side, config.price_bounds(*side))?;
        let mut group = Vec::new();
        if !cands.prices.is_empty() {
            let mat = build_cleared_delta_matrix(window, node, *side, &cands)?;
            for (q, &price) in mat.prices.iter().enumerate() {
                let coeffs: Vec<f64> =
                    (0..t).map(|ti| side.sign() * mat.entry(ti, q)).collect();
                let mean = coeffs.iter().sum::<f64>() / t as f64;
                let col = lp.add_var(0.0, f64::INFINITY, mean);
                weights.push(WeightVar {
                    col,
                    node: node.clone(),
                    side: *side,
                    price: BidPrice::Candidate(price),
                });
                col_coeffs.push((col, coeffs));
                group.push(col);
            }
        }
        groups.push(group);
        sides.push(*side);
    }

    if weights.is_empty() {
        return Err(ModelError::NoModel(
            "every requested position has an empty candidate set".into(),
        ));
    }

    add_volume_rows(&mut lp, &groups, &sides, config);
    if config.rho_tilde.is_finite() {
        // K is only needed (and only has to be positive) when the risk
        // constraint is active.
        let k = k_of(config.alpha, t)?;
        add_es_rows(
            &mut lp,
            &col_coeffs,
            t,
            k,
            config.total_volume * config.rho_tilde,
        );
    }

    Ok(BuiltModel {
        lp,
        vars: variable_map(window.target_hour, weights, &col_coeffs, t),
    })
}

/// Builds the sample-V LP: one volume variable per position, bid prices
/// marginalized out (always-clear).
pub fn build_sample_v(
    window: &TrainingWindow,
    positions: &[(String, Side)],
    config: &ModelConfig,
) -> Result<BuiltModel, ModelError> {
    config.validate()?;
    if positions.is_empty() {
        return Err(ModelError::NoModel("no positions requested".into()));
    }
    let t = window.num_samples();

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut weights = Vec::new();
    let mut col_coeffs = Vec::new();
    let mut groups = Vec::new();
    let mut sides = Vec::new();

    for (node, side) in positions {
        let ni = window
            .node_index(node)
            .ok_or_else(|| ModelError::UnknownNode(node.clone()))?;
        let coeffs: Vec<f64> = (0..t)
            .map(|ti| side.sign() * window.delta_of(ti, ni))
            .collect();
        let mean = coeffs.iter().sum::<f64>() / t as f64;
        let col = lp.add_var(0.0, f64::INFINITY, mean);
        weights.push(WeightVar {
            col,
            node: node.clone(),
            side: *side,
            price: BidPrice::AlwaysClear,
        });
        col_coeffs.push((col, coeffs));
        groups.push(vec![col]);
        sides.push(*side);
    }

    add_volume_rows(&mut lp, &groups, &sides, config);
    if config.rho_tilde.is_finite() {
        // K is only needed (and only has to be positive) when the risk
        // constraint is active.
        let k = k_of(config.alpha, t)?;
        add_es_rows(
            &mut lp,
            &col_coeffs,
            t,
            k,
            config.total_volume * config.rho_tilde,
        );
    }

    Ok(BuiltModel {
        lp,
        vars: variable_map(window.target_hour, weights, &col_coeffs, t),
    })
}

/// Builds the sample-P bid-curve LP for one (node, side): a unit volume is
/// distributed among candidate prices, risk bound `rho = rho_tilde`.
pub fn build_sample_p_lp(
    window: &TrainingWindow,
    node: &str,
    side: Side,
    config: &ModelConfig,
) -> Result<BuiltModel, ModelError> {
    config.validate()?;
    let t = window.num_samples();

    let cands = candidate_prices(window, node, side, config.price_bounds(side))?;
    if cands.prices.is_empty() {
        return Err(ModelError::NoModel(format!(
            "no candidate prices for {node}/{side}"
        )));
    }
    let mat = build_cleared_delta_matrix(window, node, side, &cands)?;

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut weights = Vec::new();
    let mut col_coeffs = Vec::new();
    for (q, &price) in mat.prices.iter().enumerate() {
        let coeffs: Vec<f64> = (0..t).map(|ti| side.sign() * mat.entry(ti, q)).collect();
        let mean = coeffs.iter().sum::<f64>() / t as f64;
        let col = lp.add_var(0.0, f64::INFINITY, mean);
        weights.push(WeightVar {
            col,
            node: node.to_string(),
            side,
            price: BidPrice::Candidate(price),
        });
        col_coeffs.push((col, coeffs));
    }
    // Unit volume distributed among the candidate prices.
    let row: Vec<(usize, f64)> = weights.iter().map(|w| (w.col, 1.0)).collect();
    lp.add_constraint(row, Relation::Le, 1.0);
    if config.rho_tilde.is_finite() {
        let k = k_of(config.alpha, t)?;
        add_es_rows(&mut lp, &col_coeffs, t, k, config.rho_tilde);
    }

    Ok(BuiltModel {
        lp,
        vars: variable_map(window.target_hour, weights, &col_coeffs, t),
    })
}

fn variable_map(
    target_hour: DateTime<Utc>,
    weights: Vec<WeightVar>,
    col_coeffs: &[(usize, Vec<f64>)],
    t: usize,
) -> VariableMap {
    let n = weights.len();
    let mut revenue_coeffs = vec![0.0; t * n];
    for (i, (_, coeffs)) in col_coeffs.iter().enumerate() {
        for ti in 0..t {
            revenue_coeffs[ti * n + i] = coeffs[ti];
        }
    }
    VariableMap {
        target_hour,
        weights,
        num_samples: t,
        revenue_coeffs,
    }
}

/// Builds the sample-VP MILP: explicit segment price choices via assignment
/// binaries and big-M rows linking bid price, clearing and cleared volume.
/// Intended for tiny equivalence-test instances only.
pub fn build_sample_vp_milp(
    window: &TrainingWindow,
    positions: &[(String, Side)],
    config: &ModelConfig,
) -> Result<MixedIntegerProgram, ModelError> {
    config.validate()?;
    if positions.is_empty() {
        return Err(ModelError::NoModel("no positions requested".into()));
    }
    let t = window.num_samples();
    let s_max = config.max_segments;
    let big_m = config.per_position_cap.min(config.total_volume);

    // Size guard on binaries.
    let mut binaries = 0usize;
    let mut pos_candidates = Vec::new();
    for (node, side) in positions {
        let cands = candidate_prices(window, node, *side, config.price_bounds(*side))?;
        binaries += s_max * cands.prices.len();
        pos_candidates.push(cands);
    }
    if binaries > config.milp_binary_limit {
        return Err(ModelError::TooLarge {
            binaries,
            limit: config.milp_binary_limit,
        });
    }

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut integer_vars = Vec::new();
    // Per-sample signed revenue coefficients over the cleared-volume vars.
    let mut col_coeffs: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut sides: Vec<Side> = Vec::new();

    for ((node, side), cands) in positions.iter().zip(&pos_candidates) {
        let ni = window.node_index(node).unwrap();
        let p = cands.prices.len();
        let mut w_vars = Vec::new();
        if p > 0 {
            let mut prev_y: Option<Vec<usize>> = None;
            for _s in 0..s_max {
                let w = lp.add_var(0.0, f64::INFINITY, 0.0);
                w_vars.push(w);
                let y: Vec<usize> = (0..p).map(|_| lp.add_var(0.0, 1.0, 0.0)).collect();
                integer_vars.extend(&y);

                // At most one price per segment; unused segments carry no volume.
                let use_row: Vec<(usize, f64)> = y.iter().map(|&v| (v, 1.0)).collect();
                lp.add_constraint(use_row.clone(), Relation::Le, 1.0);
                let mut w_link = vec![(w, 1.0)];
                w_link.extend(y.iter().map(|&v| (v, -big_m)));
                lp.add_constraint(w_link, Relation::Le, 0.0);

                // Symmetry breaking: active segments form a prefix with
                // strictly increasing price indices.
                if let Some(prev) = &prev_y {
                    let mut order: Vec<(usize, f64)> =
                        y.iter().map(|&v| (v, 1.0)).collect();
                    order.extend(prev.iter().map(|&v| (v, -1.0)));
                    lp.add_constraint(order, Relation::Le, 0.0);

                    let mut idx_row: Vec<(usize, f64)> = prev
                        .iter()
                        .enumerate()
                        .map(|(q, &v)| (v, (q + 1) as f64))
                        .collect();
                    idx_row.extend(
                        y.iter()
                            .enumerate()
                            .map(|(q, &v)| (v, (p + 1) as f64 - (q + 1) as f64)),
                    );
                    lp.add_constraint(idx_row, Relation::Le, p as f64);
                }

                // Cleared volume per sample with big-M linking.
                for ti in 0..t {
                    let lambda = window.da_of(ti, ni);
                    let v = lp.add_var(0.0, f64::INFINITY, 0.0);
                    // c = sum over clearing candidates of y_q
                    let clearing: Vec<usize> = cands
                        .prices
                        .iter()
                        .zip(&y)
                        .filter(|(&price, _)| side.clears(lambda, price))
                        .map(|(_, &yv)| yv)
                        .collect();
                    // v <= w
                    lp.add_constraint(vec![(v, 1.0), (w, -1.0)], Relation::Le, 0.0);
                    // v <= M * c
                    let mut cap_row = vec![(v, 1.0)];
                    cap_row.extend(clearing.iter().map(|&yv| (yv, -big_m)));
                    lp.add_constraint(cap_row, Relation::Le, 0.0);
                    // w - v <= M * (1 - c)
                    let mut force_row = vec![(w, 1.0), (v, -1.0)];
                    force_row.extend(clearing.iter().map(|&yv| (yv, big_m)));
                    lp.add_constraint(force_row, Relation::Le, big_m);

                    let delta = window.delta_of(ti, ni);
                    let signed = side.sign() * delta;
                    // Objective term (1/T) * signed * v, plus ES coefficient.
                    if signed != 0.0 {
                        lp.objective.push((v, signed / t as f64));
                        let mut coeffs = vec![0.0; t];
                        coeffs[ti] = signed;
                        col_coeffs.push((v, coeffs));
                    }
                }
                prev_y = Some(y);
            }
        }
        groups.push(w_vars);
        sides.push(*side);
    }

    add_volume_rows(&mut lp, &groups, &sides, config);
    if config.rho_tilde.is_finite() {
        // K is only needed (and only has to be positive) when the risk
        // constraint is active.
        let k = k_of(config.alpha, t)?;
        add_es_rows(
            &mut lp,
            &col_coeffs,
            t,
            k,
            config.total_volume * config.rho_tilde,
        );
    }

    Ok(MixedIntegerProgram {
        base: lp,
        integer_vars,
    })
}

/// Builds the sample-P MILP for one (node, side): a single bid price chosen
/// among the candidates via binaries, unit volume forced.
pub fn build_sample_p_milp(
    window: &TrainingWindow,
    node: &str,
    side: Side,
    config: &ModelConfig,
) -> Result<MixedIntegerProgram, ModelError> {
    config.validate()?;
    let t = window.num_samples();
    let cands = candidate_prices(window, node, side, config.price_bounds(side))?;
    if cands.prices.is_empty() {
        return Err(ModelError::NoModel(format!(
            "no candidate prices for {node}/{side}"
        )));
    }
    if cands.prices.len() > config.milp_binary_limit {
        return Err(ModelError::TooLarge {
            binaries: cands.prices.len(),
            limit: config.milp_binary_limit,
        });
    }
    let mat = build_cleared_delta_matrix(window, node, side, &cands)?;

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut col_coeffs = Vec::new();
    let mut y = Vec::new();
    for q in 0..mat.num_prices() {
        let coeffs: Vec<f64> = (0..t).map(|ti| side.sign() * mat.entry(ti, q)).collect();
        let mean = coeffs.iter().sum::<f64>() / t as f64;
        let col = lp.add_var(0.0, 1.0, mean);
        y.push(col);
        col_coeffs.push((col, coeffs));
    }
    // Exactly one bid price: unit volume is forced.
    let row: Vec<(usize, f64)> = y.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(row, Relation::Eq, 1.0);
    if config.rho_tilde.is_finite() {
        let k = k_of(config.alpha, t)?;
        add_es_rows(&mut lp, &col_coeffs, t, k, config.rho_tilde);
    }

    Ok(MixedIntegerProgram {
        base: lp,
        integer_vars: y,
    })
}

/// A scored (node, side) position: the sample-P LP objective, with the
/// built model and its solution retained for reuse.
pub struct PositionScore {
    pub node: String,
    pub side: Side,
    pub objective: f64,
    pub built: Option<(BuiltModel, Solution)>,
}

/// Solves the sample-P bid-curve LP for every (node, side) and ranks the
/// positions by optimal objective, descending. Positions with no model are
/// scored negative infinity and ranked last; ties break by node id, supply
/// first.
pub fn score_positions(
    window: &TrainingWindow,
    nodes: &[String],
    config: &ModelConfig,
    settings: &SolverSettings,
) -> Vec<PositionScore> {
    let mut scores: Vec<PositionScore> = Vec::with_capacity(nodes.len() * 2);
    for node in nodes {
        for side in [Side::Supply, Side::Demand] {
            let score = match build_sample_p_lp(window, node, side, config) {
                Ok(built) => {
                    let sol = solve_lp(
                        &built.lp,
                        settings.feasibility_tol,
                        settings.iteration_limit,
                    );
                    if sol.is_optimal() {
                        PositionScore {
                            node: node.clone(),
                            side,
                            objective: sol.objective_value,
                            built: Some((built, sol)),
                        }
                    } else {
                        PositionScore {
                            node: node.clone(),
                            side,
                            objective: f64::NEG_INFINITY,
                            built: None,
                        }
                    }
                }
                Err(_) => PositionScore {
                    node: node.clone(),
                    side,
                    objective: f64::NEG_INFINITY,
                    built: None,
                },
            };
            scores.push(score);
        }
    }
    scores.sort_by(|a, b| {
        b.objective
            .partial_cmp(&a.objective)
            .unwrap()
            .then_with(|| a.node.cmp(&b.node))
            .then_with(|| a.side.cmp(&b.side)) // Supply < Demand
    });
    scores
}
