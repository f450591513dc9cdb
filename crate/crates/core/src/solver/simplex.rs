//! Dense two-phase primal simplex over the full tableau.
//!
//! General bounds are reduced to `x >= 0` by shifting / mirroring / splitting
//! variables; finite upper bounds become explicit rows. Pricing is Dantzig
//! with a switch to Bland's rule after a run of degenerate pivots. Long
//! degenerate runs accumulate rounding error in the working tableau, so it
//! is periodically rebuilt exactly from a pristine copy and the current
//! basis (the dense-tableau analogue of refactorization).

use super::{LinearProgram, Relation, Sense, Solution, SolveStatus};

const PIVOT_EPS: f64 = 1e-10;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 32;

/// How an original variable maps onto nonnegative tableau columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// x = offset + x'
    Shifted { col: usize, offset: f64 },
    /// x = offset - x'
    Mirrored { col: usize, offset: f64 },
    /// x = x+ - x-
    Split { pos: usize, neg: usize },
}

pub fn solve_lp(lp: &LinearProgram, tol: f64, iter_limit: usize) -> Solution {
    debug_assert!(lp.validate().is_ok());
    // First attempt with anti-degeneracy perturbation; fall back to the
    // plain solve if the perturbed run cannot produce a verified answer.
    match solve_lp_inner(lp, tol, iter_limit, true) {
        Some(sol) => sol,
        None => solve_lp_inner(lp, tol, iter_limit, false)
            .expect("unperturbed solve always returns a solution"),
    }
}

/// Base step of the per-row rhs perturbation that breaks primal degeneracy.
///
/// Each inequality `i` is relaxed by `(i + 1) * PERTURB_BASE` (equalities
/// are left exact), which strictly enlarges the feasible region and gives
/// every basic feasible solution distinct positive slacks. Highly degenerate
/// vertices — where an unperturbed solve can stall for millions of
/// tie-breaking pivots and rounding noise can drive the basis singular —
/// unfold into ordinary vertices. The optimal basis is then re-expressed
/// against the exact rhs, so the perturbation never leaks into the answer.
const PERTURB_BASE: f64 = 1e-6;

fn solve_lp_inner(
    lp: &LinearProgram,
    tol: f64,
    iter_limit: usize,
    perturb: bool,
) -> Option<Solution> {
    // Map variables to nonnegative columns.
    let mut maps = Vec::with_capacity(lp.num_vars);
    let mut ncols = 0usize;
    // Extra rows for finite upper bounds of shifted/mirrored variables.
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for &(l, u) in &lp.bounds {
        if l.is_finite() {
            let col = ncols;
            ncols += 1;
            maps.push(VarMap::Shifted { col, offset: l });
            if u.is_finite() {
                bound_rows.push((col, u - l));
            }
        } else if u.is_finite() {
            let col = ncols;
            ncols += 1;
            maps.push(VarMap::Mirrored { col, offset: u });
        } else {
            let pos = ncols;
            let neg = ncols + 1;
            ncols += 2;
            maps.push(VarMap::Split { pos, neg });
        }
    }

    // Dense rows in transformed space: coeffs over ncols, relation, rhs.
    let nrows = lp.constraints.len() + bound_rows.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(nrows);
    let mut rels: Vec<Relation> = Vec::with_capacity(nrows);
    let mut rhss: Vec<f64> = Vec::with_capacity(nrows);
    for c in &lp.constraints {
        let mut row = vec![0.0; ncols];
        let mut rhs = c.rhs;
        for &(j, a) in &c.coeffs {
            match maps[j] {
                VarMap::Shifted { col, offset } => {
                    row[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    row[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    row[pos] += a;
                    row[neg] -= a;
                }
            }
        }
        rows.push(row);
        rels.push(c.relation);
        rhss.push(rhs);
    }
    for &(col, ub) in &bound_rows {
        let mut row = vec![0.0; ncols];
        row[col] = 1.0;
        rows.push(row);
        rels.push(Relation::Le);
        rhss.push(ub);
    }

    // Objective in transformed space, canonicalized to minimize.
    let flip = match lp.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    let mut cost = vec![0.0; ncols];
    for &(j, c) in &lp.objective {
        let c = c * flip;
        match maps[j] {
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Mirrored { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    // The working problem's rhs; `rhss` keeps the exact values.
    let mut rhss_work = rhss.clone();
    if perturb {
        for i in 0..rhss_work.len() {
            let e = PERTURB_BASE * (i + 1) as f64;
            match rels[i] {
                Relation::Le => rhss_work[i] += e,
                Relation::Ge => rhss_work[i] -= e,
                Relation::Eq => {}
            }
        }
    }

    let m = rows.len();
    // Normalize rhs >= 0 and attach slack/surplus/artificial columns.
    // Column layout: [structural | slack+surplus | artificial].
    let mut slack_cols = 0usize;
    for rel in rels.iter() {
        if matches!(rel, Relation::Le | Relation::Ge) {
            slack_cols += 1;
        }
    }
    let art_start;
    let total;
    let mut tableau: Vec<Vec<f64>>; // m rows, each total + 1 (rhs last)
    let mut basis: Vec<usize>;
    let mut art_count = 0usize;
    {
        // First pass to count artificials after rhs normalization.
        for i in 0..m {
            let neg = rhss_work[i] < 0.0;
            let rel = rels[i];
            let eff = if neg {
                match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                }
            } else {
                rel
            };
            if !matches!(eff, Relation::Le) {
                art_count += 1;
            }
        }
        art_start = ncols + slack_cols;
        total = art_start + art_count;
        tableau = vec![vec![0.0; total + 1]; m];
        basis = vec![usize::MAX; m];
        let mut next_slack = ncols;
        let mut next_art = art_start;
        for i in 0..m {
            let sign = if rhss_work[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..ncols {
                tableau[i][j] = rows[i][j] * sign;
            }
            tableau[i][total] = rhss_work[i] * sign;
            let eff = if sign < 0.0 {
                match rels[i] {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                }
            } else {
                rels[i]
            };
            match eff {
                Relation::Le => {
                    tableau[i][next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    tableau[i][next_slack] = -1.0;
                    next_slack += 1;
                    tableau[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    tableau[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
    }

    let mut iters_left = iter_limit;
    // Pristine copy of the initial tableau: long degenerate runs accumulate
    // rounding error in the working tableau, so it is periodically rebuilt
    // exactly from this copy and the current basis.
    let pristine = tableau.clone();
    // The same rows with the exact (unperturbed) rhs, used to re-express the
    // final basis so the answer is free of the perturbation.
    let pristine_true = if perturb {
        let mut t = pristine.clone();
        for i in 0..m {
            let sign = if rhss_work[i] < 0.0 { -1.0 } else { 1.0 };
            t[i][total] = rhss[i] * sign;
        }
        t
    } else {
        Vec::new()
    };

    // Phase 1: minimize the sum of artificials.
    if art_count > 0 {
        let mut phase1_cost = vec![0.0; total + 1];
        for j in art_start..total {
            phase1_cost[j] = 1.0;
        }
        let mut obj = priced_out_objective(&phase1_cost, &tableau, &basis, total);
        // Artificial columns never enter the basis.
        match run_simplex(
            &mut tableau,
            &mut basis,
            &mut obj,
            total,
            tol,
            &mut iters_left,
            art_start,
            &pristine,
            &phase1_cost,
            Some(tol.max(1e-9)),
        ) {
            SimplexOutcome::Optimal => {}
            SimplexOutcome::Unbounded => {
                // Phase-1 objective is bounded below by 0; reaching this
                // arm means the tableau went numerically bad.
                if perturb {
                    return None;
                }
                return Some(Solution {
                    status: SolveStatus::Infeasible,
                    objective_value: f64::NAN,
                    primal: Vec::new(),
                });
            }
            SimplexOutcome::IterLimit => {
                if perturb {
                    return None;
                }
                return Some(Solution {
                    status: SolveStatus::IterationLimit,
                    objective_value: f64::NAN,
                    primal: Vec::new(),
                });
            }
        }
        // obj[total] holds -(phase-1 objective value). The perturbation only
        // relaxes constraints, so infeasible-when-perturbed implies
        // infeasible exactly.
        if -obj[total] > tol.max(1e-9) {
            return Some(Solution {
                status: SolveStatus::Infeasible,
                objective_value: f64::NAN,
                primal: Vec::new(),
            });
        }
        // Drive remaining artificials out of the basis where possible.
        for i in 0..m {
            if basis[i] >= art_start {
                let mut pivot_col = None;
                for j in 0..art_start {
                    if tableau[i][j].abs() > PIVOT_EPS {
                        pivot_col = Some(j);
                        break;
                    }
                }
                if let Some(j) = pivot_col {
                    pivot(&mut tableau, &mut basis, i, j, total);
                } // else: redundant row; artificial stays basic at value 0.
            }
        }
    }

    // Phase 2: real objective, artificial columns barred from entering.
    let mut phase2_cost = vec![0.0; total + 1];
    phase2_cost[..ncols].copy_from_slice(&cost[..ncols]);
    let mut obj = priced_out_objective(&phase2_cost, &tableau, &basis, total);
    let enter_limit = art_start; // bar artificials
    match run_simplex(
        &mut tableau,
        &mut basis,
        &mut obj,
        total,
        tol,
        &mut iters_left,
        enter_limit,
        &pristine,
        &phase2_cost,
        None,
    ) {
        SimplexOutcome::Optimal => {}
        SimplexOutcome::Unbounded => {
            // Unboundedness of the relaxed problem does not distinguish an
            // unbounded exact problem from an infeasible one; let the exact
            // solve decide.
            if perturb {
                return None;
            }
            return Some(Solution {
                status: SolveStatus::Unbounded,
                objective_value: f64::NAN,
                primal: Vec::new(),
            });
        }
        SimplexOutcome::IterLimit => {
            if perturb {
                return None;
            }
            return Some(Solution {
                status: SolveStatus::IterationLimit,
                objective_value: f64::NAN,
                primal: Vec::new(),
            });
        }
    }

    if perturb {
        // Re-express the optimal basis against the exact rhs. Reduced costs
        // do not depend on the rhs, so the basis stays dual feasible; any
        // small primal infeasibility the perturbation hid is repaired by
        // dual simplex steps, and a final primal pass verifies optimality.
        let mut t = recanonicalize(&pristine_true, &basis, total)?;
        let mut obj2 = priced_out_objective(&phase2_cost, &t, &basis, total);
        let pivots = dual_simplex(
            &mut t,
            &mut basis,
            &mut obj2,
            total,
            tol,
            &mut iters_left,
            enter_limit,
        )?;
        if pivots > 0 {
            t = recanonicalize(&pristine_true, &basis, total)?;
            obj2 = priced_out_objective(&phase2_cost, &t, &basis, total);
        }
        tableau = t;
        obj = obj2;
        match run_simplex(
            &mut tableau,
            &mut basis,
            &mut obj,
            total,
            tol,
            &mut iters_left,
            enter_limit,
            &pristine_true,
            &phase2_cost,
            None,
        ) {
            SimplexOutcome::Optimal => {}
            _ => return None,
        }
    }

    // Recover the original-space primal point.
    let mut xprime = vec![0.0; total];
    for i in 0..m {
        xprime[basis[i]] = tableau[i][total];
    }
    let mut primal = vec![0.0; lp.num_vars];
    for (j, map) in maps.iter().enumerate() {
        primal[j] = match *map {
            VarMap::Shifted { col, offset } => offset + xprime[col],
            VarMap::Mirrored { col, offset } => offset - xprime[col],
            VarMap::Split { pos, neg } => xprime[pos] - xprime[neg],
        };
    }
    let objective_value = lp.objective_value(&primal);
    Some(Solution {
        status: SolveStatus::Optimal,
        objective_value,
        primal,
    })
}

/// Dual simplex steps on a dual-feasible tableau: repeatedly pivots the most
/// negative basic value out of the basis until the solution is primal
/// feasible. Returns the number of pivots, or `None` when no eligible
/// entering column exists or the iteration budget runs out.
fn dual_simplex(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    total: usize,
    tol: f64,
    iters_left: &mut usize,
    enter_limit: usize,
) -> Option<usize> {
    let m = tableau.len();
    let feas = tol.max(1e-9);
    let mut in_basis = vec![false; obj.len()];
    for &b in basis.iter() {
        in_basis[b] = true;
    }
    let mut pivots = 0usize;
    loop {
        let mut row = usize::MAX;
        let mut worst = -feas;
        for i in 0..m {
            if tableau[i][total] < worst {
                worst = tableau[i][total];
                row = i;
            }
        }
        if row == usize::MAX {
            return Some(pivots);
        }
        if *iters_left == 0 {
            return None;
        }
        *iters_left -= 1;

        // Entering column: minimum dual ratio |obj[j] / a| over a < 0,
        // near-ties broken by the largest pivot magnitude.
        let mut row_max = 0.0f64;
        for j in 0..enter_limit {
            row_max = row_max.max(tableau[row][j].abs());
        }
        let eps = PIVOT_EPS.max(1e-8 * row_max);
        let mut best_ratio = f64::INFINITY;
        for j in 0..enter_limit {
            let a = tableau[row][j];
            if !in_basis[j] && a < -eps {
                best_ratio = best_ratio.min(obj[j].max(0.0) / -a);
            }
        }
        if !best_ratio.is_finite() {
            return None;
        }
        let mut col = usize::MAX;
        let mut best_mag = 0.0;
        for j in 0..enter_limit {
            let a = tableau[row][j];
            if !in_basis[j] && a < -eps && obj[j].max(0.0) / -a <= best_ratio + 1e-12 && -a > best_mag
            {
                best_mag = -a;
                col = j;
            }
        }
        in_basis[basis[row]] = false;
        in_basis[col] = true;
        pivot_with_obj(tableau, basis, obj, row, col, total);
        pivots += 1;
    }
}

enum SimplexOutcome {
    Optimal,
    Unbounded,
    IterLimit,
}

/// Reduced-cost row for `cost` given the current tableau and basis:
/// `obj[j] = cost[j] - sum_i cost[basis[i]] * tableau[i][j]`. The rhs slot
/// ends up holding minus the objective value of the basic solution.
fn priced_out_objective(
    cost: &[f64],
    tableau: &[Vec<f64>],
    basis: &[usize],
    total: usize,
) -> Vec<f64> {
    let mut obj = cost.to_vec();
    for (i, &b) in basis.iter().enumerate() {
        let cb = cost[b];
        if cb != 0.0 {
            for j in 0..=total {
                obj[j] -= cb * tableau[i][j];
            }
        }
    }
    obj
}

/// Rebuilds the tableau exactly as `B^-1 * pristine` for the current basis
/// by Gauss-Jordan elimination with partial pivoting, discarding all
/// rounding error the working tableau accumulated. Returns `None` if the
/// recorded basis is numerically singular (kept as-is in that case).
fn recanonicalize(pristine: &[Vec<f64>], basis: &[usize], total: usize) -> Option<Vec<Vec<f64>>> {
    let m = pristine.len();
    let mut t: Vec<Vec<f64>> = pristine.to_vec();
    let mut used = vec![false; m];
    let mut pivot_row_of = vec![usize::MAX; m];
    for (k, &col) in basis.iter().enumerate() {
        let mut best_row = usize::MAX;
        let mut best_abs = 1e-12;
        for (r, row) in t.iter().enumerate() {
            if !used[r] && row[col].abs() > best_abs {
                best_abs = row[col].abs();
                best_row = r;
            }
        }
        if best_row == usize::MAX {
            return None;
        }
        used[best_row] = true;
        pivot_row_of[k] = best_row;
        let inv = 1.0 / t[best_row][col];
        for v in t[best_row].iter_mut() {
            *v *= inv;
        }
        let prow = t[best_row].clone();
        for (r, row) in t.iter_mut().enumerate() {
            if r != best_row {
                let f = row[col];
                if f != 0.0 {
                    for j in 0..=total {
                        row[j] -= f * prow[j];
                    }
                }
            }
        }
    }
    let mut out = vec![Vec::new(); m];
    for k in 0..m {
        out[k] = std::mem::take(&mut t[pivot_row_of[k]]);
    }
    Some(out)
}

/// Degenerate pivots between exact tableau rebuilds while stalled.
const STALL_REFRESH_INTERVAL: usize = 512;
/// Unconditional pivot count between rebuilds (drift safety net).
const REFRESH_INTERVAL: usize = 10_000;

/// Runs primal simplex iterations on a tableau already in canonical form.
/// Columns with index >= `enter_limit` never enter the basis.
#[allow(clippy::too_many_arguments)]
fn run_simplex(
    tableau: &mut Vec<Vec<f64>>,
    basis: &mut [usize],
    obj: &mut Vec<f64>,
    total: usize,
    tol: f64,
    iters_left: &mut usize,
    enter_limit: usize,
    pristine: &[Vec<f64>],
    cost: &[f64],
    stop_at: Option<f64>,
) -> SimplexOutcome {
    let m = tableau.len();
    let mut degenerate_streak = 0usize;
    let mut bland = false;
    // A basic column's reduced cost is zero by construction; if drift makes
    // it look negative, letting it re-enter would duplicate it in the basis
    // and the basis matrix would go singular.
    let mut in_basis = vec![false; obj.len()];
    for &b in basis.iter() {
        in_basis[b] = true;
    }
    // Pivots since the tableau was last rebuilt exactly from the pristine
    // copy. Every pivot adds rounding error, so no terminal verdict
    // (optimal / unbounded) is accepted from a dirty tableau.
    let mut since_refresh = 0usize;
    // Evaluates to whether the rebuild succeeded; a numerically singular
    // basis leaves the tableau (and `since_refresh`) untouched.
    macro_rules! refresh {
        () => {
            if let Some(fresh) = recanonicalize(pristine, basis, total) {
                since_refresh = 0;
                *tableau = fresh;
                *obj = priced_out_objective(cost, tableau, basis, total);
                true
            } else {
                false
            }
        };
    }
    loop {
        if *iters_left == 0 {
            return SimplexOutcome::IterLimit;
        }
        *iters_left -= 1;

        // A phase whose objective only has to reach a threshold (phase 1:
        // the sum of artificials must hit zero within tolerance) stops as
        // soon as it does. Grinding on to proven optimality would spend the
        // whole degenerate endgame on an answer that is already in hand.
        if let Some(target) = stop_at {
            if -obj[total] <= target {
                if since_refresh > 0 {
                    refresh!();
                }
                if -obj[total] <= target {
                    return SimplexOutcome::Optimal;
                }
            }
        }

        if degenerate_streak >= DEGENERATE_LIMIT {
            // Sticky within a stall: stay on Bland's rule until a clearly
            // improving pivot, otherwise near-zero ratios keep resetting the
            // streak and Dantzig pricing can cycle forever.
            bland = true;
        }
        let mut entering = None;
        if bland {
            for j in 0..enter_limit {
                if !in_basis[j] && obj[j] < -tol {
                    entering = Some(j);
                    break;
                }
            }
        } else {
            let mut best = -tol;
            for j in 0..enter_limit {
                if !in_basis[j] && obj[j] < best {
                    best = obj[j];
                    entering = Some(j);
                }
            }
        }
        let Some(col) = entering else {
            // Only a clean tableau may declare optimality; if the basis
            // cannot be refactorized the verdict stands as the best
            // available answer.
            if since_refresh > 0 && refresh!() {
                continue;
            }
            return SimplexOutcome::Optimal;
        };

        // Ratio test, two passes. Pass 1 finds the minimum ratio (with the
        // rhs clamped at zero: it can sit a rounding error below, and a
        // negative ratio would step backwards out of the feasible region).
        // Pass 2 breaks near-ties: by the largest pivot element in normal
        // mode — degenerate ties are common and pivoting on a near-zero
        // element divides the row's accumulated error by that element,
        // which is how tableaus blow up — and by the smallest basis
        // variable in Bland mode, whose termination guarantee requires the
        // exact minimum-ratio set.
        // An entry is an eligible pivot only if it is also non-negligible
        // relative to the column's largest entry: an entry that is exactly
        // zero in real arithmetic shows up as elimination noise scaled by
        // the column's magnitude, and pivoting on such noise replaces a
        // basis column with a linearly dependent one (singular basis).
        let mut col_max = 0.0f64;
        for i in 0..m {
            col_max = col_max.max(tableau[i][col].abs());
        }
        let eps = PIVOT_EPS.max(1e-8 * col_max);
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let a = tableau[i][col];
            if a > eps {
                best_ratio = best_ratio.min(tableau[i][total].max(0.0) / a);
            }
        }
        let mut leave: Option<usize> = None;
        if best_ratio.is_finite() {
            let cutoff = if bland { best_ratio } else { best_ratio + 1e-12 };
            let mut best_key = f64::NEG_INFINITY;
            for i in 0..m {
                let a = tableau[i][col];
                if a > eps && tableau[i][total].max(0.0) / a <= cutoff {
                    let key = if bland { -(basis[i] as f64) } else { a };
                    if key > best_key {
                        best_key = key;
                        leave = Some(i);
                    }
                }
            }
        }
        let Some(row) = leave else {
            // An all-nonpositive column in a drifted tableau is usually
            // rounding error, not a real unbounded ray; recheck clean.
            if since_refresh > 0 && refresh!() {
                continue;
            }
            return SimplexOutcome::Unbounded;
        };

        // A pivot only counts as progress when the step is well above
        // rounding noise; otherwise it is treated as degenerate.
        if best_ratio <= 1e-9 {
            degenerate_streak += 1;
        } else {
            degenerate_streak = 0;
            bland = false;
        }

        in_basis[basis[row]] = false;
        in_basis[col] = true;
        pivot_with_obj(tableau, basis, obj, row, col, total);
        since_refresh += 1;

        // Rebuild the tableau exactly when a degenerate stall is detected
        // (rounding drift is what keeps such stalls alive) and, far more
        // rarely, as a safety net on any long solve. Healthy solves finish
        // well under either threshold and pay nothing.
        let stalled = degenerate_streak >= DEGENERATE_LIMIT
            && degenerate_streak % STALL_REFRESH_INTERVAL
                == DEGENERATE_LIMIT % STALL_REFRESH_INTERVAL;
        if stalled || since_refresh >= REFRESH_INTERVAL {
            refresh!();
        }
    }
}

fn pivot(tableau: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize, total: usize) {
    let p = tableau[row][col];
    let inv = 1.0 / p;
    for v in tableau[row].iter_mut() {
        *v *= inv;
    }
    let pivot_row = tableau[row].clone();
    for (i, r) in tableau.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for j in 0..=total {
                    r[j] -= f * pivot_row[j];
                }
            }
        }
    }
    basis[row] = col;
}

fn pivot_with_obj(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    row: usize,
    col: usize,
    total: usize,
) {
    pivot(tableau, basis, row, col, total);
    let f = obj[col];
    if f != 0.0 {
        for j in 0..=total {
            obj[j] -= f * tableau[row][j];
        }
    }
}
