//! Branch-and-bound over the embedded LP solver.
//!
//! Depth-first search branching on the most fractional integer variable,
//! exploring the nearest-rounding child first. Pruning uses the LP
//! relaxation bound against the incumbent with a relative gap.

use super::{simplex, LinearProgram, MixedIntegerProgram, Sense, Solution, SolveStatus};

struct Node {
    bounds: Vec<(f64, f64)>,
}

pub fn solve_milp(
    mip: &MixedIntegerProgram,
    tol: f64,
    gap: f64,
    node_limit: usize,
) -> Solution {
    debug_assert!(mip.validate().is_ok());
    let maximize = mip.base.sense == Sense::Maximize;
    let lp_iter_limit = 200_000;

    let mut incumbent: Option<Solution> = None;
    let mut stack = vec![Node {
        bounds: mip.base.bounds.clone(),
    }];
    let mut nodes_used = 0usize;
    let mut hit_limit = false;

    while let Some(node) = stack.pop() {
        if nodes_used >= node_limit {
            hit_limit = true;
            break;
        }
        nodes_used += 1;

        let mut lp = LinearProgram {
            bounds: node.bounds.clone(),
            ..mip.base.clone()
        };
        // Tighten integer bounds to integral values.
        for &j in &mip.integer_vars {
            let (l, u) = lp.bounds[j];
            let l2 = if l.is_finite() { l.ceil() } else { l };
            let u2 = if u.is_finite() { u.floor() } else { u };
            if l2 > u2 {
                lp.bounds[j] = (1.0, 0.0); // marker; handled below
            } else {
                lp.bounds[j] = (l2, u2);
            }
        }
        if lp.bounds.iter().any(|&(l, u)| l > u) {
            continue; // empty integer box
        }

        let relax = simplex::solve_lp(&lp, tol, lp_iter_limit);
        match relax.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => {
                // Relaxation unbounded at the root means we cannot bound the
                // MILP; report it as unbounded.
                return Solution {
                    status: SolveStatus::Unbounded,
                    objective_value: f64::NAN,
                    primal: Vec::new(),
                };
            }
            SolveStatus::IterationLimit => {
                hit_limit = true;
                continue;
            }
            SolveStatus::Optimal => {}
        }

        // Bound check against the incumbent.
        if let Some(ref inc) = incumbent {
            let slack = gap * inc.objective_value.abs().max(1.0);
            let dominated = if maximize {
                relax.objective_value <= inc.objective_value + slack
            } else {
                relax.objective_value >= inc.objective_value - slack
            };
            if dominated {
                continue;
            }
        }

        // Branch variable: most fractional, ties by lowest index.
        let int_tol = tol.max(1e-9);
        let mut branch: Option<(usize, f64)> = None;
        let mut best_dist = -1.0;
        for &j in &mip.integer_vars {
            // Clamp to the node's integral bounds: the relaxation can return
            // values a hair outside them (e.g. 1 - 1e-10 for a variable fixed
            // at 1), and branching on such a value would recreate the parent
            // node verbatim. Clamping guarantees both children strictly
            // tighten, so the tree is finite.
            let (l, u) = lp.bounds[j];
            let v = relax.primal[j].clamp(l, u);
            let frac = v - v.floor();
            let int_dist = frac.min(1.0 - frac);
            if int_dist > int_tol && int_dist > best_dist + 1e-15 {
                best_dist = int_dist;
                branch = Some((j, v));
            }
        }

        let Some((j, v)) = branch else {
            // Integral: candidate incumbent. Snap integer values.
            let mut primal = relax.primal.clone();
            for &k in &mip.integer_vars {
                primal[k] = primal[k].round();
            }
            let obj = mip.base.objective_value(&primal);
            let better = match incumbent {
                None => true,
                Some(ref inc) => {
                    if maximize {
                        obj > inc.objective_value
                    } else {
                        obj < inc.objective_value
                    }
                }
            };
            if better {
                incumbent = Some(Solution {
                    status: SolveStatus::Optimal,
                    objective_value: obj,
                    primal,
                });
            }
            continue;
        };

        let floor = v.floor();
        let mut down = node.bounds.clone();
        down[j].1 = down[j].1.min(floor);
        let mut up = node.bounds;
        up[j].0 = up[j].0.max(floor + 1.0);
        // Explore the nearest-rounding child first (pushed last).
        if v - floor >= 0.5 {
            stack.push(Node { bounds: down });
            stack.push(Node { bounds: up });
        } else {
            stack.push(Node { bounds: up });
            stack.push(Node { bounds: down });
        }
    }

    match (hit_limit, incumbent) {
        (true, Some(inc)) => Solution {
            status: SolveStatus::IterationLimit,
            ..inc
        },
        (true, None) => Solution {
            status: SolveStatus::IterationLimit,
            objective_value: f64::NAN,
            primal: Vec::new(),
        },
        (false, Some(inc)) => inc,
        (false, None) => Solution {
            status: SolveStatus::Infeasible,
            objective_value: f64::NAN,
            primal: Vec::new(),
        },
    }
}
