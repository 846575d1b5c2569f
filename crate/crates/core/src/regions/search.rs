//! Multi-start projected-gradient search over products of probability
//! simplices, plus exhaustive simplex-grid enumeration used as a
//! brute-force oracle.
//!
//! The feasibility problems here are nonconvex in the factor kernels, so
//! the optimizer restarts from many random points and keeps the best
//! outcome under a deterministic ordering: feasible beats infeasible, then
//! lower objective, then lexicographically smaller parameters. Constraint
//! violations are handled by a squared-hinge penalty whose weight grows by
//! a factor of ten per outer round.

use rand::Rng;
use rayon::prelude::*;

use crate::probcore::stream_rng;

/// Violation level treated as numerically feasible during ranking.
const FEAS_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SearchConfig {
    /// Number of random restarts of the local optimizer.
    pub restarts: usize,
    /// Penalty escalation rounds (weight grows tenfold per round).
    pub outer_rounds: usize,
    /// Iteration cap per restart and round.
    pub max_iters: usize,
    /// Convergence tolerance on the penalized objective.
    pub obj_tol: f64,
    pub seed: u64,
    /// `Some(step)` switches to exhaustive simplex-grid enumeration.
    pub grid_step: Option<f64>,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
    /// Auxiliary alphabet sizes used by the optimizer (capped by the spec).
    pub aux_w1: Option<usize>,
    pub aux_w2: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            restarts: 64,
            outer_rounds: 9,
            max_iters: 200,
            obj_tol: 1e-7,
            seed: 0,
            grid_step: None,
            threads: 0,
            aux_w1: None,
            aux_w2: None,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub params: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    pub converged: bool,
}

pub(crate) fn outcome_better(a: &Outcome, b: &Outcome) -> bool {
    let fa = a.violation <= FEAS_EPS;
    let fb = b.violation <= FEAS_EPS;
    if fa != fb {
        return fa;
    }
    let ka = if fa { a.objective } else { a.violation };
    let kb = if fb { b.objective } else { b.violation };
    match ka.total_cmp(&kb) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            // Lexicographic parameter order keeps the reduction
            // deterministic under parallel scheduling.
            for (x, y) in a.params.iter().zip(&b.params) {
                match x.total_cmp(y) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    std::cmp::Ordering::Equal => {}
                }
            }
            false
        }
    }
}

/// Euclidean projection of one row onto the probability simplex.
pub(crate) fn project_row(row: &mut [f64]) {
    let k = row.len();
    let mut sorted: Vec<f64> = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    let mut found = false;
    for (i, &v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        } else {
            found = true;
            break;
        }
    }
    if !found {
        theta = (acc - 1.0) / k as f64;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
        total += *v;
    }
    // Exact renormalization guards against drift from the subtraction.
    if total > 0.0 {
        for v in row.iter_mut() {
            *v /= total;
        }
    } else {
        let u = 1.0 / k as f64;
        row.iter_mut().for_each(|v| *v = u);
    }
}

/// Project a concatenated parameter vector row-by-row onto the simplices.
pub(crate) fn project_rows(row_sizes: &[usize], params: &mut [f64]) {
    let mut off = 0;
    for &k in row_sizes {
        project_row(&mut params[off..off + k]);
        off += k;
    }
}

fn random_params(row_sizes: &[usize], rng: &mut impl Rng) -> Vec<f64> {
    let len: usize = row_sizes.iter().sum();
    let mut out = Vec::with_capacity(len);
    for &k in row_sizes {
        let mut row: Vec<f64> = (0..k).map(|_| -(rng.gen::<f64>().max(1e-12)).ln()).collect();
        let t: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= t);
        out.extend(row);
    }
    out
}

/// One projected-gradient descent run on `f` from `params`, minimizing in
/// place. Returns (final value, converged).
fn pgd(
    row_sizes: &[usize],
    f: &mut dyn FnMut(&[f64]) -> f64,
    params: &mut Vec<f64>,
    max_iters: usize,
    obj_tol: f64,
) -> (f64, bool) {
    let n = params.len();
    let mut fx = f(params);
    let mut step = 0.25;
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut stall = 0;
    for _ in 0..max_iters {
        // Central finite differences of f on the projected manifold.
        let h = 1e-6;
        for i in 0..n {
            let orig = params[i];
            trial.copy_from_slice(params);
            trial[i] = orig + h;
            project_rows(row_sizes, &mut trial);
            let fp = f(&trial);
            trial.copy_from_slice(params);
            trial[i] = (orig - h).max(0.0);
            project_rows(row_sizes, &mut trial);
            let fm = f(&trial);
            grad[i] = (fp - fm) / (2.0 * h);
        }
        let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-12 {
            return (fx, true);
        }
        // Backtracking line search. Penalized objectives form narrow
        // valleys along the feasible manifold, so single small steps are
        // normal; give up only after a sustained run of them.
        let mut s = step;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = params[i] - s * grad[i];
            }
            project_rows(row_sizes, &mut trial);
            let ft = f(&trial);
            if ft < fx - 1e-15 {
                let improvement = fx - ft;
                params.copy_from_slice(&trial);
                fx = ft;
                step = (s * 2.0).min(1.0);
                accepted = true;
                if improvement < obj_tol {
                    stall += 1;
                    if stall >= 10 {
                        return (fx, true);
                    }
                } else {
                    stall = 0;
                }
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return (fx, true);
        }
    }
    (fx, false)
}

/// Multi-start penalized minimization. `make_eval` builds one evaluation
/// closure per worker returning `(objective, violation)`; the minimized
/// function is `objective + weight * violation`.
pub(crate) fn multi_start<F>(
    row_sizes: &[usize],
    make_eval: &F,
    warm_starts: &[Vec<f64>],
    cfg: &SearchConfig,
) -> Outcome
where
    F: Fn() -> Box<dyn FnMut(&[f64]) -> (f64, f64)> + Sync,
{
    let total = warm_starts.len() + cfg.restarts;
    let run_one = |idx: usize| -> Outcome {
        let mut eval = make_eval();
        let mut params = if idx < warm_starts.len() {
            let mut p = warm_starts[idx].clone();
            project_rows(row_sizes, &mut p);
            p
        } else {
            let mut rng = stream_rng(cfg.seed, &format!("search/restart/{idx}"));
            random_params(row_sizes, &mut rng)
        };
        let mut converged = true;
        // Gentle initial penalty: the objective must shape the early
        // trajectory, otherwise every start collapses to the nearest
        // feasible point regardless of quality.
        let mut weight = 1.0;
        for round in 0..cfg.outer_rounds.max(1) {
            let mut f = |p: &[f64]| {
                let (obj, viol) = eval(p);
                obj + weight * viol
            };
            let (_, conv) = pgd(row_sizes, &mut f, &mut params, cfg.max_iters, cfg.obj_tol);
            // Convergence of the final continuation round is what counts.
            converged = conv;
            let (_, viol) = eval(&params);
            if viol <= FEAS_EPS || round + 1 == cfg.outer_rounds.max(1) {
                break;
            }
            weight *= 10.0;
        }
        let (objective, violation) = eval(&params);
        Outcome { params, objective, violation, converged }
    };

    let outcomes: Vec<Outcome> = if cfg.threads == 1 {
        (0..total).map(run_one).collect()
    } else {
        (0..total).into_par_iter().map(run_one).collect()
    };
    outcomes
        .into_iter()
        .reduce(|a, b| if outcome_better(&b, &a) { b } else { a })
        .expect("at least one restart")
}

/// All simplex grid rows of dimension `k` with entries that are multiples
/// of `step` (compositions of `1/step` into `k` parts).
pub(crate) fn simplex_grid(k: usize, step: f64) -> Vec<Vec<f64>> {
    let m = (1.0 / step).round() as usize;
    assert!(m >= 1, "grid step must be at most 1");
    let mut out = Vec::new();
    let mut row = vec![0usize; k];
    fn rec(row: &mut Vec<usize>, pos: usize, left: usize, m: usize, out: &mut Vec<Vec<f64>>) {
        if pos + 1 == row.len() {
            row[pos] = left;
            out.push(row.iter().map(|&c| c as f64 / m as f64).collect());
            return;
        }
        for c in 0..=left {
            row[pos] = c;
            rec(row, pos + 1, left - c, m, out);
        }
    }
    rec(&mut row, 0, m, m, &mut out);
    out
}

/// Odometer over per-row option lists; calls `visit` with the flattened
/// parameter vector for every combination.
pub(crate) fn for_each_grid_combo(
    options: &[&[Vec<f64>]],
    visit: &mut dyn FnMut(&[f64]),
) {
    let mut idx = vec![0usize; options.len()];
    let total_len: usize = options.iter().map(|o| o[0].len()).sum();
    let mut flat = vec![0.0; total_len];
    'outer: loop {
        let mut off = 0;
        for (i, opts) in options.iter().enumerate() {
            let row = &opts[idx[i]];
            flat[off..off + row.len()].copy_from_slice(row);
            off += row.len();
        }
        visit(&flat);
        for i in (0..options.len()).rev() {
            idx[i] += 1;
            if idx[i] < options[i].len() {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
}
