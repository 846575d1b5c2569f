//! The channel-state-estimation zero-sum game.
//!
//! The encoder and decoder cooperate on reliable transmission at rate `R`
//! but fight over the state estimate: the encoder shapes its input policy
//! to maximize the decoder's expected distortion while the decoder plays
//! the best response. The inner minimization has a closed form (pick the
//! distortion-minimizing action under the posterior at each observation
//! pair); the outer maximization runs over the single-auxiliary no-action
//! class under the rate constraint `R <= I(W1;Y)`, searched with the same
//! multi-start machinery as the regions, or exhaustively on a simplex grid.

use serde::Serialize;
use thiserror::Error;

use crate::model::{compose_aux, AuxFactors, AuxJoint, ModelError, ProblemSpec};
use crate::probcore::{Alphabet, JointDist, Kernel, ProbError};
use crate::regions::SearchConfig;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("distortion table required for game operations")]
    MissingDistortion,
    #[error("invalid rate {0}")]
    BadRate(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

pub type Result<T> = std::result::Result<T, GameError>;

/// Tolerance on the rate constraint of the final witness.
const RATE_TOL: f64 = 1e-6;

/// Solution of the estimation game at one rate.
#[derive(Debug)]
pub struct GameSolution {
    /// Value of the game in distortion units, within `[0, max d]`.
    pub d_star: f64,
    /// The maximin encoder witness (no-action class, `W2` absent).
    pub witness: AuxJoint,
    /// Decoder best response `(W1,Y) -> V`; rows are point masses.
    pub decoder: Kernel,
    /// `|maximin - minimax|` when the minimax side was computed.
    pub gap: Option<f64>,
}

/// Outcome of the outer optimization.
#[derive(Debug)]
pub enum GameOutcome {
    Solved(GameSolution),
    /// No encoder policy attains the requested rate.
    InfeasibleRate { max_rate: f64 },
    Undecided { best: GameSolution },
}

/// Closed-form decoder best response against a fixed joint: for each
/// positive-probability `(w1, y)` pick the action minimizing the posterior
/// expected distortion, ties broken by the smallest action index;
/// zero-probability pairs get action 0. Returns the value and the decoder.
pub fn inner_min(aux: &AuxJoint, distortion: &[Vec<f64>]) -> Result<(f64, Kernel)> {
    let j = &aux.joint;
    let p = j.marginal(&["S", "W1", "Y"])?;
    let (s_n, w1_n, y_n) = {
        let ax = p.axes();
        (ax[0].size, ax[1].size, ax[2].size)
    };
    let v_n = distortion[0].len();
    let mut rows = vec![0.0; w1_n * y_n * v_n];
    let mut value = 0.0;
    for w1 in 0..w1_n {
        for y in 0..y_n {
            let mass: f64 = (0..s_n).map(|s| p.prob(&[s, w1, y])).sum();
            let mut best_v = 0;
            if mass > 0.0 {
                let mut best = f64::INFINITY;
                for v in 0..v_n {
                    let d: f64 =
                        (0..s_n).map(|s| p.prob(&[s, w1, y]) * distortion[s][v]).sum();
                    if d < best - 1e-15 {
                        best = d;
                        best_v = v;
                    }
                }
                value += best;
            }
            rows[(w1 * y_n + y) * v_n + best_v] = 1.0;
        }
    }
    let decoder = Kernel::new(
        vec![Alphabet::new("W1", w1_n), Alphabet::new("Y", y_n)],
        vec![Alphabet::new("V", v_n)],
        rows,
    )?;
    Ok((value, decoder))
}

/// Fast evaluation of `(inner value, I(W1;Y))` from encoder parameters
/// (the `Q_{W1}` row followed by the `Q_{X|S,W1}` rows).
struct GameEval {
    s_n: usize,
    w1_n: usize,
    x_n: usize,
    y_n: usize,
    source: Vec<f64>,
    channel: Vec<f64>, // (s, x) rows over y
    distortion: Vec<Vec<f64>>,
    joint: Vec<f64>, // (s, w1, y)
}

impl GameEval {
    fn new(spec: &ProblemSpec, w1_n: usize) -> Result<Self> {
        let distortion = spec.distortion.clone().ok_or(GameError::MissingDistortion)?;
        Ok(GameEval {
            s_n: spec.size("S"),
            w1_n,
            x_n: spec.size("X"),
            y_n: spec.size("Y"),
            source: spec.source.mass().to_vec(),
            channel: spec.channel.rows().to_vec(),
            distortion,
            joint: vec![0.0; spec.size("S") * w1_n * spec.size("Y")],
        })
    }

    fn row_sizes(&self) -> Vec<usize> {
        let mut rs = vec![self.w1_n];
        rs.extend(std::iter::repeat(self.x_n).take(self.s_n * self.w1_n));
        rs
    }

    /// Returns `(value, rate)`: the decoder-best-response distortion and
    /// `I(W1;Y)` in bits.
    fn eval(&mut self, params: &[f64]) -> (f64, f64) {
        let (s_n, w1_n, x_n, y_n) = (self.s_n, self.w1_n, self.x_n, self.y_n);
        let q_w1 = &params[..w1_n];
        let q_x = &params[w1_n..];
        self.joint.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..s_n {
            let ps = self.source[s];
            if ps == 0.0 {
                continue;
            }
            for w1 in 0..w1_n {
                let pw = ps * q_w1[w1];
                if pw == 0.0 {
                    continue;
                }
                let xrow = &q_x[(s * w1_n + w1) * x_n..(s * w1_n + w1 + 1) * x_n];
                for (x, &px) in xrow.iter().enumerate() {
                    if px == 0.0 {
                        continue;
                    }
                    let crow = &self.channel[(s * x_n + x) * y_n..(s * x_n + x + 1) * y_n];
                    for y in 0..y_n {
                        self.joint[(s * w1_n + w1) * y_n + y] += pw * px * crow[y];
                    }
                }
            }
        }
        // Inner minimum over actions per (w1, y).
        let v_n = self.distortion[0].len();
        let mut value = 0.0;
        for w1 in 0..w1_n {
            for y in 0..y_n {
                let mut best = f64::INFINITY;
                for v in 0..v_n {
                    let mut d = 0.0;
                    for s in 0..s_n {
                        d += self.joint[(s * w1_n + w1) * y_n + y] * self.distortion[s][v];
                    }
                    if d < best {
                        best = d;
                    }
                }
                if best.is_finite() {
                    value += best;
                }
            }
        }
        // I(W1;Y) from the (w1, y) marginal.
        let mut p_w1y = vec![0.0; w1_n * y_n];
        for s in 0..s_n {
            for w1 in 0..w1_n {
                for y in 0..y_n {
                    p_w1y[w1 * y_n + y] += self.joint[(s * w1_n + w1) * y_n + y];
                }
            }
        }
        let mut h_w1 = 0.0;
        let mut h_y = 0.0;
        let mut h_w1y = 0.0;
        for w1 in 0..w1_n {
            let m: f64 = p_w1y[w1 * y_n..(w1 + 1) * y_n].iter().sum();
            if m > 0.0 {
                h_w1 -= m * m.log2();
            }
        }
        for y in 0..y_n {
            let m: f64 = (0..w1_n).map(|w1| p_w1y[w1 * y_n + y]).sum();
            if m > 0.0 {
                h_y -= m * m.log2();
            }
        }
        for &m in &p_w1y {
            if m > 0.0 {
                h_w1y -= m * m.log2();
            }
        }
        let rate = (h_w1 + h_y - h_w1y).max(0.0);
        (value, rate)
    }
}

fn encoder_factors(spec: &ProblemSpec, w1_n: usize, params: &[f64]) -> AuxFactors {
    let w1 = JointDist::new(vec![Alphabet::new("W1", w1_n)], params[..w1_n].to_vec())
        .expect("normalized row");
    let x = Kernel::new(
        vec![Alphabet::new("S", spec.size("S")), Alphabet::new("W1", w1_n)],
        vec![Alphabet::new("X", spec.size("X"))],
        params[w1_n..].to_vec(),
    )
    .expect("normalized rows");
    AuxFactors::NoAction { w1, x }
}

fn game_w1_size(spec: &ProblemSpec, cfg: &SearchConfig) -> usize {
    let default = if cfg.grid_step.is_some() { 2 } else { 3 };
    cfg.aux_w1.unwrap_or_else(|| spec.aux_caps.w1.min(default)).min(spec.aux_caps.w1)
}

/// Maximize the decoder's best-response distortion over encoder policies
/// subject to `I(W1;Y) >= r`. The returned solution carries no minimax
/// gap; see [`solve_game`] for the paired computation.
pub fn solve_maximin(r: f64, spec: &ProblemSpec, cfg: &SearchConfig) -> Result<GameOutcome> {
    if !r.is_finite() || r < 0.0 {
        return Err(GameError::BadRate(r));
    }
    if spec.distortion.is_none() {
        return Err(GameError::MissingDistortion);
    }
    let w1_n = game_w1_size(spec, cfg);
    let template = GameEval::new(spec, w1_n)?;
    let row_sizes = template.row_sizes();

    let outcome = if let Some(step) = cfg.grid_step {
        grid_maximin(spec, w1_n, r, step)?
    } else {
        let make_eval = || -> Box<dyn FnMut(&[f64]) -> (f64, f64)> {
            let mut ev = GameEval::new(spec, w1_n).expect("distortion checked above");
            Box::new(move |p: &[f64]| {
                let (value, rate) = ev.eval(p);
                let short = (r - rate).max(0.0);
                (-value, short * short)
            })
        };
        crate::regions::search_multi_start(&row_sizes, &make_eval, &[], cfg)
    };

    let factors = encoder_factors(spec, w1_n, &outcome.params);
    let witness = compose_aux(factors, spec)?;
    let distortion = spec.distortion.as_ref().unwrap();
    let (d_star, decoder) = inner_min(&witness, distortion)?;
    let rate = crate::probcore::mutual_information(&witness.joint, &["W1"], &["Y"], &[])?;
    if rate + RATE_TOL < r {
        // Check whether any policy reaches the rate at all.
        let make_rate = || -> Box<dyn FnMut(&[f64]) -> (f64, f64)> {
            let mut ev = GameEval::new(spec, w1_n).expect("distortion checked above");
            Box::new(move |p: &[f64]| {
                let (_, rate) = ev.eval(p);
                (-rate, 0.0)
            })
        };
        let best = crate::regions::search_multi_start(&row_sizes, &make_rate, &[], cfg);
        let max_rate = -best.objective;
        if max_rate + RATE_TOL < r {
            return Ok(GameOutcome::InfeasibleRate { max_rate });
        }
        let sol = GameSolution { d_star, witness, decoder, gap: None };
        return Ok(GameOutcome::Undecided { best: sol });
    }
    Ok(GameOutcome::Solved(GameSolution { d_star, witness, decoder, gap: None }))
}

fn grid_maximin(
    spec: &ProblemSpec,
    w1_n: usize,
    r: f64,
    step: f64,
) -> Result<crate::regions::SearchOutcome> {
    let mut ev = GameEval::new(spec, w1_n)?;
    let row_sizes = ev.row_sizes();
    let options: Vec<Vec<Vec<f64>>> =
        row_sizes.iter().map(|&k| crate::regions::simplex_grid_rows(k, step)).collect();
    let opts_ref: Vec<&[Vec<f64>]> = options.iter().map(|o| o.as_slice()).collect();
    let mut best: Option<crate::regions::SearchOutcome> = None;
    crate::regions::for_each_grid_combo(&opts_ref, &mut |params: &[f64]| {
        let (value, rate) = ev.eval(params);
        let short = (r - rate).max(0.0);
        let cand = crate::regions::SearchOutcome {
            params: params.to_vec(),
            objective: -value,
            violation: short * short,
            converged: true,
        };
        best = Some(match best.take() {
            None => cand,
            Some(b) => {
                if crate::regions::search_outcome_better(&cand, &b) {
                    cand
                } else {
                    b
                }
            }
        });
    });
    Ok(best.expect("grid enumerations are nonempty"))
}

/// Minimax value: minimize over decoder kernels the best encoder payoff
/// under the rate constraint. In grid mode both sides run at the given
/// resolution; otherwise the convex outer problem is solved by projected
/// subgradient against inner multi-start maximizations.
pub fn solve_minimax(r: f64, spec: &ProblemSpec, cfg: &SearchConfig) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(GameError::BadRate(r));
    }
    let distortion = spec.distortion.clone().ok_or(GameError::MissingDistortion)?;
    let w1_n = game_w1_size(spec, cfg);
    let mut ev = GameEval::new(spec, w1_n)?;
    let row_sizes = ev.row_sizes();
    let (s_n, y_n, v_n) = (spec.size("S"), spec.size("Y"), distortion[0].len());

    // Payoff coefficients of one encoder: A[w1,y,v], so the payoff against
    // decoder h is the dot product with h's rows.
    let coeffs = |ev: &GameEval| -> Vec<f64> {
        let mut a = vec![0.0; w1_n * y_n * v_n];
        for w1 in 0..w1_n {
            for y in 0..y_n {
                for v in 0..v_n {
                    let mut c = 0.0;
                    for s in 0..s_n {
                        c += ev.joint[(s * w1_n + w1) * y_n + y] * distortion[s][v];
                    }
                    a[(w1 * y_n + y) * v_n + v] = c;
                }
            }
        }
        a
    };

    if let Some(step) = cfg.grid_step {
        // Collect rate-feasible encoder payoff tables once.
        let options: Vec<Vec<Vec<f64>>> =
            row_sizes.iter().map(|&k| crate::regions::simplex_grid_rows(k, step)).collect();
        let opts_ref: Vec<&[Vec<f64>]> = options.iter().map(|o| o.as_slice()).collect();
        let mut tables: Vec<Vec<f64>> = Vec::new();
        crate::regions::for_each_grid_combo(&opts_ref, &mut |params: &[f64]| {
            let (_, rate) = ev.eval(params);
            if rate + RATE_TOL >= r {
                tables.push(coeffs(&ev));
            }
        });
        if tables.is_empty() {
            return Err(GameError::BadRate(r));
        }
        // Decoder rows enumerated jointly on the same lattice.
        let dec_rows = w1_n * y_n;
        let row_opts = crate::regions::simplex_grid_rows(v_n, step);
        let all: Vec<&[Vec<f64>]> = (0..dec_rows).map(|_| row_opts.as_slice()).collect();
        let mut best = f64::INFINITY;
        crate::regions::for_each_grid_combo(&all, &mut |h: &[f64]| {
            let mut worst: f64 = 0.0;
            for a in &tables {
                let payoff: f64 = h.iter().zip(a).map(|(hh, aa)| hh * aa).sum();
                if payoff > worst {
                    worst = payoff;
                }
            }
            if worst < best {
                best = worst;
            }
        });
        return Ok(best);
    }

    // Cutting planes on the decoder side: keep a bundle of encoder payoff
    // tables, solve the bundle game exactly through its concave dual (the
    // per-row minimum has closed form), and grow the bundle with the best
    // response to the current decoder until the two values meet.
    let rows_n = w1_n * y_n;
    let inner_cfg = SearchConfig {
        restarts: cfg.restarts.min(8),
        max_iters: 100,
        seed: cfg.seed,
        ..cfg.clone()
    };
    let best_response = |h: &[f64]| -> (Vec<f64>, f64) {
        let h_in = h.to_vec();
        let make_eval = || -> Box<dyn FnMut(&[f64]) -> (f64, f64)> {
            let mut ev = GameEval::new(spec, w1_n).expect("distortion present");
            let h_in = h_in.clone();
            let d = distortion.clone();
            Box::new(move |p: &[f64]| {
                let (_, rate) = ev.eval(p);
                let mut payoff = 0.0;
                for w1 in 0..w1_n {
                    for y in 0..y_n {
                        for v in 0..v_n {
                            let mut c = 0.0;
                            for s in 0..s_n {
                                c += ev.joint[(s * w1_n + w1) * y_n + y] * d[s][v];
                            }
                            payoff += h_in[(w1 * y_n + y) * v_n + v] * c;
                        }
                    }
                }
                let short = (r - rate).max(0.0);
                (-payoff, short * short)
            })
        };
        let out = crate::regions::search_multi_start(&row_sizes, &make_eval, &[], &inner_cfg);
        (out.params, -out.objective)
    };

    // Dual of the bundle game: maximize over mixtures the summed per-row
    // minima of the mixed payoff table; the maximizing mixture's row-wise
    // argmins give the bundle-optimal decoder.
    let bundle_solve = |tables: &[Vec<f64>]| -> (Vec<f64>, f64) {
        let k = tables.len();
        let mut lambda = vec![1.0 / k as f64; k];
        let mixed = |lambda: &[f64]| -> Vec<f64> {
            let mut a = vec![0.0; rows_n * v_n];
            for (l, t) in lambda.iter().zip(tables) {
                for (ai, ti) in a.iter_mut().zip(t) {
                    *ai += l * ti;
                }
            }
            a
        };
        let g_of = |a: &[f64]| -> f64 {
            (0..rows_n)
                .map(|row| {
                    a[row * v_n..(row + 1) * v_n].iter().copied().fold(f64::INFINITY, f64::min)
                })
                .sum()
        };
        let mut best_lambda = lambda.clone();
        let mut best_g = g_of(&mixed(&lambda));
        for it in 0..400 {
            let a = mixed(&lambda);
            // Supergradient: per table, sum of its entries at the mixed
            // argmin actions.
            let mut grad = vec![0.0; k];
            for row in 0..rows_n {
                let slice = &a[row * v_n..(row + 1) * v_n];
                let mut v_star = 0;
                for v in 1..v_n {
                    if slice[v] < slice[v_star] {
                        v_star = v;
                    }
                }
                for (gj, t) in grad.iter_mut().zip(tables) {
                    *gj += t[row * v_n + v_star];
                }
            }
            let eta = 0.5 / ((it + 1) as f64).sqrt();
            for (lj, gj) in lambda.iter_mut().zip(&grad) {
                *lj += eta * gj;
            }
            crate::regions::project_rows(&[k], &mut lambda);
            let g = g_of(&mixed(&lambda));
            if g > best_g {
                best_g = g;
                best_lambda = lambda.clone();
            }
        }
        // Decoder from the best mixture: deterministic row-wise argmin.
        let a = mixed(&best_lambda);
        let mut h = vec![0.0; rows_n * v_n];
        for row in 0..rows_n {
            let slice = &a[row * v_n..(row + 1) * v_n];
            let mut v_star = 0;
            for v in 1..v_n {
                if slice[v] < slice[v_star] {
                    v_star = v;
                }
            }
            h[row * v_n + v_star] = 1.0;
        }
        (h, best_g)
    };

    let uniform_h = vec![1.0 / v_n as f64; rows_n * v_n];
    let (enc0, _) = best_response(&uniform_h);
    ev.eval(&enc0);
    let mut tables = vec![coeffs(&ev)];
    let mut best_upper = f64::INFINITY;
    for _ in 0..40 {
        let (h, lower) = bundle_solve(&tables);
        let (enc, upper) = best_response(&h);
        best_upper = best_upper.min(upper);
        if best_upper - lower <= 1e-5 {
            break;
        }
        ev.eval(&enc);
        tables.push(coeffs(&ev));
    }
    Ok(best_upper)
}

/// Maximin solution together with the minimax cross-check.
pub fn solve_game(r: f64, spec: &ProblemSpec, cfg: &SearchConfig) -> Result<GameOutcome> {
    let outcome = solve_maximin(r, spec, cfg)?;
    Ok(match outcome {
        GameOutcome::Solved(mut sol) => {
            let minimax = solve_minimax(r, spec, cfg)?;
            sol.gap = Some((sol.d_star - minimax).abs());
            GameOutcome::Solved(sol)
        }
        other => other,
    })
}

/// The game without communication: the rate constraint is vacuous. This is
/// the single-letter value of the repeated estimation game.
pub fn zero_rate_value(spec: &ProblemSpec, cfg: &SearchConfig) -> Result<GameOutcome> {
    solve_maximin(0.0, spec, cfg)
}

/// JSON shape of a solved game, used by the CLI.
#[derive(Serialize)]
pub struct GameReport {
    pub rate: f64,
    pub d_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub witness_w1: JointDist,
    pub witness_x: Kernel,
    pub decoder: Kernel,
}

impl GameReport {
    pub fn new(rate: f64, sol: &GameSolution) -> Self {
        let (w1, x) = match &sol.witness.factors {
            AuxFactors::NoAction { w1, x } => (w1.clone(), x.clone()),
            _ => unreachable!("game witnesses live in the no-action class"),
        };
        GameReport {
            rate,
            d_star: sol.d_star,
            gap: sol.gap,
            witness_w1: w1,
            witness_x: x,
            decoder: sol.decoder.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support;
    use crate::probcore::stream_rng;

    fn spec_with(channel_rows: &[Vec<f64>], source: &[f64]) -> ProblemSpec {
        let y = channel_rows[0].len();
        let text = format!(
            r#"{{
            "alphabets": {{"S": 2, "X": 2, "Y": {y}, "V": 2}},
            "source": {source},
            "channel": {channel},
            "target_x": [[0.5, 0.5], [0.5, 0.5]],
            "distortion": [[0.0, 1.0], [1.0, 0.0]]
        }}"#,
            y = y,
            source = serde_json::to_string(source).unwrap(),
            channel = serde_json::to_string(channel_rows).unwrap(),
        );
        ProblemSpec::from_json(&text).unwrap()
    }

    fn revealing_spec() -> ProblemSpec {
        // y = 2x + s reveals the state exactly.
        spec_with(
            &[
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            &[0.5, 0.5],
        )
    }

    fn uninformative_spec(source: &[f64]) -> ProblemSpec {
        spec_with(
            &[
                vec![0.5, 0.5],
                vec![0.5, 0.5],
                vec![0.5, 0.5],
                vec![0.5, 0.5],
            ],
            source,
        )
    }

    fn degenerate_encoder(spec: &ProblemSpec) -> AuxJoint {
        let f = AuxFactors::NoAction {
            w1: JointDist::new(vec![Alphabet::new("W1", 1)], vec![1.0]).unwrap(),
            x: Kernel::new(
                vec![Alphabet::new("S", 2), Alphabet::new("W1", 1)],
                vec![Alphabet::new("X", 2)],
                vec![0.5, 0.5, 0.5, 0.5],
            )
            .unwrap(),
        };
        compose_aux(f, spec).unwrap()
    }

    #[test]
    fn revealing_observation_drives_distortion_to_zero() {
        let spec = revealing_spec();
        let aux = degenerate_encoder(&spec);
        let (value, decoder) = inner_min(&aux, spec.distortion.as_ref().unwrap()).unwrap();
        assert!(value < 1e-12);
        // The decoder reads the state off the observation parity.
        for y in 0..4 {
            let row = decoder.row(&[0, y]);
            assert_eq!(row[y % 2], 1.0);
        }
    }

    #[test]
    fn uninformative_observation_leaves_prior_guessing() {
        let spec = uninformative_spec(&[0.5, 0.5]);
        let aux = degenerate_encoder(&spec);
        let (value, _) = inner_min(&aux, spec.distortion.as_ref().unwrap()).unwrap();
        assert!((value - 0.5).abs() < 1e-12);

        let skew = uninformative_spec(&[0.7, 0.3]);
        let aux = degenerate_encoder(&skew);
        let (value, decoder) = inner_min(&aux, skew.distortion.as_ref().unwrap()).unwrap();
        assert!((value - 0.3).abs() < 1e-12, "1 - max_s P(s)");
        // Best response guesses the mode.
        assert_eq!(decoder.row(&[0, 0])[0], 1.0);
    }

    #[test]
    fn maximin_on_trivial_channels() {
        let cfg = SearchConfig { restarts: 6, seed: 2, aux_w1: Some(2), ..Default::default() };
        // Nothing helps or hurts: the value is the blind-guess distortion.
        match solve_maximin(0.0, &uninformative_spec(&[0.5, 0.5]), &cfg).unwrap() {
            GameOutcome::Solved(sol) => assert!((sol.d_star - 0.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        // Fully revealing observation: the encoder cannot hide the state.
        match solve_maximin(0.0, &revealing_spec(), &cfg).unwrap() {
            GameOutcome::Solved(sol) => assert!(sol.d_star < 1e-9),
            other => panic!("{other:?}"),
        }
        // Skewed prior, uninformative channel.
        match solve_maximin(0.0, &uninformative_spec(&[0.7, 0.3]), &cfg).unwrap() {
            GameOutcome::Solved(sol) => assert!((sol.d_star - 0.3).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_rate_matches_maximin_at_zero() {
        let cfg = SearchConfig { restarts: 4, seed: 6, aux_w1: Some(2), ..Default::default() };
        let spec = uninformative_spec(&[0.7, 0.3]);
        match zero_rate_value(&spec, &cfg).unwrap() {
            GameOutcome::Solved(sol) => assert!((sol.d_star - 0.3).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_rate_is_reported() {
        let cfg = SearchConfig { restarts: 4, seed: 4, aux_w1: Some(2), ..Default::default() };
        let spec = uninformative_spec(&[0.5, 0.5]);
        match solve_maximin(0.4, &spec, &cfg).unwrap() {
            GameOutcome::InfeasibleRate { max_rate } => assert!(max_rate < 1e-6),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn minimax_equals_maximin_on_trivial_channels() {
        let cfg = SearchConfig { restarts: 4, seed: 11, aux_w1: Some(2), ..Default::default() };
        let spec = uninformative_spec(&[0.5, 0.5]);
        let minimax = solve_minimax(0.0, &spec, &cfg).unwrap();
        assert!((minimax - 0.5).abs() < 5e-3, "minimax {minimax}");
        let spec = revealing_spec();
        let minimax = solve_minimax(0.0, &spec, &cfg).unwrap();
        assert!(minimax < 5e-3, "minimax {minimax}");
    }

    #[test]
    fn single_action_collapses_both_values() {
        // |V| = 1 leaves the decoder no choice; both values equal the
        // plain expected distortion of the forced action.
        let text = r#"{
            "alphabets": {"S": 2, "X": 2, "Y": 2, "V": 1},
            "source": [0.6, 0.4],
            "channel": [[0.8, 0.2], [0.2, 0.8], [0.8, 0.2], [0.2, 0.8]],
            "target_x": [[0.5, 0.5], [0.5, 0.5]],
            "distortion": [[0.25], [0.75]]
        }"#;
        let spec = ProblemSpec::from_json(text).unwrap();
        let expect = 0.6 * 0.25 + 0.4 * 0.75;
        let cfg = SearchConfig { restarts: 4, seed: 8, aux_w1: Some(2), ..Default::default() };
        match solve_maximin(0.0, &spec, &cfg).unwrap() {
            GameOutcome::Solved(sol) => assert!((sol.d_star - expect).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        let minimax = solve_minimax(0.0, &spec, &cfg).unwrap();
        assert!((minimax - expect).abs() < 1e-9);
    }

    #[test]
    fn value_is_invariant_under_action_relabeling() {
        let spec = uninformative_spec(&[0.7, 0.3]);
        let swapped = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let aux = degenerate_encoder(&spec);
        let (a, _) = inner_min(&aux, spec.distortion.as_ref().unwrap()).unwrap();
        let (b, _) = inner_min(&aux, &swapped).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn hamming_value_never_beats_blind_guessing() {
        let mut rng = stream_rng(31, "game-hamming");
        let cfg = SearchConfig { restarts: 4, seed: 19, aux_w1: Some(2), ..Default::default() };
        for trial in 0..5 {
            let rows: Vec<Vec<f64>> =
                (0..4).map(|_| test_support::random_row(&mut rng, 2)).collect();
            let p0 = 0.3 + 0.4 * (trial as f64) / 5.0;
            let spec = spec_with(&rows, &[p0, 1.0 - p0]);
            match solve_maximin(0.0, &spec, &cfg).unwrap() {
                GameOutcome::Solved(sol) => {
                    let blind = 1.0 - p0.max(1.0 - p0);
                    assert!(
                        sol.d_star <= blind + 1e-9,
                        "trial {trial}: {} > {blind}",
                        sol.d_star
                    );
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn finer_decoder_information_cannot_hurt() {
        // Against any causal-class joint, a decoder that also sees W2
        // achieves at most the (W1, Y)-informed distortion.
        let spec = ProblemSpec::from_json(test_support::BSC_SPEC).unwrap();
        let d = spec.distortion.clone().unwrap();
        let mut rng = stream_rng(37, "game-w2");
        for _ in 0..10 {
            let aux =
                compose_aux(test_support::random_causal_factors(&mut rng, 2, 2), &spec).unwrap();
            let coarse = best_response_value(&aux, &d, &["W1", "Y"]);
            let fine = best_response_value(&aux, &d, &["W1", "W2", "Y"]);
            assert!(fine <= coarse + 1e-12, "fine {fine} > coarse {coarse}");
        }
    }

    fn best_response_value(aux: &AuxJoint, d: &[Vec<f64>], seen: &[&str]) -> f64 {
        let mut axes = seen.to_vec();
        axes.push("S");
        axes.sort_unstable();
        let p = aux.joint.marginal(&axes).unwrap();
        let s_pos = p.axis_index("S").unwrap();
        let sizes: Vec<usize> = p.axes().iter().map(|a| a.size).collect();
        let obs_cells: usize =
            sizes.iter().enumerate().filter(|(i, _)| *i != s_pos).map(|(_, &s)| s).product();
        let mut value = 0.0;
        for obs in 0..obs_cells {
            let mut coords = vec![0usize; sizes.len()];
            let mut rem = obs;
            for i in (0..sizes.len()).rev() {
                if i == s_pos {
                    continue;
                }
                coords[i] = rem % sizes[i];
                rem /= sizes[i];
            }
            let v_n = d[0].len();
            let mut best = f64::INFINITY;
            for v in 0..v_n {
                let mut acc = 0.0;
                for s in 0..sizes[s_pos] {
                    coords[s_pos] = s;
                    acc += p.prob(&coords) * d[s][v];
                }
                best = best.min(acc);
            }
            if best.is_finite() {
                value += best;
            }
        }
        value
    }
}
