//! Exact posterior beliefs of small codes and numerical verification of
//! the divergence bounds that connect leakage control to belief control.
//!
//! Everything here runs on the exact enumeration of a [`BlockCode`]
//! (see [`crate::codec::enumerate_code`]): the induced joint over full
//! state and output sequences, with the realized codeword sequences
//! attached to every outcome. The audits then compare the decoder's
//! per-sequence posterior against the single-letter target conditionals
//! along those realized codewords.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{enumerate_code, exact_leakage, BlockCode, CodecError, CodeTable, ExactLeakage};
use crate::game;
use crate::model::{AuxJoint, ModelError};
use crate::probcore::{Alphabet, JointDist, Kernel, ProbError};

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("enumeration needs {0} cells, above the cap")]
    CapExceeded(u128),
    #[error("zero-probability observation")]
    ZeroObservation,
    #[error("bound constants undefined: {0}")]
    AlphaUndefined(String),
    #[error("support violation: {0}")]
    Support(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Game(#[from] game::GameError),
}

pub type Result<T> = std::result::Result<T, BeliefError>;

fn table(code: &BlockCode) -> Result<CodeTable> {
    match enumerate_code(code)? {
        Ok(t) => Ok(t),
        Err(needed) => Err(BeliefError::CapExceeded(needed)),
    }
}

fn y_flat(table: &CodeTable, y_seq: &[usize]) -> Result<usize> {
    if y_seq.len() != table.n_total {
        return Err(BeliefError::Support(format!(
            "observation length {} differs from code length {}",
            y_seq.len(),
            table.n_total
        )));
    }
    let mut flat = 0usize;
    for &y in y_seq {
        if y >= table.y_n {
            return Err(BeliefError::Support(format!("symbol {y} outside the output alphabet")));
        }
        flat = flat * table.y_n + y;
    }
    Ok(flat)
}

/// Exact Bayes posterior over full state sequences given one observed
/// output sequence, as a joint distribution over per-position axes.
pub fn posterior(code: &BlockCode, y_seq: &[usize]) -> Result<JointDist> {
    let t = table(code)?;
    let y = y_flat(&t, y_seq)?;
    let p_y: f64 = (0..t.s_cells).map(|s| t.joint[s * t.y_cells + y]).sum();
    if p_y <= 0.0 {
        return Err(BeliefError::ZeroObservation);
    }
    let axes: Vec<Alphabet> =
        (0..t.n_total).map(|i| Alphabet::new(format!("S{i:03}"), t.s_n)).collect();
    let mass: Vec<f64> =
        (0..t.s_cells).map(|s| t.joint[s * t.y_cells + y] / p_y).collect();
    Ok(JointDist::new(axes, mass)?)
}

/// The audited quantities of the posterior-divergence bound.
#[derive(Clone, Debug, Serialize)]
pub struct BeliefAudit {
    /// Normalized divergence between the sequence posterior and the
    /// product of single-letter conditionals along realized codewords.
    pub lhs: f64,
    /// `(leakage - e_lower) + alpha1 * delta + alpha2 * p_atypical`.
    pub rhs: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta: f64,
    pub p_atypical: f64,
    pub leakage: f64,
    pub e_lower: f64,
    pub holds: bool,
}

struct Posteriors {
    p_y: Vec<f64>,
    /// `P(S_i = sigma | y)`, layout `[y][i][sigma]`.
    marginals: Vec<f64>,
    /// `H(S^N | Y^N = y)` in bits, layout `[y]`.
    h_cond: Vec<f64>,
}

fn posteriors(t: &CodeTable) -> Posteriors {
    let mut p_y = vec![0.0; t.y_cells];
    for s in 0..t.s_cells {
        for y in 0..t.y_cells {
            p_y[y] += t.joint[s * t.y_cells + y];
        }
    }
    let mut marginals = vec![0.0; t.y_cells * t.n_total * t.s_n];
    let mut h_cond = vec![0.0; t.y_cells];
    for y in 0..t.y_cells {
        if p_y[y] <= 0.0 {
            continue;
        }
        for s in 0..t.s_cells {
            let p = t.joint[s * t.y_cells + y] / p_y[y];
            if p <= 0.0 {
                continue;
            }
            h_cond[y] -= p * p.log2();
            let mut rem = s;
            for i in (0..t.n_total).rev() {
                let sigma = rem % t.s_n;
                rem /= t.s_n;
                marginals[(y * t.n_total + i) * t.s_n + sigma] += p;
            }
        }
    }
    Posteriors { p_y, marginals, h_cond }
}

/// Mix a joint with the uniform distribution over its axes; the paper's
/// full-support device for targets with zero cells.
pub fn mix_with_uniform(joint: &JointDist, weight: f64) -> Result<JointDist> {
    let u = 1.0 / joint.mass().len() as f64;
    let mass: Vec<f64> =
        joint.mass().iter().map(|&p| (1.0 - weight) * p + weight * u).collect();
    Ok(JointDist::new(joint.axes().to_vec(), mass)?)
}

/// Conditioning data shared by the audits: the single-letter target
/// conditional of the state given the decoder's knowledge core.
struct CoreConditional {
    /// `Q(s | w1, w2, y)` indexed `((w1 * w2_n + w2) * y_n + y) * s_n + s`.
    rows: Vec<f64>,
    w2_n: usize,
    y_n: usize,
    s_n: usize,
}

impl CoreConditional {
    fn new(q_joint: &JointDist, with_w2: bool) -> Result<Self> {
        let names: Vec<&str> =
            if with_w2 { vec!["W1", "W2", "Y"] } else { vec!["W1", "Y"] };
        let k = Kernel::from_joint(q_joint, &names, &["S"])?;
        let sizes: Vec<usize> = k.from_axes().iter().map(|a| a.size).collect();
        let s_n = k.to_axes()[0].size;
        let (w2_n, y_n) = if with_w2 { (sizes[1], sizes[2]) } else { (1, sizes[1]) };
        Ok(CoreConditional { rows: k.rows().to_vec(), w2_n, y_n, s_n })
    }

    fn q(&self, w1: usize, w2: usize, y: usize, s: usize) -> f64 {
        self.rows[((w1 * self.w2_n + w2) * self.y_n + y) * self.s_n + s]
    }
}

/// Verify the posterior-divergence bound on an enumerable code. The
/// target joint must have full support over the knowledge core; targets
/// with zeros can be mixed toward uniform first (`mix`).
pub fn audit_divergence_bound(
    code: &BlockCode,
    aux: &AuxJoint,
    delta: f64,
    mix: Option<f64>,
) -> Result<BeliefAudit> {
    let t = table(code)?;
    let with_w2 = !code.single_block;
    let core_names: Vec<&str> =
        if with_w2 { vec!["S", "W1", "W2", "Y"] } else { vec!["S", "W1", "Y"] };
    let mut q_joint = aux.joint.marginal(&core_names)?;
    if let Some(w) = mix {
        q_joint = mix_with_uniform(&q_joint, w)?;
    }
    if let Some(cell) = q_joint.mass().iter().position(|&p| p <= 0.0) {
        return Err(BeliefError::AlphaUndefined(format!(
            "target joint has a zero cell (index {cell}); pass a mixing weight"
        )));
    }
    let cond = CoreConditional::new(&q_joint, with_w2)?;

    // Bound constants over the full-support target.
    let (w1_n, w2_n, y_n, s_n) = (
        q_joint.axes()[q_joint.axis_index("W1")?].size,
        if with_w2 { q_joint.axes()[q_joint.axis_index("W2")?].size } else { 1 },
        t.y_n,
        t.s_n,
    );
    let mut alpha1 = 0.0;
    let mut q_min = f64::INFINITY;
    for w1 in 0..w1_n {
        for w2 in 0..w2_n {
            for y in 0..y_n {
                for s in 0..s_n {
                    let q = cond.q(w1, w2, y, s);
                    alpha1 += -(q.log2());
                    q_min = q_min.min(q);
                }
            }
        }
    }
    let alpha2 = -(q_min.log2());

    let post = posteriors(&t);
    let n = t.n_total as f64;

    // Cross term and atypicality mass, outcome by outcome.
    let mut cross = 0.0;
    let mut p_atypical = 0.0;
    let typ_target = q_joint.mass();
    let mut counts = vec![0u32; typ_target.len()];
    // Canonical axis order of the target: S, W1[, W2], Y.
    for o in &t.outcomes {
        let mut y_coords = vec![0usize; t.n_total];
        let mut s_coords = vec![0usize; t.n_total];
        let mut rem = o.s_flat;
        for i in (0..t.n_total).rev() {
            s_coords[i] = rem % t.s_n;
            rem /= t.s_n;
        }
        loop {
            let mut p_out = o.prob;
            for (i, &y) in y_coords.iter().enumerate() {
                p_out *= o.out_dists[i * t.y_n + y];
            }
            if p_out > 0.0 {
                let mut y_ix = 0usize;
                for &y in &y_coords {
                    y_ix = y_ix * t.y_n + y;
                }
                // Cross-entropy of the posterior marginals against the
                // target conditionals along this outcome's codewords.
                let mut ce = 0.0;
                for i in 0..t.n_total {
                    let w1 = o.w1[i] as usize;
                    let w2 = if with_w2 { o.w2[i] as usize } else { 0 };
                    for sigma in 0..t.s_n {
                        let pm = post.marginals[(y_ix * t.n_total + i) * t.s_n + sigma];
                        if pm > 0.0 {
                            ce -= pm * cond.q(w1, w2, y_coords[i], sigma).log2();
                        }
                    }
                }
                cross += p_out * ce;
                // Typicality of the realized (s, w1[, w2], y) sequence.
                counts.iter_mut().for_each(|c| *c = 0);
                for i in 0..t.n_total {
                    let mut ix = s_coords[i];
                    ix = ix * w1_n + o.w1[i] as usize;
                    if with_w2 {
                        ix = ix * w2_n + o.w2[i] as usize;
                    }
                    ix = ix * y_n + y_coords[i];
                    counts[ix] += 1;
                }
                let l1: f64 = counts
                    .iter()
                    .zip(typ_target)
                    .map(|(&c, &q)| (c as f64 / n - q).abs())
                    .sum();
                if l1 > delta {
                    p_atypical += p_out;
                }
            }
            // Next output sequence.
            let mut pos = t.n_total;
            let mut done = true;
            while pos > 0 {
                pos -= 1;
                y_coords[pos] += 1;
                if y_coords[pos] < t.y_n {
                    done = false;
                    break;
                }
                y_coords[pos] = 0;
            }
            if done {
                break;
            }
        }
    }
    let h_cond_total: f64 =
        post.p_y.iter().zip(&post.h_cond).map(|(&p, &h)| p * h).sum();
    let lhs = (cross - h_cond_total) / n;

    let leakage = match exact_leakage(code)? {
        ExactLeakage::Exact(bits) => bits,
        ExactLeakage::CapExceeded { needed } => return Err(BeliefError::CapExceeded(needed)),
    };
    let e_lower = if with_w2 {
        crate::probcore::mutual_information(&q_joint, &["S"], &["W1", "W2", "Y"], &[])?
    } else {
        crate::probcore::mutual_information(&q_joint, &["S"], &["W1", "Y"], &[])?
    };
    let rhs = (leakage - e_lower) + alpha1 * delta + alpha2 * p_atypical;
    Ok(BeliefAudit {
        lhs,
        rhs,
        alpha1,
        alpha2,
        delta,
        p_atypical,
        leakage,
        e_lower,
        holds: lhs <= rhs + 1e-9,
    })
}

/// Membership data of one positive-probability `(w1^n, y^n)` pair.
#[derive(Clone, Debug, Serialize)]
pub struct PairMembership {
    pub prob: f64,
    /// Fraction of stages whose posterior is close to the target belief.
    pub close_fraction: f64,
    pub typical: bool,
    pub member: bool,
}

/// Report of the belief-set analysis.
#[derive(Clone, Debug, Serialize)]
pub struct BeliefSetReport {
    pub pairs: Vec<PairMembership>,
    /// Probability mass outside the good set.
    pub p_complement: f64,
    /// The divergence-driven bound on that mass.
    pub bound: f64,
    /// Normalized divergence with the single-auxiliary conditioning.
    pub lhs: f64,
    pub p_atypical_pairs: f64,
    pub holds: bool,
}

/// Classify every positive-probability `(w1^n, y^n)` pair: a stage is good
/// when the per-stage posterior divergence stays below `alpha^2 / (2 ln 2)`
/// bits, and a pair belongs to the good set when at least a `1 - gamma`
/// fraction of stages is good and the pair is jointly typical.
pub fn belief_sets(
    code: &BlockCode,
    aux: &AuxJoint,
    alpha: f64,
    gamma: f64,
    delta: f64,
    mix: Option<f64>,
) -> Result<BeliefSetReport> {
    let t = table(code)?;
    let mut q_joint = aux.joint.marginal(&["S", "W1", "Y"])?;
    if let Some(w) = mix {
        q_joint = mix_with_uniform(&q_joint, w)?;
    }
    if q_joint.mass().iter().any(|&p| p <= 0.0) {
        return Err(BeliefError::AlphaUndefined(
            "target joint has zero cells; pass a mixing weight".into(),
        ));
    }
    let cond = CoreConditional::new(&q_joint, false)?;
    let q_w1y = q_joint.marginal(&["W1", "Y"])?;
    let w1_n = q_w1y.axes()[0].size;
    let post = posteriors(&t);
    let n = t.n_total;
    let threshold = alpha * alpha / (2.0 * std::f64::consts::LN_2);

    // Pool outcome probabilities by the realized (w1 sequence, output
    // sequence) pair; different messages may share a codeword.
    let mut pair_mass: BTreeMap<(Vec<u8>, usize), f64> = BTreeMap::new();
    for o in &t.outcomes {
        let mut y_coords = vec![0usize; n];
        loop {
            let mut p_out = o.prob;
            for (i, &y) in y_coords.iter().enumerate() {
                p_out *= o.out_dists[i * t.y_n + y];
            }
            if p_out > 0.0 {
                let mut y_ix = 0usize;
                for &y in &y_coords {
                    y_ix = y_ix * t.y_n + y;
                }
                *pair_mass.entry((o.w1.clone(), y_ix)).or_insert(0.0) += p_out;
            }
            let mut pos = n;
            let mut done = true;
            while pos > 0 {
                pos -= 1;
                y_coords[pos] += 1;
                if y_coords[pos] < t.y_n {
                    done = false;
                    break;
                }
                y_coords[pos] = 0;
            }
            if done {
                break;
            }
        }
    }

    let mut pairs = Vec::with_capacity(pair_mass.len());
    let mut p_complement = 0.0;
    let mut p_atypical_pairs = 0.0;
    let mut counts = vec![0u32; q_w1y.mass().len()];
    for ((w1_seq, y_ix), prob) in &pair_mass {
        // Per-stage posterior divergence from the target belief.
        let mut good = 0usize;
        let mut y_coords = vec![0usize; n];
        let mut rem = *y_ix;
        for i in (0..n).rev() {
            y_coords[i] = rem % t.y_n;
            rem /= t.y_n;
        }
        for i in 0..n {
            let w1 = w1_seq[i] as usize;
            let mut d = 0.0;
            let mut defined = true;
            for sigma in 0..t.s_n {
                let pm = post.marginals[(*y_ix * n + i) * t.s_n + sigma];
                if pm > 0.0 {
                    let q = cond.q(w1, 0, y_coords[i], sigma);
                    if q <= 0.0 {
                        defined = false;
                        break;
                    }
                    d += pm * (pm / q).log2();
                }
            }
            if defined && d <= threshold {
                good += 1;
            }
        }
        let close_fraction = good as f64 / n as f64;
        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..n {
            counts[w1_seq[i] as usize * t.y_n + y_coords[i]] += 1;
        }
        let l1: f64 = counts
            .iter()
            .zip(q_w1y.mass())
            .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
            .sum();
        let typical = l1 <= delta;
        let member = close_fraction >= 1.0 - gamma && typical;
        if !member {
            p_complement += prob;
        }
        if !typical {
            p_atypical_pairs += prob;
        }
        pairs.push(PairMembership { prob: *prob, close_fraction, typical, member });
    }
    let _ = w1_n;

    // Normalized divergence with the single-auxiliary conditioning, for
    // the bound.
    let lhs = {
        let mut cross = 0.0;
        for o in &t.outcomes {
            let mut y_coords = vec![0usize; n];
            loop {
                let mut p_out = o.prob;
                for (i, &y) in y_coords.iter().enumerate() {
                    p_out *= o.out_dists[i * t.y_n + y];
                }
                if p_out > 0.0 {
                    let mut y_ix = 0usize;
                    for &y in &y_coords {
                        y_ix = y_ix * t.y_n + y;
                    }
                    let mut ce = 0.0;
                    for i in 0..n {
                        for sigma in 0..t.s_n {
                            let pm = post.marginals[(y_ix * n + i) * t.s_n + sigma];
                            if pm > 0.0 {
                                ce -= pm
                                    * cond.q(o.w1[i] as usize, 0, y_coords[i], sigma).log2();
                            }
                        }
                    }
                    cross += p_out * ce;
                }
                let mut pos = n;
                let mut done = true;
                while pos > 0 {
                    pos -= 1;
                    y_coords[pos] += 1;
                    if y_coords[pos] < t.y_n {
                        done = false;
                        break;
                    }
                    y_coords[pos] = 0;
                }
                if done {
                    break;
                }
            }
        }
        let h_cond_total: f64 =
            post.p_y.iter().zip(&post.h_cond).map(|(&p, &h)| p * h).sum();
        (cross - h_cond_total) / n as f64
    };

    let bound = (2.0 * std::f64::consts::LN_2) / (alpha * alpha * gamma) * lhs + p_atypical_pairs;
    Ok(BeliefSetReport {
        pairs,
        p_complement,
        bound,
        lhs,
        p_atypical_pairs,
        holds: p_complement <= bound + 1e-9,
    })
}

/// Chain comparison of a sequence conditional against per-index factors:
/// returns the joint divergence and the sum of per-index divergences; the
/// first always dominates the second.
pub fn kl_chain_check(
    p: &JointDist,
    a_axes: &[&str],
    b_axes: &[&str],
    q_factors: &[Kernel],
) -> Result<(f64, f64)> {
    let n = a_axes.len();
    if b_axes.len() != n || q_factors.len() != n {
        return Err(BeliefError::Support("axis/factor counts differ".into()));
    }
    for (i, k) in q_factors.iter().enumerate() {
        if k.from_axes().len() != 1
            || k.from_axes()[0].name != a_axes[i]
            || k.to_axes().len() != 1
            || k.to_axes()[0].name != b_axes[i]
        {
            return Err(BeliefError::Support(format!(
                "factor {i} must map `{}` to `{}`",
                a_axes[i], b_axes[i]
            )));
        }
    }
    let p_a = p.marginal(a_axes)?;
    let all: Vec<&str> = a_axes.iter().chain(b_axes.iter()).copied().collect();
    let p_all = p.marginal(&all)?;

    // lhs: E_a D( P(b^n | a^n) || prod q_i(b_i | a_i) ).
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let a_rank = n;
    let mut coords = vec![0usize; p_all.rank()];
    // Positions of the a-axes and b-axes inside the canonical joint.
    let a_pos: Vec<usize> =
        a_axes.iter().map(|nme| p_all.axis_index(nme)).collect::<std::result::Result<_, _>>()?;
    let b_pos: Vec<usize> =
        b_axes.iter().map(|nme| p_all.axis_index(nme)).collect::<std::result::Result<_, _>>()?;
    let a_pos_marg: Vec<usize> =
        a_axes.iter().map(|nme| p_a.axis_index(nme)).collect::<std::result::Result<_, _>>()?;
    for (flat, &pv) in p_all.mass().iter().enumerate() {
        if pv == 0.0 {
            continue;
        }
        p_all.decode_cell(flat, &mut coords);
        let mut a_coords = vec![0usize; a_rank];
        for (i, &pos) in a_pos.iter().enumerate() {
            a_coords[i] = coords[pos];
        }
        let mut a_marg_coords = vec![0usize; a_rank];
        for (i, &pos) in a_pos_marg.iter().enumerate() {
            a_marg_coords[pos] = a_coords[i];
        }
        let pa = p_a.prob(&a_marg_coords);
        let p_b_given_a = pv / pa;
        let mut q_prod = 1.0;
        for i in 0..n {
            let q = q_factors[i].row(&[a_coords[i]])[coords[b_pos[i]]];
            if q <= 0.0 {
                return Err(BeliefError::Support(format!(
                    "factor {i} puts no mass where p does"
                )));
            }
            q_prod *= q;
        }
        lhs += pv * (p_b_given_a / q_prod).log2();
    }

    // rhs: sum_i E_a D( P(b_i | a^n) || q_i(b_i | a_i) ).
    for i in 0..n {
        let mut keep: Vec<&str> = a_axes.to_vec();
        keep.push(b_axes[i]);
        let p_i = p.marginal(&keep)?;
        let p_ia = p_i.marginal(a_axes)?;
        let mut coords_i = vec![0usize; p_i.rank()];
        let a_pos_i: Vec<usize> = a_axes
            .iter()
            .map(|nme| p_i.axis_index(nme))
            .collect::<std::result::Result<_, _>>()?;
        let b_pos_i = p_i.axis_index(b_axes[i])?;
        for (flat, &pv) in p_i.mass().iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            p_i.decode_cell(flat, &mut coords_i);
            let mut a_marg_coords = vec![0usize; a_rank];
            let mut a_val_i = 0usize;
            for (j, &pos) in a_pos_i.iter().enumerate() {
                let pos_m = p_ia.axis_index(a_axes[j])?;
                a_marg_coords[pos_m] = coords_i[pos];
                if j == i {
                    a_val_i = coords_i[pos];
                }
            }
            let pa = p_ia.prob(&a_marg_coords);
            let q = q_factors[i].row(&[a_val_i])[coords_i[b_pos_i]];
            if q <= 0.0 {
                return Err(BeliefError::Support(format!(
                    "factor {i} puts no mass where p does"
                )));
            }
            rhs += pv * ((pv / pa) / q).log2();
        }
    }
    Ok((lhs, rhs))
}

/// Bound check for the distortion gap between the sequence decoder and the
/// single-letter best response.
#[derive(Clone, Debug, Serialize)]
pub struct DistortionGapReport {
    pub n_stage: f64,
    pub single_letter: f64,
    pub gap: f64,
    pub bound: f64,
    pub p_complement: f64,
    pub holds: bool,
}

/// Compare the exact sequence-decoder distortion with the single-letter
/// inner minimum and check the belief-set bound on their gap.
pub fn distortion_gap(
    code: &BlockCode,
    aux: &AuxJoint,
    distortion: &[Vec<f64>],
    alpha: f64,
    gamma: f64,
    delta: f64,
    mix: Option<f64>,
) -> Result<DistortionGapReport> {
    let t = table(code)?;
    let post = posteriors(&t);
    let n = t.n_total;
    let v_n = distortion[0].len();

    // Exact n-stage minimum: the decoder sees the whole output sequence
    // and picks each stage's action from the posterior marginal.
    let mut n_stage = 0.0;
    for y in 0..t.y_cells {
        if post.p_y[y] <= 0.0 {
            continue;
        }
        for i in 0..n {
            let mut best = f64::INFINITY;
            for v in 0..v_n {
                let mut d = 0.0;
                for sigma in 0..t.s_n {
                    d += post.marginals[(y * n + i) * t.s_n + sigma] * distortion[sigma][v];
                }
                best = best.min(d);
            }
            n_stage += post.p_y[y] * best;
        }
    }
    n_stage /= n as f64;

    let (single_letter, _) = game::inner_min(aux, distortion)?;
    let sets = belief_sets(code, aux, alpha, gamma, delta, mix)?;
    let d_max = distortion.iter().flatten().copied().fold(0.0f64, f64::max);
    let bound = (alpha + 2.0 * gamma + delta + sets.p_complement) * d_max;
    let gap = (n_stage - single_letter).abs();
    Ok(DistortionGapReport {
        n_stage,
        single_letter,
        gap,
        bound,
        p_complement: sets.p_complement,
        holds: gap <= bound + 1e-9,
    })
}
