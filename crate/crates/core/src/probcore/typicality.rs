//! Empirical distributions of symbol sequences and l1 typicality.

use super::dist::{Alphabet, JointDist};
use super::{total_variation, ProbError, Result};

/// Empirical distribution of a tuple sequence. Each element of `seq` is
/// one outcome tuple with coordinates in the order of `axes` as given;
/// axes (and coordinates with them) are canonicalized here.
pub fn empirical_dist(seq: &[Vec<usize>], axes: &[Alphabet]) -> Result<JointDist> {
    if seq.is_empty() {
        return Err(ProbError::Argument("empty sequence".into()));
    }
    let mut perm: Vec<usize> = (0..axes.len()).collect();
    perm.sort_by(|&i, &j| axes[i].name.cmp(&axes[j].name));
    let sorted: Vec<Alphabet> = perm.iter().map(|&i| axes[i].clone()).collect();
    let cells: usize = sorted.iter().map(|a| a.size).product();
    let strides = {
        let mut s = vec![1usize; sorted.len()];
        for i in (0..sorted.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * sorted[i + 1].size;
        }
        s
    };
    let mut counts = vec![0u64; cells];
    for tuple in seq {
        if tuple.len() != sorted.len() {
            return Err(ProbError::Argument("tuple rank mismatch".into()));
        }
        let mut flat = 0;
        for (pos, (&src, a)) in perm.iter().zip(&sorted).enumerate() {
            let c = tuple[src];
            if c >= a.size {
                return Err(ProbError::Argument(format!(
                    "symbol {c} out of range on axis `{}`",
                    a.name
                )));
            }
            flat += c * strides[pos];
        }
        counts[flat] += 1;
    }
    let n = seq.len() as f64;
    let mass: Vec<f64> = counts.into_iter().map(|c| c as f64 / n).collect();
    JointDist::new(sorted, mass)
}

/// True iff the l1 distance between the sequence's empirical distribution
/// and `q` is at most `delta`.
pub fn is_typical(seq: &[Vec<usize>], q: &JointDist, delta: f64) -> Result<bool> {
    if delta <= 0.0 {
        return Err(ProbError::Argument("delta must be positive".into()));
    }
    let emp = empirical_dist(seq, q.axes())?;
    Ok(total_variation(&emp, q)? <= delta)
}
