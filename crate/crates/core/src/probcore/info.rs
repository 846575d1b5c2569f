//! Information measures in bits. `0 * log(1/0)` is treated as 0 throughout.

use super::dist::JointDist;
use super::{ProbError, Result};

fn plain_entropy(p: &JointDist) -> f64 {
    let mut h = 0.0;
    for &v in p.mass() {
        if v > 0.0 {
            h -= v * v.log2();
        }
    }
    h.max(0.0)
}

fn check_disjoint(sets: &[&[&str]]) -> Result<()> {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[..i] {
            for name in *a {
                if b.contains(name) {
                    return Err(ProbError::Argument(format!("axis `{name}` appears in two sets")));
                }
            }
        }
    }
    Ok(())
}

/// Conditional entropy `H(targets | given)` of `p`, in bits. `given` may be
/// empty.
pub fn entropy(p: &JointDist, targets: &[&str], given: &[&str]) -> Result<f64> {
    check_disjoint(&[targets, given])?;
    for name in targets.iter().chain(given) {
        p.axis_index(name)?;
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let both: Vec<&str> = targets.iter().chain(given).copied().collect();
    let h_both = plain_entropy(&p.marginal(&both)?);
    if given.is_empty() {
        return Ok(h_both);
    }
    let h_given = plain_entropy(&p.marginal(given)?);
    Ok((h_both - h_given).max(0.0))
}

/// Conditional mutual information `I(a; b | given)` of `p`, in bits.
/// Symmetric in `a` and `b`; clamped to 0 when rounding drives it slightly
/// negative.
pub fn mutual_information(p: &JointDist, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
    check_disjoint(&[a, b, given])?;
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    // I(A;B|C) = H(A,C) - H(C) + H(B,C) - H(A,B,C)
    let ac: Vec<&str> = a.iter().chain(given).copied().collect();
    let bc: Vec<&str> = b.iter().chain(given).copied().collect();
    let abc: Vec<&str> = a.iter().chain(b).chain(given).copied().collect();
    let mut i = plain_entropy(&p.marginal(&ac)?) + plain_entropy(&p.marginal(&bc)?)
        - plain_entropy(&p.marginal(&abc)?);
    if given.is_empty() {
        // H(empty) = 0
    } else {
        i -= plain_entropy(&p.marginal(given)?);
    }
    Ok(i.max(0.0))
}

/// Kullback-Leibler divergence `D(p || q)` in bits. Requires `p` absolutely
/// continuous with respect to `q`; a cell with `p > 0` and `q = 0` is
/// reported as an infinite-divergence error carrying the offending cell.
pub fn kl_divergence(p: &JointDist, q: &JointDist) -> Result<f64> {
    if p.axes() != q.axes() {
        return Err(ProbError::AxisMismatch("kl_divergence needs identical axes".into()));
    }
    let mut d = 0.0;
    for (cell, (&pv, &qv)) in p.mass().iter().zip(q.mass()).enumerate() {
        if pv == 0.0 {
            continue;
        }
        if qv == 0.0 {
            return Err(ProbError::DivergenceInfinite { cell, p: pv });
        }
        d += pv * (pv / qv).log2();
    }
    Ok(d.max(0.0))
}

/// Total variation in the l1 convention: `sum over cells of |p - q|`, in
/// `[0, 2]`.
pub fn total_variation(p: &JointDist, q: &JointDist) -> Result<f64> {
    if p.axes() != q.axes() {
        return Err(ProbError::AxisMismatch("total_variation needs identical axes".into()));
    }
    Ok(p.mass().iter().zip(q.mass()).map(|(a, b)| (a - b).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::super::dist::{Alphabet, Kernel};
    use super::*;

    fn bit(name: &str) -> Alphabet {
        Alphabet::new(name, 2)
    }

    fn bern(name: &str, p1: f64) -> JointDist {
        JointDist::new(vec![bit(name)], vec![1.0 - p1, p1]).unwrap()
    }

    fn bsc(from: &str, to: &str, flip: f64) -> Kernel {
        Kernel::new(
            vec![bit(from)],
            vec![bit(to)],
            vec![1.0 - flip, flip, flip, 1.0 - flip],
        )
        .unwrap()
    }

    #[test]
    fn entropy_of_uniform_bit_is_one() {
        let p = bern("S", 0.5);
        assert!((entropy(&p, &["S"], &[]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_of_point_mass_is_zero() {
        let p = bern("S", 0.0);
        assert_eq!(entropy(&p, &["S"], &[]).unwrap(), 0.0);
    }

    #[test]
    fn entropy_given_a_copy_is_zero() {
        let p = bern("S", 0.5)
            .compose(&Kernel::deterministic(vec![bit("S")], vec![bit("Y")], |c| vec![c[0]]).unwrap())
            .unwrap();
        assert!(entropy(&p, &["S"], &["Y"]).unwrap() < 1e-12);
    }

    #[test]
    fn independent_bits_share_no_information() {
        let p = bern("A", 0.5).product(&bern("B", 0.5)).unwrap();
        assert!(mutual_information(&p, &["A"], &["B"], &[]).unwrap() < 1e-12);
    }

    #[test]
    fn perfect_copy_shares_one_bit() {
        let p = bern("S", 0.5)
            .compose(&Kernel::deterministic(vec![bit("S")], vec![bit("Y")], |c| vec![c[0]]).unwrap())
            .unwrap();
        assert!((mutual_information(&p, &["S"], &["Y"], &[]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bsc_mutual_information_matches_formula() {
        // S ~ Bern(0.5) through a BSC(0.1): I(S;Y) = 1 - h_b(0.1).
        // Cross-checked against the brute-force sum over the 4-cell joint,
        // which is what mutual_information computes.
        let p = bern("S", 0.5).compose(&bsc("S", "Y", 0.1)).unwrap();
        let hb = |x: f64| -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
        let expect = 1.0 - hb(0.1);
        assert!((expect - 0.5310044064107188).abs() < 1e-12);
        assert!((mutual_information(&p, &["S"], &["Y"], &[]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let p = bern("A", 0.5).product(&bern("B", 0.5)).unwrap();
        assert!(mutual_information(&p, &["A"], &["A"], &[]).is_err());
    }

    #[test]
    fn kl_zero_on_equal() {
        let p = bern("S", 0.5);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_bern_half_vs_quarter() {
        // 0.5 log2(0.5/0.75) + 0.5 log2(0.5/0.25), two-term hand formula.
        let p = bern("S", 0.5);
        let q = bern("S", 0.25);
        let expect = 0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2();
        assert!((expect - 0.20751874963942185).abs() < 1e-12);
        assert!((kl_divergence(&p, &q).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn kl_support_mismatch_is_infinite() {
        let p = bern("S", 0.5);
        let q = bern("S", 0.0);
        assert!(matches!(kl_divergence(&p, &q), Err(ProbError::DivergenceInfinite { .. })));
    }

    #[test]
    fn tv_of_disjoint_point_masses_is_two() {
        let p = bern("S", 0.0);
        let q = bern("S", 1.0);
        assert_eq!(total_variation(&p, &q).unwrap(), 2.0);
    }

    #[test]
    fn tv_of_bernoullis() {
        let p = bern("S", 0.5);
        let q = bern("S", 0.3);
        assert!((total_variation(&p, &q).unwrap() - 0.4).abs() < 1e-15);
    }
}
