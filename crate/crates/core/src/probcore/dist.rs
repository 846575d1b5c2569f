//! Labeled dense probability tensors and conditional kernels.

use serde::{Deserialize, Serialize};

use super::{ProbError, Result, MASS_TOL, MAX_CELLS};

/// A named finite alphabet. Axis labels are short strings such as `"S"`,
/// `"W1"`, `"Y2"`; sizes are at least 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub name: String,
    pub size: usize,
}

impl Alphabet {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Alphabet { name: name.into(), size }
    }
}

fn strides(axes: &[Alphabet]) -> Vec<usize> {
    let mut s = vec![1usize; axes.len()];
    for i in (0..axes.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * axes[i + 1].size;
    }
    s
}

fn cell_count(axes: &[Alphabet]) -> usize {
    axes.iter().map(|a| a.size).product::<usize>().max(1)
}

fn decode(mut flat: usize, axes: &[Alphabet], out: &mut [usize]) {
    for i in (0..axes.len()).rev() {
        out[i] = flat % axes[i].size;
        flat /= axes[i].size;
    }
}

fn check_axes(axes: &[Alphabet]) -> Result<()> {
    for (i, a) in axes.iter().enumerate() {
        if a.size == 0 {
            return Err(ProbError::Argument(format!("axis `{}` has size 0", a.name)));
        }
        if axes[..i].iter().any(|b| b.name == a.name) {
            return Err(ProbError::DuplicateAxis(a.name.clone()));
        }
    }
    let cells = cell_count(axes);
    if cells > MAX_CELLS {
        return Err(ProbError::CapExceeded { cells });
    }
    Ok(())
}

/// Permutation that sorts `axes` by name.
fn sort_perm(axes: &[Alphabet]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..axes.len()).collect();
    perm.sort_by(|&i, &j| axes[i].name.cmp(&axes[j].name));
    perm
}

/// Reorder a row-major tensor from `axes` order to the order given by `perm`.
fn permute_mass(axes: &[Alphabet], mass: &[f64], perm: &[usize]) -> Vec<f64> {
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return mass.to_vec();
    }
    let new_axes: Vec<Alphabet> = perm.iter().map(|&p| axes[p].clone()).collect();
    let new_strides = strides(&new_axes);
    let mut out = vec![0.0; mass.len()];
    let mut coords = vec![0usize; axes.len()];
    for (flat, &v) in mass.iter().enumerate() {
        decode(flat, axes, &mut coords);
        let mut nf = 0;
        for (ni, &p) in perm.iter().enumerate() {
            nf += coords[p] * new_strides[ni];
        }
        out[nf] = v;
    }
    out
}

/// Dense joint distribution over one or more named axes.
///
/// Axes are stored sorted by name so that two distributions over the same
/// alphabets compare cell-for-cell; `mass` is row-major over that canonical
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDist {
    axes: Vec<Alphabet>,
    mass: Vec<f64>,
}

impl JointDist {
    /// Build from axes in any order with `mass` row-major over that order.
    /// The result is canonicalized (axes sorted by name).
    pub fn new(axes: Vec<Alphabet>, mass: Vec<f64>) -> Result<Self> {
        check_axes(&axes)?;
        if mass.len() != cell_count(&axes) {
            return Err(ProbError::Argument(format!(
                "mass has {} cells, axes imply {}",
                mass.len(),
                cell_count(&axes)
            )));
        }
        for (cell, &v) in mass.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(ProbError::NegativeMass { cell, value: v });
            }
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(ProbError::NotNormalized { total });
        }
        let perm = sort_perm(&axes);
        let mass = permute_mass(&axes, &mass, &perm);
        let axes = perm.into_iter().map(|p| axes[p].clone()).collect();
        Ok(JointDist { axes, mass })
    }

    /// Internal constructor for results of exact operations; axes must
    /// already be canonical and the mass normalized.
    pub(crate) fn from_canonical(axes: Vec<Alphabet>, mass: Vec<f64>) -> Self {
        debug_assert!(axes.windows(2).all(|w| w[0].name < w[1].name));
        debug_assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        JointDist { axes, mass }
    }

    /// Uniform distribution over the product of the given axes.
    pub fn uniform(axes: Vec<Alphabet>) -> Result<Self> {
        check_axes(&axes)?;
        let n = cell_count(&axes);
        Self::new(axes, vec![1.0 / n as f64; n])
    }

    /// Point mass on one outcome tuple (coords in the given axis order).
    pub fn point_mass(axes: Vec<Alphabet>, coords: &[usize]) -> Result<Self> {
        check_axes(&axes)?;
        let st = strides(&axes);
        if coords.len() != axes.len() {
            return Err(ProbError::Argument("coords rank mismatch".into()));
        }
        let mut flat = 0;
        for (i, (&c, a)) in coords.iter().zip(&axes).enumerate() {
            if c >= a.size {
                return Err(ProbError::Argument(format!("coord {c} out of range on axis {i}")));
            }
            flat += c * st[i];
        }
        let mut mass = vec![0.0; cell_count(&axes)];
        mass[flat] = 1.0;
        Self::new(axes, mass)
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| ProbError::AxisNotFound(name.into()))
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.axes)
    }

    /// Probability of the outcome tuple (coords in canonical axis order).
    pub fn prob(&self, coords: &[usize]) -> f64 {
        let st = strides(&self.axes);
        let flat: usize = coords.iter().zip(&st).map(|(&c, &s)| c * s).sum();
        self.mass[flat]
    }

    pub fn decode_cell(&self, flat: usize, out: &mut [usize]) {
        decode(flat, &self.axes, out);
    }

    /// Marginal over the named axes (any order; result is canonical).
    pub fn marginal(&self, keep: &[&str]) -> Result<JointDist> {
        let mut keep_idx = Vec::with_capacity(keep.len());
        for name in keep {
            let i = self.axis_index(name)?;
            if keep_idx.contains(&i) {
                return Err(ProbError::DuplicateAxis((*name).into()));
            }
            keep_idx.push(i);
        }
        keep_idx.sort_unstable();
        let new_axes: Vec<Alphabet> = keep_idx.iter().map(|&i| self.axes[i].clone()).collect();
        let new_st = strides(&new_axes);
        let mut out = vec![0.0; cell_count(&new_axes)];
        let mut coords = vec![0usize; self.rank()];
        for (flat, &v) in self.mass.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            decode(flat, &self.axes, &mut coords);
            let mut nf = 0;
            for (ni, &i) in keep_idx.iter().enumerate() {
                nf += coords[i] * new_st[ni];
            }
            out[nf] += v;
        }
        Ok(JointDist::from_canonical(new_axes, out))
    }

    /// Condition on fixed values for some axes; returns the renormalized
    /// distribution over the remaining axes.
    pub fn condition(&self, fixed: &[(&str, usize)]) -> Result<JointDist> {
        let mut fix: Vec<(usize, usize)> = Vec::with_capacity(fixed.len());
        for (name, val) in fixed {
            let i = self.axis_index(name)?;
            if *val >= self.axes[i].size {
                return Err(ProbError::Argument(format!("value {val} out of range for `{name}`")));
            }
            fix.push((i, *val));
        }
        let keep_idx: Vec<usize> =
            (0..self.rank()).filter(|i| !fix.iter().any(|(j, _)| j == i)).collect();
        if keep_idx.is_empty() {
            return Err(ProbError::Argument("conditioning on every axis".into()));
        }
        let new_axes: Vec<Alphabet> = keep_idx.iter().map(|&i| self.axes[i].clone()).collect();
        let new_st = strides(&new_axes);
        let mut out = vec![0.0; cell_count(&new_axes)];
        let mut coords = vec![0usize; self.rank()];
        let mut total = 0.0;
        for (flat, &v) in self.mass.iter().enumerate() {
            decode(flat, &self.axes, &mut coords);
            if fix.iter().any(|&(i, val)| coords[i] != val) {
                continue;
            }
            let mut nf = 0;
            for (ni, &i) in keep_idx.iter().enumerate() {
                nf += coords[i] * new_st[ni];
            }
            out[nf] += v;
            total += v;
        }
        if total <= 0.0 {
            return Err(ProbError::ZeroEvent);
        }
        for v in &mut out {
            *v /= total;
        }
        Ok(JointDist::from_canonical(new_axes, out))
    }

    /// Product of two distributions over disjoint axis sets.
    pub fn product(&self, other: &JointDist) -> Result<JointDist> {
        for a in &other.axes {
            if self.axes.iter().any(|b| b.name == a.name) {
                return Err(ProbError::DuplicateAxis(a.name.clone()));
            }
        }
        let mut axes: Vec<Alphabet> = self.axes.iter().chain(&other.axes).cloned().collect();
        axes.sort_by(|a, b| a.name.cmp(&b.name));
        check_axes(&axes)?;
        let st = strides(&axes);
        let pos: Vec<usize> = self
            .axes
            .iter()
            .map(|a| axes.iter().position(|b| b.name == a.name).unwrap())
            .collect();
        let pos_o: Vec<usize> = other
            .axes
            .iter()
            .map(|a| axes.iter().position(|b| b.name == a.name).unwrap())
            .collect();
        let mut out = vec![0.0; cell_count(&axes)];
        let mut ca = vec![0usize; self.rank()];
        let mut cb = vec![0usize; other.rank()];
        for (fa, &va) in self.mass.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            decode(fa, &self.axes, &mut ca);
            let base: usize = ca.iter().zip(&pos).map(|(&c, &p)| c * st[p]).sum();
            for (fb, &vb) in other.mass.iter().enumerate() {
                if vb == 0.0 {
                    continue;
                }
                decode(fb, &other.axes, &mut cb);
                let off: usize = cb.iter().zip(&pos_o).map(|(&c, &p)| c * st[p]).sum();
                out[base + off] += va * vb;
            }
        }
        Ok(JointDist::from_canonical(axes, out))
    }

    /// Extend the joint with the kernel's output axes:
    /// `P(joint, to) = P(joint) * k(to | from)` where `from` is a subset of
    /// this distribution's axes. Unreachable (all-zero) kernel rows are legal
    /// only where the joint puts no mass on them.
    pub fn compose(&self, k: &Kernel) -> Result<JointDist> {
        let from_idx: Vec<usize> =
            k.from.iter().map(|a| self.axis_index(&a.name)).collect::<Result<_>>()?;
        for (a, &i) in k.from.iter().zip(&from_idx) {
            if self.axes[i].size != a.size {
                return Err(ProbError::AxisMismatch(format!(
                    "axis `{}` has size {} here, {} in kernel",
                    a.name, self.axes[i].size, a.size
                )));
            }
        }
        for a in &k.to {
            if self.axes.iter().any(|b| b.name == a.name) {
                return Err(ProbError::DuplicateAxis(a.name.clone()));
            }
        }
        let mut axes: Vec<Alphabet> = self.axes.iter().chain(&k.to).cloned().collect();
        axes.sort_by(|a, b| a.name.cmp(&b.name));
        check_axes(&axes)?;
        let st = strides(&axes);
        let pos: Vec<usize> = self
            .axes
            .iter()
            .map(|a| axes.iter().position(|b| b.name == a.name).unwrap())
            .collect();
        let pos_to: Vec<usize> = k
            .to
            .iter()
            .map(|a| axes.iter().position(|b| b.name == a.name).unwrap())
            .collect();
        let from_st = strides(&k.from);
        let to_cells = cell_count(&k.to);
        let mut out = vec![0.0; cell_count(&axes)];
        let mut coords = vec![0usize; self.rank()];
        let mut tc = vec![0usize; k.to.len()];
        for (flat, &v) in self.mass.iter().enumerate() {
            decode(flat, &self.axes, &mut coords);
            let row: usize =
                from_idx.iter().zip(&from_st).map(|(&i, &s)| coords[i] * s).sum();
            let row_slice = &k.rows[row * to_cells..(row + 1) * to_cells];
            if k.is_unreachable(row) {
                if v > MASS_TOL {
                    return Err(ProbError::UnreachableRow { row, mass: v });
                }
                continue;
            }
            if v == 0.0 {
                continue;
            }
            let base: usize = coords.iter().zip(&pos).map(|(&c, &p)| c * st[p]).sum();
            for (tf, &w) in row_slice.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                decode(tf, &k.to, &mut tc);
                let off: usize = tc.iter().zip(&pos_to).map(|(&c, &p)| c * st[p]).sum();
                out[base + off] += v * w;
            }
        }
        Ok(JointDist::from_canonical(axes, out))
    }

    /// Re-run constructor validation, for values built by deserialization.
    pub fn revalidated(self) -> Result<Self> {
        JointDist::new(self.axes, self.mass)
    }

    /// Deterministic byte serialization, used for lexicographic tie-breaking.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("serializing a JointDist cannot fail")
    }
}

/// Conditional distribution `to | from`. Both axis lists are canonical
/// (sorted by name); `rows` is `from_cells x to_cells`, row-major. A row may
/// be all-zero, which marks the conditioning tuple as unreachable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    from: Vec<Alphabet>,
    to: Vec<Alphabet>,
    rows: Vec<f64>,
}

impl Kernel {
    /// Build from axes in any order; `rows` is row-major over the given
    /// `from` order, each row row-major over the given `to` order.
    pub fn new(from: Vec<Alphabet>, to: Vec<Alphabet>, rows: Vec<f64>) -> Result<Self> {
        check_axes(&from)?;
        check_axes(&to)?;
        for a in &from {
            if to.iter().any(|b| b.name == a.name) {
                return Err(ProbError::DuplicateAxis(a.name.clone()));
            }
        }
        let fc = cell_count(&from);
        let tc = cell_count(&to);
        if rows.len() != fc * tc {
            return Err(ProbError::Argument(format!(
                "kernel has {} entries, axes imply {}",
                rows.len(),
                fc * tc
            )));
        }
        for r in 0..fc {
            let row = &rows[r * tc..(r + 1) * tc];
            for (c, &v) in row.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Err(ProbError::NegativeMass { cell: r * tc + c, value: v });
                }
            }
            let total: f64 = row.iter().sum();
            // An all-zero row marks an unreachable conditioning tuple.
            if total != 0.0 && (total - 1.0).abs() > MASS_TOL {
                return Err(ProbError::NotNormalized { total });
            }
        }
        // Canonicalize the `to` order within each row, then the row order.
        let to_perm = sort_perm(&to);
        let from_perm = sort_perm(&from);
        let mut canon_rows = vec![0.0; rows.len()];
        let sorted_to: Vec<Alphabet> = to_perm.iter().map(|&p| to[p].clone()).collect();
        let sorted_from: Vec<Alphabet> = from_perm.iter().map(|&p| from[p].clone()).collect();
        let sf_st = strides(&sorted_from);
        let mut fcoords = vec![0usize; from.len()];
        for r in 0..fc {
            let row = permute_mass(&to, &rows[r * tc..(r + 1) * tc], &to_perm);
            decode(r, &from, &mut fcoords);
            let mut nr = 0;
            for (ni, &p) in from_perm.iter().enumerate() {
                nr += fcoords[p] * sf_st[ni];
            }
            canon_rows[nr * tc..(nr + 1) * tc].copy_from_slice(&row);
        }
        Ok(Kernel { from: sorted_from, to: sorted_to, rows: canon_rows })
    }

    /// Extract the conditional `to | given` from a joint distribution.
    /// Conditioning tuples with zero probability become unreachable rows.
    pub fn from_joint(j: &JointDist, given: &[&str], to: &[&str]) -> Result<Self> {
        let mut names: Vec<&str> = given.iter().chain(to.iter()).copied().collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ProbError::Argument("given/to overlap".into()));
        }
        let marg = j.marginal(&names)?;
        let pick = |names: &[&str]| -> Result<Vec<Alphabet>> {
            let mut v = Vec::with_capacity(names.len());
            for n in names {
                v.push(marg.axes[marg.axis_index(n)?].clone());
            }
            v.sort_by(|a, b| a.name.cmp(&b.name));
            Ok(v)
        };
        let from_axes = pick(given)?;
        let to_axes = pick(to)?;
        let fc = cell_count(&from_axes);
        let tc = cell_count(&to_axes);
        let f_st = strides(&from_axes);
        let t_st = strides(&to_axes);
        let f_pos: Vec<usize> =
            from_axes.iter().map(|a| marg.axis_index(&a.name).unwrap()).collect();
        let t_pos: Vec<usize> = to_axes.iter().map(|a| marg.axis_index(&a.name).unwrap()).collect();
        let mut rows = vec![0.0; fc * tc];
        let mut totals = vec![0.0; fc];
        let mut coords = vec![0usize; marg.rank()];
        for (flat, &v) in marg.mass.iter().enumerate() {
            decode(flat, &marg.axes, &mut coords);
            let r: usize = f_pos.iter().zip(&f_st).map(|(&i, &s)| coords[i] * s).sum();
            let c: usize = t_pos.iter().zip(&t_st).map(|(&i, &s)| coords[i] * s).sum();
            rows[r * tc + c] += v;
            totals[r] += v;
        }
        for r in 0..fc {
            if totals[r] <= 0.0 {
                for c in 0..tc {
                    rows[r * tc + c] = 0.0;
                }
            } else {
                for c in 0..tc {
                    rows[r * tc + c] /= totals[r];
                }
            }
        }
        Ok(Kernel { from: from_axes, to: to_axes, rows })
    }

    /// Deterministic kernel: `map` sends a conditioning tuple (coords in
    /// canonical from order) to an output tuple (coords in canonical to
    /// order).
    pub fn deterministic(
        from: Vec<Alphabet>,
        to: Vec<Alphabet>,
        map: impl Fn(&[usize]) -> Vec<usize>,
    ) -> Result<Self> {
        let mut sorted_from = from.clone();
        sorted_from.sort_by(|a, b| a.name.cmp(&b.name));
        let mut sorted_to = to.clone();
        sorted_to.sort_by(|a, b| a.name.cmp(&b.name));
        let fc = cell_count(&sorted_from);
        let tc = cell_count(&sorted_to);
        let t_st = strides(&sorted_to);
        let mut rows = vec![0.0; fc * tc];
        let mut coords = vec![0usize; sorted_from.len()];
        for r in 0..fc {
            decode(r, &sorted_from, &mut coords);
            let out = map(&coords);
            let c: usize = out.iter().zip(&t_st).map(|(&c, &s)| c * s).sum();
            rows[r * tc + c] = 1.0;
        }
        Kernel::new(sorted_from, sorted_to, rows)
    }

    pub fn from_axes(&self) -> &[Alphabet] {
        &self.from
    }

    pub fn to_axes(&self) -> &[Alphabet] {
        &self.to
    }

    pub fn from_cells(&self) -> usize {
        cell_count(&self.from)
    }

    pub fn to_cells(&self) -> usize {
        cell_count(&self.to)
    }

    /// Row for a conditioning tuple (coords in canonical from order).
    pub fn row(&self, coords: &[usize]) -> &[f64] {
        let st = strides(&self.from);
        let r: usize = coords.iter().zip(&st).map(|(&c, &s)| c * s).sum();
        self.row_flat(r)
    }

    pub fn row_flat(&self, r: usize) -> &[f64] {
        let tc = self.to_cells();
        &self.rows[r * tc..(r + 1) * tc]
    }

    /// A row is unreachable when it is all-zero; such rows carry no mass
    /// and arise from conditioning a joint on a zero-probability tuple.
    pub fn is_unreachable(&self, r: usize) -> bool {
        self.row_flat(r).iter().sum::<f64>() == 0.0
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    /// Re-run constructor validation, for kernels built by deserialization.
    pub fn revalidated(self) -> Result<Self> {
        Kernel::new(self.from, self.to, self.rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bit(name: &str) -> Alphabet {
        Alphabet::new(name, 2)
    }

    #[test]
    fn axes_are_canonicalized() {
        // P(X=0,S=1) = 0.3 given in (X,S) order must land on the same cell
        // as the (S,X)-order construction.
        let p1 = JointDist::new(vec![bit("X"), bit("S")], vec![0.1, 0.3, 0.2, 0.4]).unwrap();
        let p2 = JointDist::new(vec![bit("S"), bit("X")], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.prob(&[1, 0]), 0.3); // (S=1, X=0)
    }

    #[test]
    fn rejects_unnormalized() {
        let r = JointDist::new(vec![bit("S")], vec![0.5, 0.4]);
        assert!(matches!(r, Err(ProbError::NotNormalized { .. })));
    }

    #[test]
    fn marginal_of_uniform() {
        let p = JointDist::uniform(vec![bit("S"), bit("X")]).unwrap();
        let m = p.marginal(&["S"]).unwrap();
        assert_eq!(m.mass(), &[0.5, 0.5]);
    }

    #[test]
    fn condition_on_copy_kernel_output() {
        // P_S uniform composed with Y = S, then conditioned on Y = 0, is a
        // point mass on S = 0.
        let p = JointDist::uniform(vec![bit("S")]).unwrap();
        let copy = Kernel::deterministic(vec![bit("S")], vec![bit("Y")], |c| vec![c[0]]).unwrap();
        let joint = p.compose(&copy).unwrap();
        let cond = joint.condition(&[("Y", 0)]).unwrap();
        assert_eq!(cond.mass(), &[1.0, 0.0]);
    }

    #[test]
    fn conditioning_on_zero_event_fails() {
        let p = JointDist::point_mass(vec![bit("S"), bit("Y")], &[0, 0]).unwrap();
        assert!(matches!(p.condition(&[("Y", 1)]), Err(ProbError::ZeroEvent)));
    }

    #[test]
    fn unreachable_row_composes_as_zero() {
        let p = JointDist::point_mass(vec![bit("S")], &[0]).unwrap();
        // Row for S = 1 is unreachable; S = 1 has no mass, so compose works.
        let k = Kernel::new(vec![bit("S")], vec![bit("Y")], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let j = p.compose(&k).unwrap();
        assert_eq!(j.marginal(&["Y"]).unwrap().mass(), &[0.5, 0.5]);

        let q = JointDist::uniform(vec![bit("S")]).unwrap();
        assert!(matches!(q.compose(&k), Err(ProbError::UnreachableRow { row: 1, .. })));
    }

    #[test]
    fn kernel_from_joint_round_trip() {
        let p = JointDist::new(vec![bit("S"), bit("X")], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let k = Kernel::from_joint(&p, &["S"], &["X"]).unwrap();
        let rebuilt = p.marginal(&["S"]).unwrap().compose(&k).unwrap();
        for (a, b) in rebuilt.mass().iter().zip(p.mass()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn product_chain_of_uniform_factors_is_flat() {
        // Six binary axes, all factors uniform: every cell is 1/64.
        let mut j = JointDist::uniform(vec![bit("S")]).unwrap();
        for name in ["V", "W1", "W2", "X", "Y"] {
            j = j.product(&JointDist::uniform(vec![bit(name)]).unwrap()).unwrap();
        }
        assert_eq!(j.rank(), 6);
        assert!(j.mass().iter().all(|&v| (v - 1.0 / 64.0).abs() < 1e-15));
    }
}
