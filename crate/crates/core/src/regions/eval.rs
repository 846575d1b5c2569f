//! Fused evaluation of a variant's constraint values from free factor rows.
//!
//! The optimizer and the grid oracle evaluate millions of candidate factor
//! tuples; going through full tensor composition each time would dominate
//! runtime. This evaluator precomputes, per joint cell, the table index of
//! every chain factor, so one evaluation is a handful of multiplications
//! per cell followed by marginal-entropy accumulation.

use crate::model::{AuxFactors, ProblemSpec, Variant};
use crate::probcore::{Alphabet, JointDist, Kernel};

/// Constraint values of one candidate point of the class.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Metrics {
    pub e_lower: f64,
    pub e_upper: f64,
    pub sum_cap: f64,
    pub r_cap: f64,
    /// l1 distance of the coordination marginal to the target.
    pub gap: f64,
    /// Squared-error version of the same gap: smooth, so the optimizer's
    /// finite-difference gradients behave at the l1 kinks.
    pub gap_sq: f64,
}

enum TableRef {
    Fixed(usize),
    Param { offset: usize },
}

struct FactorPlan {
    table: TableRef,
    /// Precomputed table index per joint cell.
    cell_index: Vec<u32>,
}

struct MarginalPlan {
    groups: Vec<u32>,
    count: usize,
}

pub(crate) struct Evaluator {
    variant: Variant,
    axes: Vec<Alphabet>,
    cells: usize,
    fixed: Vec<Vec<f64>>,
    factors: Vec<FactorPlan>,
    entropy_sets: Vec<MarginalPlan>,
    target: MarginalPlan,
    target_mass: Vec<f64>,
    joint: Vec<f64>,
    scratch: Vec<f64>,
    pub row_sizes: Vec<usize>,
    pub param_len: usize,
    w1: usize,
    w2: usize,
    with_v: bool,
}

impl Clone for Evaluator {
    fn clone(&self) -> Self {
        Evaluator {
            variant: self.variant,
            axes: self.axes.clone(),
            cells: self.cells,
            fixed: self.fixed.clone(),
            factors: self
                .factors
                .iter()
                .map(|f| FactorPlan {
                    table: match f.table {
                        TableRef::Fixed(i) => TableRef::Fixed(i),
                        TableRef::Param { offset } => TableRef::Param { offset },
                    },
                    cell_index: f.cell_index.clone(),
                })
                .collect(),
            entropy_sets: self
                .entropy_sets
                .iter()
                .map(|m| MarginalPlan { groups: m.groups.clone(), count: m.count })
                .collect(),
            target: MarginalPlan { groups: self.target.groups.clone(), count: self.target.count },
            target_mass: self.target_mass.clone(),
            joint: self.joint.clone(),
            scratch: self.scratch.clone(),
            row_sizes: self.row_sizes.clone(),
            param_len: self.param_len,
            w1: self.w1,
            w2: self.w2,
            with_v: self.with_v,
        }
    }
}

fn axis_sizes(names: &[&str], spec: &ProblemSpec, w1: usize, w2: usize) -> Vec<Alphabet> {
    names
        .iter()
        .map(|n| match *n {
            "W1" => Alphabet::new("W1", w1),
            "W2" => Alphabet::new("W2", w2),
            other => Alphabet::new(other, spec.size(other)),
        })
        .collect()
}

/// Axis names of the full joint per variant (caller appends V when modeled).
fn joint_axis_names(variant: Variant, with_v: bool) -> Vec<&'static str> {
    let mut names: Vec<&'static str> = match variant {
        Variant::Causal => vec!["S", "W1", "W2", "X", "Y"],
        Variant::NoAction => vec!["S", "W1", "X", "Y"],
        Variant::TwoSided => vec!["S", "U", "W1", "W2", "X", "Y", "Z"],
        Variant::Feedback => vec!["S", "W1", "W2", "X", "Y1", "Y2"],
        Variant::StrictlyCausal => vec!["S", "W2", "X", "Y"],
        Variant::Corollary => vec!["S", "X", "Y"],
    };
    if with_v {
        names.push("V");
        names.sort_unstable();
    }
    names
}

/// Free kernels per variant: (conditioning axes, output axis). The row
/// layout of each free kernel is row-major over the sorted conditioning
/// axes with the output axis fastest, matching `Kernel`'s storage.
pub(crate) fn free_factor_shapes(
    variant: Variant,
    with_v: bool,
) -> Vec<(Vec<&'static str>, &'static str)> {
    let mut shapes: Vec<(Vec<&'static str>, &'static str)> = match variant {
        Variant::Causal => vec![
            (vec![], "W1"),
            (vec!["S", "W1"], "W2"),
            (vec!["S", "W1"], "X"),
        ],
        Variant::NoAction => vec![(vec![], "W1"), (vec!["S", "W1"], "X")],
        Variant::TwoSided => vec![
            (vec![], "W1"),
            (vec!["S", "U", "W1"], "W2"),
            (vec!["S", "U", "W1"], "X"),
        ],
        Variant::Feedback => vec![
            (vec![], "W1"),
            (vec!["S", "W1"], "X"),
            (vec!["S", "W1", "Y2"], "W2"),
        ],
        Variant::StrictlyCausal => vec![(vec![], "X"), (vec!["S", "X"], "W2")],
        Variant::Corollary => vec![(vec![], "X")],
    };
    if with_v {
        match variant {
            Variant::Causal => shapes.push((vec!["W1", "W2", "Y"], "V")),
            Variant::TwoSided => shapes.push((vec!["W1", "W2", "Y", "Z"], "V")),
            Variant::Feedback => shapes.push((vec!["W1", "W2", "Y1"], "V")),
            Variant::StrictlyCausal => shapes.push((vec!["W2", "X", "Y"], "V")),
            Variant::NoAction | Variant::Corollary => {}
        }
    }
    shapes
}

fn decode_cell(mut flat: usize, axes: &[Alphabet], out: &mut [usize]) {
    for i in (0..axes.len()).rev() {
        out[i] = flat % axes[i].size;
        flat /= axes[i].size;
    }
}

impl Evaluator {
    pub fn new(variant: Variant, spec: &ProblemSpec, w1: usize, w2: usize, with_v: bool) -> Self {
        let with_v = with_v
            && spec.target_v.is_some()
            && !matches!(variant, Variant::NoAction | Variant::Corollary);
        let names = joint_axis_names(variant, with_v);
        let axes = axis_sizes(&names, spec, w1, w2);
        let cells: usize = axes.iter().map(|a| a.size).product();
        let pos = |n: &str| axes.iter().position(|a| a.name == n).unwrap();
        let size_of = |n: &str| axes[pos(n)].size;

        // Precompute coordinates per cell.
        let rank = axes.len();
        let mut coords_table = vec![0usize; cells * rank];
        for c in 0..cells {
            let mut tmp = vec![0usize; rank];
            decode_cell(c, &axes, &mut tmp);
            coords_table[c * rank..(c + 1) * rank].copy_from_slice(&tmp);
        }
        let coords = |cell: usize| &coords_table[cell * rank..(cell + 1) * rank];

        // Table index of a factor over (sorted conditioning axes, output):
        // row-major over conditioning coords, output fastest.
        let table_index = |cond: &[&str], out: &str, cell: usize| -> u32 {
            let cs = coords(cell);
            let mut idx = 0usize;
            for n in cond {
                idx = idx * size_of(n) + cs[pos(n)];
            }
            (idx * size_of(out) + cs[pos(out)]) as u32
        };

        let mut fixed: Vec<Vec<f64>> = Vec::new();
        let mut factors: Vec<FactorPlan> = Vec::new();

        // Source factor.
        {
            let src_axes: Vec<&str> =
                spec.source.axes().iter().map(|a| a.name.as_str()).collect();
            let mut cell_index = vec![0u32; cells];
            for (c, ci) in cell_index.iter_mut().enumerate() {
                let cs = coords(c);
                let mut idx = 0usize;
                for n in &src_axes {
                    idx = idx * size_of(n) + cs[pos(n)];
                }
                *ci = idx as u32;
            }
            fixed.push(spec.source.mass().to_vec());
            factors.push(FactorPlan { table: TableRef::Fixed(0), cell_index });
        }

        // Channel factor: rows over sorted (S, X), outputs fastest.
        {
            let out_names: Vec<&str> =
                spec.channel.to_axes().iter().map(|a| a.name.as_str()).collect();
            let mut cell_index = vec![0u32; cells];
            for (c, ci) in cell_index.iter_mut().enumerate() {
                let cs = coords(c);
                let mut idx = cs[pos("S")];
                idx = idx * size_of("X") + cs[pos("X")];
                for n in &out_names {
                    idx = idx * size_of(n) + cs[pos(n)];
                }
                *ci = idx as u32;
            }
            fixed.push(spec.channel.rows().to_vec());
            factors.push(FactorPlan { table: TableRef::Fixed(1), cell_index });
        }

        // Free factors.
        let shapes = free_factor_shapes(variant, with_v);
        let mut row_sizes = Vec::new();
        let mut offset = 0usize;
        for (cond, out) in &shapes {
            let rows: usize = cond.iter().map(|n| size_of(n)).product();
            let out_size = size_of(out);
            for _ in 0..rows {
                row_sizes.push(out_size);
            }
            let mut cell_index = vec![0u32; cells];
            for (c, ci) in cell_index.iter_mut().enumerate() {
                *ci = table_index(cond, out, c);
            }
            factors.push(FactorPlan { table: TableRef::Param { offset }, cell_index });
            offset += rows * out_size;
        }
        let param_len = offset;

        // Marginal entropy sets per variant.
        let set_names: Vec<Vec<&str>> = match variant {
            Variant::Causal => vec![
                vec!["S"],
                vec!["W1", "W2", "Y"],
                vec!["S", "W1", "W2", "Y"],
                vec!["S", "W1"],
                vec!["Y"],
                vec!["S", "W1", "Y"],
                vec!["W1"],
                vec!["S", "W1", "W2"],
            ],
            Variant::NoAction => vec![
                vec!["S"],
                vec!["W1", "Y"],
                vec!["S", "W1", "Y"],
                vec!["S", "W1"],
                vec!["Y"],
                vec!["W1"],
            ],
            Variant::TwoSided => vec![
                vec!["S", "U"],
                vec!["W1", "W2", "Y", "Z"],
                vec!["S", "U", "W1", "W2", "Y", "Z"],
                vec!["S", "U", "W1"],
                vec!["Y", "Z"],
                vec!["S", "U", "W1", "Y", "Z"],
                vec!["W1"],
                vec!["S", "U", "W1", "W2"],
            ],
            Variant::Feedback => vec![
                vec!["S"],
                vec!["W1", "W2", "Y1"],
                vec!["S", "W1", "W2", "Y1"],
                vec!["S", "W1"],
                vec!["Y1"],
                vec!["S", "W1", "Y1"],
                vec!["W1"],
                vec!["S", "W1", "Y2"],
                vec!["S", "W1", "W2", "Y2"],
            ],
            Variant::StrictlyCausal => vec![
                vec!["S"],
                vec!["W2", "X", "Y"],
                vec!["S", "W2", "X", "Y"],
                vec!["S", "X"],
                vec!["Y"],
                vec!["S", "X", "Y"],
                vec!["X"],
                vec!["S", "W2", "X"],
            ],
            Variant::Corollary => vec![
                vec!["S"],
                vec!["S", "X"],
                vec!["X", "Y"],
                vec!["X"],
                vec!["S", "X", "Y"],
                vec!["Y"],
            ],
        };

        let marginal_plan = |keep: &[&str]| -> MarginalPlan {
            let mut keep_sorted = keep.to_vec();
            keep_sorted.sort_unstable();
            let count: usize = keep_sorted.iter().map(|n| size_of(n)).product();
            let mut groups = vec![0u32; cells];
            for (c, g) in groups.iter_mut().enumerate() {
                let cs = coords(c);
                let mut idx = 0usize;
                for n in &keep_sorted {
                    idx = idx * size_of(n) + cs[pos(n)];
                }
                *g = idx as u32;
            }
            MarginalPlan { groups, count }
        };

        let entropy_sets: Vec<MarginalPlan> =
            set_names.iter().map(|s| marginal_plan(s)).collect();

        // Coordination target for the marginal gap.
        let target_names = spec.target_axes(with_v);
        let target = marginal_plan(&target_names);
        let target_mass = spec
            .target_joint(with_v)
            .expect("target joint must compose")
            .mass()
            .to_vec();
        assert_eq!(target_mass.len(), target.count);

        let max_groups = entropy_sets
            .iter()
            .map(|m| m.count)
            .chain(std::iter::once(target.count))
            .max()
            .unwrap();

        Evaluator {
            variant,
            axes,
            cells,
            fixed,
            factors,
            entropy_sets,
            target,
            target_mass,
            joint: vec![0.0; cells],
            scratch: vec![0.0; max_groups],
            row_sizes,
            param_len,
            w1,
            w2,
            with_v,
        }
    }

    pub fn with_v(&self) -> bool {
        self.with_v
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Size of a joint axis by name, auxiliary or visible.
    pub fn axis_size(&self, name: &str) -> usize {
        match name {
            "W1" => self.w1,
            "W2" => self.w2,
            other => self
                .axes
                .iter()
                .find(|a| a.name == other)
                .map(|a| a.size)
                .unwrap_or(1),
        }
    }

    fn fill_joint(&mut self, params: &[f64]) {
        debug_assert_eq!(params.len(), self.param_len);
        self.joint.iter_mut().for_each(|v| *v = 1.0);
        for f in &self.factors {
            let table: &[f64] = match f.table {
                TableRef::Fixed(i) => &self.fixed[i],
                TableRef::Param { offset } => &params[offset..],
            };
            for (c, &ti) in f.cell_index.iter().enumerate() {
                self.joint[c] *= table[ti as usize];
            }
        }
    }

    fn entropy_of(&mut self, set: usize) -> f64 {
        let plan = &self.entropy_sets[set];
        for (c, &g) in plan.groups.iter().enumerate() {
            self.scratch[g as usize] += self.joint[c];
        }
        let mut h = 0.0;
        for v in &mut self.scratch[..plan.count] {
            if *v > 0.0 {
                h -= *v * v.log2();
            }
            *v = 0.0;
        }
        h.max(0.0)
    }

    fn gap_of(&mut self) -> (f64, f64) {
        for (c, &g) in self.target.groups.iter().enumerate() {
            self.scratch[g as usize] += self.joint[c];
        }
        let mut tv = 0.0;
        let mut sq = 0.0;
        for (v, t) in self.scratch[..self.target.count].iter_mut().zip(&self.target_mass) {
            let d = *v - t;
            tv += d.abs();
            sq += d * d;
            *v = 0.0;
        }
        (tv, sq)
    }

    /// Evaluate constraint values and the marginal gap for one parameter
    /// vector (concatenated normalized kernel rows).
    pub fn metrics(&mut self, params: &[f64]) -> Metrics {
        self.fill_joint(params);
        let h: Vec<f64> = (0..self.entropy_sets.len()).map(|i| self.entropy_of(i)).collect();
        let (gap, gap_sq) = self.gap_of();
        match self.variant {
            // Sets: S, W1W2Y, SW1W2Y, SW1, Y, SW1Y, W1, SW1W2
            Variant::Causal => Metrics {
                e_lower: (h[0] + h[1] - h[2]).max(0.0),
                e_upper: h[0],
                sum_cap: (h[3] + h[4] - h[5]).max(0.0),
                r_cap: h[4] - h[1] - h[3] + h[6] + h[7],
                gap,
                gap_sq,
            },
            // Sets: S, W1Y, SW1Y, SW1, Y, W1
            Variant::NoAction => Metrics {
                e_lower: (h[0] + h[1] - h[2]).max(0.0),
                e_upper: h[0],
                sum_cap: (h[3] + h[4] - h[2]).max(0.0),
                r_cap: (h[5] + h[4] - h[1]).max(0.0),
                gap,
                gap_sq,
            },
            // Sets: SU, W1W2YZ, SUW1W2YZ, SUW1, YZ, SUW1YZ, W1, SUW1W2
            Variant::TwoSided => Metrics {
                e_lower: (h[0] + h[1] - h[2]).max(0.0),
                e_upper: h[0],
                sum_cap: (h[3] + h[4] - h[5]).max(0.0),
                r_cap: h[4] - h[1] - h[3] + h[6] + h[7],
                gap,
                gap_sq,
            },
            // Sets: S, W1W2Y1, SW1W2Y1, SW1, Y1, SW1Y1, W1, SW1Y2, SW1W2Y2
            Variant::Feedback => Metrics {
                e_lower: (h[0] + h[1] - h[2]).max(0.0),
                e_upper: h[0],
                sum_cap: (h[3] + h[4] - h[5]).max(0.0),
                r_cap: h[4] - h[1] - h[7] + h[6] + h[8],
                gap,
                gap_sq,
            },
            // Sets: S, W2XY, SW2XY, SX, Y, SXY, X, SW2X
            Variant::StrictlyCausal => Metrics {
                e_lower: (h[0] + h[1] - h[2]).max(0.0),
                e_upper: h[0],
                sum_cap: (h[3] + h[4] - h[5]).max(0.0),
                r_cap: h[4] - h[1] - h[3] + h[6] + h[7],
                gap,
                gap_sq,
            },
            // Sets: S, SX, XY, X, SXY, Y
            Variant::Corollary => Metrics {
                e_lower: (h[1] + h[2] - h[3] - h[4]).max(0.0),
                e_upper: h[0],
                sum_cap: (h[1] + h[5] - h[4]).max(0.0),
                r_cap: (h[3] + h[5] - h[2]).max(0.0),
                gap,
                gap_sq,
            },
        }
    }

    /// Convert a parameter vector into the factor tuple it represents.
    pub fn factors(&self, spec: &ProblemSpec, params: &[f64]) -> AuxFactors {
        let shapes = free_factor_shapes(self.variant, self.with_v);
        let size_of = |n: &str| match n {
            "W1" => self.w1,
            "W2" => self.w2,
            other => spec.size(other),
        };
        let mut offset = 0usize;
        let mut dists: Vec<JointDist> = Vec::new();
        let mut kernels: Vec<Kernel> = Vec::new();
        for (cond, out) in &shapes {
            let rows: usize = cond.iter().map(|n| size_of(n)).product();
            let out_size = size_of(out);
            let slice = &params[offset..offset + rows * out_size];
            offset += rows * out_size;
            if cond.is_empty() {
                dists.push(
                    JointDist::new(vec![Alphabet::new(*out, out_size)], slice.to_vec())
                        .expect("normalized row"),
                );
            } else {
                let from: Vec<Alphabet> =
                    cond.iter().map(|n| Alphabet::new(*n, size_of(n))).collect();
                kernels.push(
                    Kernel::new(from, vec![Alphabet::new(*out, out_size)], slice.to_vec())
                        .expect("normalized rows"),
                );
            }
        }
        let mut k = kernels.into_iter();
        let mut d = dists.into_iter();
        match self.variant {
            Variant::Causal => AuxFactors::Causal {
                w1: d.next().unwrap(),
                w2: k.next().unwrap(),
                x: k.next().unwrap(),
                v: if self.with_v { k.next() } else { None },
            },
            Variant::NoAction => {
                AuxFactors::NoAction { w1: d.next().unwrap(), x: k.next().unwrap() }
            }
            Variant::TwoSided => AuxFactors::TwoSided {
                w1: d.next().unwrap(),
                w2: k.next().unwrap(),
                x: k.next().unwrap(),
                v: if self.with_v { k.next() } else { None },
            },
            Variant::Feedback => AuxFactors::Feedback {
                w1: d.next().unwrap(),
                x: k.next().unwrap(),
                w2: k.next().unwrap(),
                v: if self.with_v { k.next() } else { None },
            },
            Variant::StrictlyCausal => AuxFactors::StrictlyCausal {
                x: d.next().unwrap(),
                w2: k.next().unwrap(),
                v: if self.with_v { k.next() } else { None },
            },
            Variant::Corollary => AuxFactors::Corollary { x: d.next().unwrap() },
        }
    }
}
