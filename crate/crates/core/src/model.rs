//! Problem definitions and the auxiliary-variable factorizations used by
//! each coding scenario.
//!
//! A [`ProblemSpec`] holds the fixed data of an instance: state source,
//! channel, coordination targets, optional distortion table, and cardinality
//! caps for the auxiliary alphabets. An [`AuxJoint`] is one candidate point
//! of a variant's distribution class: the free kernels plus the fully
//! composed joint, with the variant's conditional-independence structure
//! guaranteed by construction.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probcore::{
    mutual_information, total_variation, Alphabet, JointDist, Kernel, ProbError,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{pointer}: {message}")]
    Validation { pointer: String, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// The coding scenarios the region machinery distinguishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Causal,
    NoAction,
    TwoSided,
    Feedback,
    StrictlyCausal,
    /// Strictly causal encoding without receiver outputs; the only free
    /// factor is the input distribution.
    Corollary,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Causal => "causal",
            Variant::NoAction => "no-action",
            Variant::TwoSided => "two-sided",
            Variant::Feedback => "feedback",
            Variant::StrictlyCausal => "strictly-causal",
            Variant::Corollary => "corollary",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "causal" => Variant::Causal,
            "no-action" => Variant::NoAction,
            "two-sided" => Variant::TwoSided,
            "feedback" => Variant::Feedback,
            "strictly-causal" => Variant::StrictlyCausal,
            "corollary" => Variant::Corollary,
            other => return Err(format!("unknown variant `{other}`")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxCaps {
    pub w1: usize,
    pub w2: usize,
}

/// A fully validated problem instance.
///
/// The axis layout depends on which alphabets are declared: `U` and `Z`
/// select the two-sided layout (source over `(S,U,Z)`, input chosen from
/// `(S,U)`), `Y1`/`Y2` select the feedback layout (channel into `(Y1,Y2)`),
/// and the plain layout uses `S`, `X`, `Y` and optionally `V`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub alphabets: BTreeMap<String, usize>,
    /// `P_S`, or `P_{USZ}` when two-sided alphabets are declared.
    pub source: JointDist,
    /// `(S,X) -> Y`, or `(S,X) -> (Y1,Y2)` in the feedback layout.
    pub channel: Kernel,
    /// Target input behavior: `S -> X` (or `(S,U) -> X`).
    pub target_x: Kernel,
    /// Target receiver action: `(S,X,Y) -> V` (layout-appropriate inputs).
    pub target_v: Option<Kernel>,
    /// `d[s][v] >= 0`; required by the game operations.
    pub distortion: Option<Vec<Vec<f64>>>,
    pub aux_caps: AuxCaps,
}

/// On-disk problem document. All arrays are row-major over canonical
/// (name-sorted) axis order; kernel rows are indexed by conditioning tuple.
#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    alphabets: BTreeMap<String, usize>,
    source: Vec<f64>,
    channel: Vec<Vec<f64>>,
    target_x: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_v: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distortion: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aux_caps: Option<AuxCaps>,
}

fn validation(pointer: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Validation { pointer: pointer.into(), message: message.into() }
}

impl ProblemSpec {
    pub fn is_two_sided(&self) -> bool {
        self.alphabets.contains_key("U")
    }

    pub fn is_feedback(&self) -> bool {
        self.alphabets.contains_key("Y1")
    }

    pub fn size(&self, name: &str) -> usize {
        self.alphabets.get(name).copied().unwrap_or(1)
    }

    /// Names of the state block: `S`, or `(S,U)` two-sided.
    pub fn state_axes(&self) -> Vec<&'static str> {
        if self.is_two_sided() {
            vec!["S", "U"]
        } else {
            vec!["S"]
        }
    }

    /// Names of the decoder observation block: `Y`, `(Y,Z)`, or `Y1`.
    pub fn observation_axes(&self) -> Vec<&'static str> {
        if self.is_two_sided() {
            vec!["Y", "Z"]
        } else if self.is_feedback() {
            vec!["Y1"]
        } else {
            vec!["Y"]
        }
    }

    /// The axes of the coordination target (without auxiliaries).
    pub fn target_axes(&self, with_v: bool) -> Vec<&'static str> {
        let mut axes: Vec<&'static str> = if self.is_two_sided() {
            vec!["S", "U", "Z", "X", "Y"]
        } else if self.is_feedback() {
            vec!["S", "X", "Y1", "Y2"]
        } else {
            vec!["S", "X", "Y"]
        };
        if with_v {
            axes.push("V");
        }
        axes.sort_unstable();
        axes
    }

    /// The target joint `source * target_x * channel [* target_v]`.
    pub fn target_joint(&self, with_v: bool) -> Result<JointDist> {
        let mut j = self.source.compose(&self.target_x)?.compose(&self.channel)?;
        if with_v {
            let tv = self
                .target_v
                .as_ref()
                .ok_or_else(|| ModelError::Shape("target_v required but absent".into()))?;
            j = j.compose(tv)?;
        }
        Ok(j)
    }

    pub fn max_distortion(&self) -> Option<f64> {
        self.distortion.as_ref().map(|d| d.iter().flatten().copied().fold(0.0f64, f64::max))
    }

    /// Parse and fully validate a problem document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let doc = self.to_doc();
        serde_json::to_string_pretty(&doc).expect("problem docs always serialize")
    }

    fn to_doc(&self) -> ProblemDoc {
        let chunk = |k: &Kernel| -> Vec<Vec<f64>> {
            (0..k.from_cells()).map(|r| k.row_flat(r).to_vec()).collect()
        };
        ProblemDoc {
            alphabets: self.alphabets.clone(),
            source: self.source.mass().to_vec(),
            channel: chunk(&self.channel),
            target_x: chunk(&self.target_x),
            target_v: self.target_v.as_ref().map(chunk),
            distortion: self.distortion.clone(),
            aux_caps: Some(self.aux_caps),
        }
    }

    fn from_doc(doc: ProblemDoc) -> Result<Self> {
        for (name, &size) in &doc.alphabets {
            if size == 0 {
                return Err(validation(format!("/alphabets/{name}"), "size must be at least 1"));
            }
        }
        let need = |n: &str| -> Result<usize> {
            doc.alphabets
                .get(n)
                .copied()
                .ok_or_else(|| validation("/alphabets", format!("alphabet `{n}` is required")))
        };
        need("S")?;
        need("X")?;
        let two_sided = doc.alphabets.contains_key("U") || doc.alphabets.contains_key("Z");
        let feedback = doc.alphabets.contains_key("Y1") || doc.alphabets.contains_key("Y2");
        if two_sided && feedback {
            return Err(validation("/alphabets", "U/Z and Y1/Y2 layouts cannot be combined"));
        }
        if two_sided {
            need("U")?;
            need("Z")?;
            need("Y")?;
        } else if feedback {
            need("Y1")?;
            need("Y2")?;
        } else {
            need("Y")?;
        }
        let get = |n: &str| Alphabet::new(n, doc.alphabets[n]);

        let source_axes: Vec<Alphabet> = if two_sided {
            vec![get("S"), get("U"), get("Z")]
        } else {
            vec![get("S")]
        };
        let source = JointDist::new(source_axes, doc.source.clone())
            .map_err(|e| validation("/source", e.to_string()))?;

        let out_axes: Vec<Alphabet> =
            if feedback { vec![get("Y1"), get("Y2")] } else { vec![get("Y")] };
        let channel =
            kernel_from_rows(vec![get("S"), get("X")], out_axes, &doc.channel, "/channel")?;

        let x_from: Vec<Alphabet> =
            if two_sided { vec![get("S"), get("U")] } else { vec![get("S")] };
        let target_x = kernel_from_rows(x_from, vec![get("X")], &doc.target_x, "/target_x")?;

        let target_v = match &doc.target_v {
            None => None,
            Some(rows) => {
                let v = doc
                    .alphabets
                    .get("V")
                    .copied()
                    .ok_or_else(|| validation("/alphabets", "target_v requires alphabet `V`"))?;
                let v_from: Vec<Alphabet> = if two_sided {
                    vec![get("S"), get("U"), get("Z"), get("X"), get("Y")]
                } else if feedback {
                    vec![get("S"), get("X"), get("Y1"), get("Y2")]
                } else {
                    vec![get("S"), get("X"), get("Y")]
                };
                Some(kernel_from_rows(v_from, vec![Alphabet::new("V", v)], rows, "/target_v")?)
            }
        };

        let distortion = match &doc.distortion {
            None => None,
            Some(d) => {
                let v = doc
                    .alphabets
                    .get("V")
                    .copied()
                    .ok_or_else(|| validation("/alphabets", "distortion requires alphabet `V`"))?;
                let s = doc.alphabets["S"];
                if d.len() != s {
                    return Err(validation("/distortion", format!("expected {s} rows")));
                }
                for (i, row) in d.iter().enumerate() {
                    if row.len() != v {
                        return Err(validation(
                            format!("/distortion/{i}"),
                            format!("expected {v} entries"),
                        ));
                    }
                    if let Some(j) = row.iter().position(|x| *x < 0.0 || !x.is_finite()) {
                        return Err(validation(
                            format!("/distortion/{i}/{j}"),
                            "entries must be finite and nonnegative",
                        ));
                    }
                }
                Some(d.clone())
            }
        };

        // Default cardinality cap: one more than the product of the visible
        // alphabets, enough to realize any point of the region.
        let default_cap = doc.alphabets.values().product::<usize>() + 1;
        let aux_caps = doc.aux_caps.unwrap_or(AuxCaps { w1: default_cap, w2: default_cap });
        if aux_caps.w1 == 0 || aux_caps.w2 == 0 {
            return Err(validation("/aux_caps", "caps must be at least 1"));
        }

        Ok(ProblemSpec {
            alphabets: doc.alphabets,
            source,
            channel,
            target_x,
            target_v,
            distortion,
            aux_caps,
        })
    }
}

fn kernel_from_rows(
    from: Vec<Alphabet>,
    to: Vec<Alphabet>,
    rows: &[Vec<f64>],
    pointer: &str,
) -> Result<Kernel> {
    let mut sorted_from = from;
    sorted_from.sort_by(|a, b| a.name.cmp(&b.name));
    let fc: usize = sorted_from.iter().map(|a| a.size).product();
    let tc: usize = to.iter().map(|a| a.size).product();
    if rows.len() != fc {
        return Err(validation(pointer, format!("expected {fc} rows, found {}", rows.len())));
    }
    let mut flat = Vec::with_capacity(fc * tc);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != tc {
            return Err(validation(
                format!("{pointer}/{r}"),
                format!("expected {tc} entries, found {}", row.len()),
            ));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > crate::probcore::MASS_TOL {
            return Err(validation(format!("{pointer}/{r}"), format!("row sums to {total}, not 1")));
        }
        flat.extend_from_slice(row);
    }
    Kernel::new(sorted_from, to, flat).map_err(|e| validation(pointer, e.to_string()))
}

/// Free factors of one variant's factorization class. Degenerate auxiliary
/// sizes (|W| = 1) are always legal and encode an absent auxiliary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum AuxFactors {
    Causal {
        /// `Q_{W1}`, independent of the state by construction.
        w1: JointDist,
        /// `Q_{W2|S,W1}`.
        w2: Kernel,
        /// `Q_{X|S,W1}`.
        x: Kernel,
        /// `Q_{V|Y,W1,W2}`; omit when the instance carries no action.
        v: Option<Kernel>,
    },
    NoAction {
        w1: JointDist,
        /// `Q_{X|S,W1}`.
        x: Kernel,
    },
    TwoSided {
        w1: JointDist,
        /// `Q_{W2|U,S,W1}`.
        w2: Kernel,
        /// `Q_{X|U,S,W1}`.
        x: Kernel,
        /// `Q_{V|Y,Z,W1,W2}`.
        v: Option<Kernel>,
    },
    Feedback {
        w1: JointDist,
        /// `Q_{X|S,W1}`.
        x: Kernel,
        /// `Q_{W2|S,W1,Y2}`: the feedback symbol may shape the state
        /// description.
        w2: Kernel,
        /// `Q_{V|Y1,W1,W2}`.
        v: Option<Kernel>,
    },
    StrictlyCausal {
        /// `Q_X`, independent of the state.
        x: JointDist,
        /// `Q_{W2|S,X}`.
        w2: Kernel,
        /// `Q_{V|X,Y,W2}`.
        v: Option<Kernel>,
    },
    Corollary {
        x: JointDist,
    },
}

impl AuxFactors {
    /// Re-run constructor validation on every factor, for values built by
    /// deserialization.
    pub fn revalidated(self) -> Result<Self> {
        let dist = |d: JointDist| d.revalidated().map_err(ModelError::from);
        let ker = |k: Kernel| k.revalidated().map_err(ModelError::from);
        let opt = |v: Option<Kernel>| v.map(ker).transpose();
        Ok(match self {
            AuxFactors::Causal { w1, w2, x, v } => AuxFactors::Causal {
                w1: dist(w1)?,
                w2: ker(w2)?,
                x: ker(x)?,
                v: opt(v)?,
            },
            AuxFactors::NoAction { w1, x } => {
                AuxFactors::NoAction { w1: dist(w1)?, x: ker(x)? }
            }
            AuxFactors::TwoSided { w1, w2, x, v } => AuxFactors::TwoSided {
                w1: dist(w1)?,
                w2: ker(w2)?,
                x: ker(x)?,
                v: opt(v)?,
            },
            AuxFactors::Feedback { w1, x, w2, v } => AuxFactors::Feedback {
                w1: dist(w1)?,
                x: ker(x)?,
                w2: ker(w2)?,
                v: opt(v)?,
            },
            AuxFactors::StrictlyCausal { x, w2, v } => AuxFactors::StrictlyCausal {
                x: dist(x)?,
                w2: ker(w2)?,
                v: opt(v)?,
            },
            AuxFactors::Corollary { x } => AuxFactors::Corollary { x: dist(x)? },
        })
    }

    pub fn variant(&self) -> Variant {
        match self {
            AuxFactors::Causal { .. } => Variant::Causal,
            AuxFactors::NoAction { .. } => Variant::NoAction,
            AuxFactors::TwoSided { .. } => Variant::TwoSided,
            AuxFactors::Feedback { .. } => Variant::Feedback,
            AuxFactors::StrictlyCausal { .. } => Variant::StrictlyCausal,
            AuxFactors::Corollary { .. } => Variant::Corollary,
        }
    }
}

/// One point of a variant's distribution class: free factors plus the
/// composed joint.
#[derive(Clone, Debug)]
pub struct AuxJoint {
    pub variant: Variant,
    pub factors: AuxFactors,
    pub joint: JointDist,
}

impl AuxJoint {
    pub fn w1_size(&self) -> usize {
        self.joint.axis_index("W1").map(|i| self.joint.axes()[i].size).unwrap_or(1)
    }

    pub fn w2_size(&self) -> usize {
        self.joint.axis_index("W2").map(|i| self.joint.axes()[i].size).unwrap_or(1)
    }

    pub fn has_v(&self) -> bool {
        self.joint.axis_index("V").is_ok()
    }

    /// Deterministic serialization, used for tie-breaking between equally
    /// good witnesses.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.joint.canonical_bytes()
    }
}

fn expect_axes(k: &Kernel, from: &[&str], to: &str, what: &str) -> Result<()> {
    let mut want: Vec<&str> = from.to_vec();
    want.sort_unstable();
    let have: Vec<&str> = k.from_axes().iter().map(|a| a.name.as_str()).collect();
    if have != want {
        return Err(ModelError::Shape(format!(
            "{what}: conditioning axes are {have:?}, expected {want:?}"
        )));
    }
    if k.to_axes().len() != 1 || k.to_axes()[0].name != to {
        return Err(ModelError::Shape(format!("{what}: output axis must be `{to}`")));
    }
    Ok(())
}

fn expect_single_axis(d: &JointDist, name: &str, what: &str) -> Result<()> {
    if d.rank() != 1 || d.axes()[0].name != name {
        return Err(ModelError::Shape(format!("{what}: must be a distribution over `{name}`")));
    }
    Ok(())
}

/// Compose the variant's chain factorization. The conditional-independence
/// structure of the class holds by construction; shape mismatches are
/// rejected.
pub fn compose_aux(factors: AuxFactors, spec: &ProblemSpec) -> Result<AuxJoint> {
    let variant = factors.variant();
    let joint = match &factors {
        AuxFactors::Causal { w1, w2, x, v } => {
            expect_single_axis(w1, "W1", "w1 factor")?;
            expect_axes(w2, &["S", "W1"], "W2", "w2 factor")?;
            expect_axes(x, &["S", "W1"], "X", "x factor")?;
            let mut j = spec.source.product(w1)?.compose(w2)?.compose(x)?.compose(&spec.channel)?;
            if let Some(v) = v {
                expect_axes(v, &["W1", "W2", "Y"], "V", "v factor")?;
                j = j.compose(v)?;
            }
            j
        }
        AuxFactors::NoAction { w1, x } => {
            expect_single_axis(w1, "W1", "w1 factor")?;
            expect_axes(x, &["S", "W1"], "X", "x factor")?;
            spec.source.product(w1)?.compose(x)?.compose(&spec.channel)?
        }
        AuxFactors::TwoSided { w1, w2, x, v } => {
            expect_single_axis(w1, "W1", "w1 factor")?;
            expect_axes(w2, &["S", "U", "W1"], "W2", "w2 factor")?;
            expect_axes(x, &["S", "U", "W1"], "X", "x factor")?;
            let mut j = spec.source.product(w1)?.compose(w2)?.compose(x)?.compose(&spec.channel)?;
            if let Some(v) = v {
                expect_axes(v, &["W1", "W2", "Y", "Z"], "V", "v factor")?;
                j = j.compose(v)?;
            }
            j
        }
        AuxFactors::Feedback { w1, x, w2, v } => {
            expect_single_axis(w1, "W1", "w1 factor")?;
            expect_axes(x, &["S", "W1"], "X", "x factor")?;
            expect_axes(w2, &["S", "W1", "Y2"], "W2", "w2 factor")?;
            let mut j = spec.source.product(w1)?.compose(x)?.compose(&spec.channel)?.compose(w2)?;
            if let Some(v) = v {
                expect_axes(v, &["W1", "W2", "Y1"], "V", "v factor")?;
                j = j.compose(v)?;
            }
            j
        }
        AuxFactors::StrictlyCausal { x, w2, v } => {
            expect_single_axis(x, "X", "x factor")?;
            expect_axes(w2, &["S", "X"], "W2", "w2 factor")?;
            let mut j = spec.source.product(x)?.compose(w2)?.compose(&spec.channel)?;
            if let Some(v) = v {
                expect_axes(v, &["W2", "X", "Y"], "V", "v factor")?;
                j = j.compose(v)?;
            }
            j
        }
        AuxFactors::Corollary { x } => {
            expect_single_axis(x, "X", "x factor")?;
            spec.source.product(x)?.compose(&spec.channel)?
        }
    };
    let aux = AuxJoint { variant, factors, joint };
    if aux.w1_size() > spec.aux_caps.w1 {
        return Err(ModelError::Shape(format!(
            "|W1| = {} exceeds cap {}",
            aux.w1_size(),
            spec.aux_caps.w1
        )));
    }
    if aux.w2_size() > spec.aux_caps.w2 {
        return Err(ModelError::Shape(format!(
            "|W2| = {} exceeds cap {}",
            aux.w2_size(),
            spec.aux_caps.w2
        )));
    }
    Ok(aux)
}

/// l1 distance between the aux joint's coordination marginal and the spec's
/// target joint. V is included exactly when both sides model it.
pub fn marginal_gap(aux: &AuxJoint, spec: &ProblemSpec) -> Result<f64> {
    let with_v = aux.has_v() && spec.target_v.is_some();
    let axes = spec.target_axes(with_v);
    let target = spec.target_joint(with_v)?;
    let got = aux.joint.marginal(&axes)?;
    Ok(total_variation(&got, &target)?)
}

/// Conditional mutual informations that must vanish for a correctly
/// composed member of the variant's class. Exposed so tests and audits can
/// verify the Markov structure numerically.
pub fn markov_residuals(aux: &AuxJoint) -> Result<Vec<(String, f64)>> {
    let j = &aux.joint;
    let mut out = Vec::new();
    match aux.variant {
        Variant::Causal => {
            out.push((
                "I(W2;Y|W1,S)".into(),
                mutual_information(j, &["W2"], &["Y"], &["W1", "S"])?,
            ));
            if aux.has_v() {
                out.push((
                    "I(V;S,X|Y,W1,W2)".into(),
                    mutual_information(j, &["V"], &["S", "X"], &["Y", "W1", "W2"])?,
                ));
            }
            out.push(("I(S;W1)".into(), mutual_information(j, &["S"], &["W1"], &[])?));
        }
        Variant::NoAction => {
            out.push(("I(S;W1)".into(), mutual_information(j, &["S"], &["W1"], &[])?));
        }
        Variant::TwoSided => {
            out.push((
                "I(W2;Y,Z|W1,U,S)".into(),
                mutual_information(j, &["W2"], &["Y", "Z"], &["W1", "U", "S"])?,
            ));
            out.push(("I(U,S;W1)".into(), mutual_information(j, &["U", "S"], &["W1"], &[])?));
        }
        Variant::Feedback => {
            out.push(("I(S;W1)".into(), mutual_information(j, &["S"], &["W1"], &[])?));
            if aux.has_v() {
                out.push((
                    "I(V;S,X,Y2|Y1,W1,W2)".into(),
                    mutual_information(j, &["V"], &["S", "X", "Y2"], &["Y1", "W1", "W2"])?,
                ));
            }
        }
        Variant::StrictlyCausal | Variant::Corollary => {
            out.push(("I(S;X)".into(), mutual_information(j, &["S"], &["X"], &[])?));
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;

    pub const BSC_SPEC: &str = r#"{
        "alphabets": {"S": 2, "X": 2, "Y": 2, "V": 2},
        "source": [0.5, 0.5],
        "channel": [[0.9, 0.1], [0.1, 0.9], [0.9, 0.1], [0.1, 0.9]],
        "target_x": [[0.5, 0.5], [0.5, 0.5]],
        "target_v": [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0],
                     [0.0, 1.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]],
        "distortion": [[0.0, 1.0], [1.0, 0.0]]
    }"#;

    pub fn bit(name: &str) -> Alphabet {
        Alphabet::new(name, 2)
    }

    pub fn random_row(rng: &mut impl Rng, k: usize) -> Vec<f64> {
        let mut row: Vec<f64> = (0..k).map(|_| -(rng.gen::<f64>().max(1e-12)).ln()).collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
        row
    }

    pub fn random_kernel(rng: &mut impl Rng, from: Vec<Alphabet>, to: Alphabet) -> Kernel {
        let fc: usize = from.iter().map(|a| a.size).product();
        let mut rows = Vec::with_capacity(fc * to.size);
        for _ in 0..fc {
            rows.extend(random_row(rng, to.size));
        }
        Kernel::new(from, vec![to], rows).unwrap()
    }

    /// Random member of the causal class over binary visible alphabets.
    pub fn random_causal_factors(rng: &mut impl Rng, w1: usize, w2: usize) -> AuxFactors {
        AuxFactors::Causal {
            w1: JointDist::new(vec![Alphabet::new("W1", w1)], random_row(rng, w1)).unwrap(),
            w2: random_kernel(
                rng,
                vec![bit("S"), Alphabet::new("W1", w1)],
                Alphabet::new("W2", w2),
            ),
            x: random_kernel(rng, vec![bit("S"), Alphabet::new("W1", w1)], bit("X")),
            v: Some(random_kernel(
                rng,
                vec![Alphabet::new("W1", w1), Alphabet::new("W2", w2), bit("Y")],
                bit("V"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::probcore::{entropy, stream_rng};

    fn uniform_kernel(from: Vec<Alphabet>, to: Alphabet) -> Kernel {
        let fc: usize = from.iter().map(|a| a.size).product();
        let tc = to.size;
        Kernel::new(from, vec![to], vec![1.0 / tc as f64; fc * tc]).unwrap()
    }

    #[test]
    fn loads_binary_bsc_spec() {
        let spec = ProblemSpec::from_json(BSC_SPEC).unwrap();
        assert_eq!(spec.size("S"), 2);
        assert_eq!(spec.size("X"), 2);
        assert_eq!(spec.size("Y"), 2);
        // Default cap: |S x X x Y x V| + 1.
        assert_eq!(spec.aux_caps, AuxCaps { w1: 17, w2: 17 });
        let round = ProblemSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(round.to_json(), spec.to_json());
    }

    #[test]
    fn bad_row_is_located() {
        let bad = BSC_SPEC.replace("[[0.9, 0.1], [0.1, 0.9]", "[[0.9, 0.0], [0.1, 0.9]");
        let err = ProblemSpec::from_json(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("/channel/0"), "unexpected error: {msg}");
    }

    #[test]
    fn uniform_causal_factors_have_zero_residuals() {
        let spec = ProblemSpec::from_json(BSC_SPEC).unwrap();
        let f = AuxFactors::Causal {
            w1: JointDist::uniform(vec![bit("W1")]).unwrap(),
            w2: uniform_kernel(vec![bit("S"), bit("W1")], bit("W2")),
            x: uniform_kernel(vec![bit("S"), bit("W1")], bit("X")),
            v: Some(uniform_kernel(vec![bit("W1"), bit("W2"), bit("Y")], bit("V"))),
        };
        let aux = compose_aux(f, &spec).unwrap();
        for (name, r) in markov_residuals(&aux).unwrap() {
            assert!(r < 1e-12, "{name} = {r}");
        }
    }

    #[test]
    fn random_causal_factors_satisfy_markov_chains() {
        let spec = ProblemSpec::from_json(BSC_SPEC).unwrap();
        let mut rng = stream_rng(11, "model-markov");
        for _ in 0..50 {
            let aux = compose_aux(random_causal_factors(&mut rng, 3, 2), &spec).unwrap();
            for (name, r) in markov_residuals(&aux).unwrap() {
                assert!(r < 1e-9, "{name} = {r}");
            }
        }
    }

    #[test]
    fn two_sided_factors_satisfy_markov_chains() {
        let spec_text = r#"{
            "alphabets": {"S": 2, "U": 2, "Z": 2, "X": 2, "Y": 2, "V": 2},
            "source": [0.2, 0.1, 0.15, 0.05, 0.1, 0.1, 0.05, 0.25],
            "channel": [[0.8, 0.2], [0.3, 0.7], [0.4, 0.6], [0.1, 0.9]],
            "target_x": [[0.5, 0.5], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]
        }"#;
        let spec = ProblemSpec::from_json(spec_text).unwrap();
        let mut rng = stream_rng(9, "model-two-sided");
        for _ in 0..20 {
            let f = AuxFactors::TwoSided {
                w1: JointDist::new(vec![bit("W1")], random_row(&mut rng, 2)).unwrap(),
                w2: random_kernel(&mut rng, vec![bit("S"), bit("U"), bit("W1")], bit("W2")),
                x: random_kernel(&mut rng, vec![bit("S"), bit("U"), bit("W1")], bit("X")),
                v: Some(random_kernel(
                    &mut rng,
                    vec![bit("W1"), bit("W2"), bit("Y"), bit("Z")],
                    bit("V"),
                )),
            };
            let aux = compose_aux(f, &spec).unwrap();
            for (name, r) in markov_residuals(&aux).unwrap() {
                assert!(r < 1e-9, "{name} = {r}");
            }
        }
    }

    #[test]
    fn feedback_without_y2_dependence_collapses() {
        // Q_{W2|S,W1,Y2} constant in Y2 gives I(W2;Y2|S,W1) = 0.
        let spec_text = r#"{
            "alphabets": {"S": 2, "X": 2, "Y1": 2, "Y2": 2},
            "source": [0.5, 0.5],
            "channel": [[0.81, 0.09, 0.09, 0.01], [0.09, 0.01, 0.81, 0.09],
                        [0.09, 0.81, 0.01, 0.09], [0.01, 0.09, 0.09, 0.81]],
            "target_x": [[0.5, 0.5], [0.5, 0.5]]
        }"#;
        let spec = ProblemSpec::from_json(spec_text).unwrap();
        let mut rng = stream_rng(3, "model-feedback");
        // Conditioning axes sorted (S, W1, Y2), Y2 fastest: repeat each
        // (S, W1) row for both values of Y2.
        let mut rows = Vec::new();
        for _ in 0..4 {
            let r = random_row(&mut rng, 2);
            rows.extend(r.clone());
            rows.extend(r);
        }
        let f = AuxFactors::Feedback {
            w1: JointDist::uniform(vec![bit("W1")]).unwrap(),
            x: random_kernel(&mut rng, vec![bit("S"), bit("W1")], bit("X")),
            w2: Kernel::new(vec![bit("S"), bit("W1"), bit("Y2")], vec![bit("W2")], rows).unwrap(),
            v: None,
        };
        let aux = compose_aux(f, &spec).unwrap();
        let i = mutual_information(&aux.joint, &["W2"], &["Y2"], &["S", "W1"]).unwrap();
        assert!(i < 1e-12, "I(W2;Y2|S,W1) = {i}");
    }

    #[test]
    fn strictly_causal_input_is_state_independent() {
        let spec = ProblemSpec::from_json(BSC_SPEC).unwrap();
        let mut rng = stream_rng(5, "model-sc");
        let f = AuxFactors::StrictlyCausal {
            x: JointDist::new(vec![bit("X")], random_row(&mut rng, 2)).unwrap(),
            w2: random_kernel(&mut rng, vec![bit("S"), bit("X")], bit("W2")),
            v: Some(random_kernel(&mut rng, vec![bit("W2"), bit("X"), bit("Y")], bit("V"))),
        };
        let aux = compose_aux(f, &spec).unwrap();
        assert!(mutual_information(&aux.joint, &["S"], &["X"], &[]).unwrap() < 1e-12);
    }

    #[test]
    fn degenerate_aux_with_target_kernel_matches_marginal() {
        let spec = ProblemSpec::from_json(BSC_SPEC).unwrap();
        let one = Alphabet::new("W1", 1);
        let one2 = Alphabet::new("W2", 1);
        let x_rows: Vec<f64> = (0..2).flat_map(|s| spec.target_x.row(&[s]).to_vec()).collect();
        let f = AuxFactors::Causal {
            w1: JointDist::new(vec![one.clone()], vec![1.0]).unwrap(),
            w2: Kernel::new(vec![bit("S"), one.clone()], vec![one2.clone()], vec![1.0, 1.0])
                .unwrap(),
            x: Kernel::new(vec![bit("S"), one.clone()], vec![bit("X")], x_rows.clone()).unwrap(),
            v: None,
        };
        let aux = compose_aux(f, &spec).unwrap();
        assert!(marginal_gap(&aux, &spec).unwrap() < 1e-12);

        // Perturbing one row strictly increases the gap.
        let mut bad = x_rows;
        bad[0] += 0.05;
        bad[1] -= 0.05;
        let f = AuxFactors::Causal {
            w1: JointDist::new(vec![one.clone()], vec![1.0]).unwrap(),
            w2: Kernel::new(vec![bit("S"), one.clone()], vec![one2], vec![1.0, 1.0]).unwrap(),
            x: Kernel::new(vec![bit("S"), one], vec![bit("X")], bad).unwrap(),
            v: None,
        };
        let aux = compose_aux(f, &spec).unwrap();
        assert!(marginal_gap(&aux, &spec).unwrap() > 1e-3);
    }

    #[test]
    fn random_aux_matches_its_own_induced_marginal() {
        // Self-consistency: declare a random aux's induced marginal as the
        // target and check the gap vanishes.
        let spec = ProblemSpec::from_json(BSC_SPEC).unwrap();
        let mut rng = stream_rng(8, "model-self");
        let aux = compose_aux(random_causal_factors(&mut rng, 2, 2), &spec).unwrap();
        let induced_x = Kernel::from_joint(&aux.joint, &["S"], &["X"]).unwrap();
        let induced_v = Kernel::from_joint(&aux.joint, &["S", "X", "Y"], &["V"]).unwrap();
        let mut spec2 = spec.clone();
        spec2.target_x = induced_x;
        spec2.target_v = Some(induced_v);
        assert!(marginal_gap(&aux, &spec2).unwrap() < 1e-9);
    }

    #[test]
    fn source_entropy_is_available_for_bands() {
        let spec = ProblemSpec::from_json(BSC_SPEC).unwrap();
        let h = entropy(&spec.source, &["S"], &[]).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
    }
}
