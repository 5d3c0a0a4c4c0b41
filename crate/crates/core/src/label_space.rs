//! Structured label embeddings, the latent-to-label projection, scoring and
//! cross-space alignment.
//!
//! Label embeddings are `E = Q·M` where `Q` (C×A, frozen) holds row-normalized
//! attribute indicators and `M` (A×d_e) the learnable attribute embeddings.
//! A fused representation `z` is projected as `u = z·Wᵀ` and scored against
//! every label as `softmax(u·Eᵀ)`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_LABEL_DIM: usize = 64;
pub const DEFAULT_MARGIN: f64 = 1.0;

/// Functional form of the alignment term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Sum of distances to every label.
    Literal,
    /// Pull toward the gold label, hinge away from the others.
    #[default]
    Contrastive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpace {
    pub label_names: Vec<String>,
    pub attribute_names: Vec<String>,
    /// C×A attribute indicators, frozen.
    pub indicators: Matrix,
    /// A×d_e attribute embeddings.
    pub attribute_embeddings: Matrix,
    /// d_e×d_z projection.
    pub projection: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct LabelVars {
    pub indicators: Var,
    pub attribute_embeddings: Var,
    pub projection: Var,
}

impl LabelSpace {
    /// Builds the label space. With `attributes = None` every label is its own
    /// attribute (`Q = I_C`). Otherwise `attributes[i]` lists the attribute
    /// names of label `i`; the vocabulary is their union in order of first
    /// appearance and `Q[i][a] = 1/|attrs(i)|`.
    pub fn build(
        labels: &[String],
        attributes: Option<&[Vec<String>]>,
        seed: u64,
        d_e: usize,
        d_z: usize,
    ) -> Result<Self> {
        let c = labels.len();
        if c < 2 {
            return Err(Error::Config(format!("need at least 2 labels, got {c}")));
        }
        if d_e == 0 || d_z == 0 {
            return Err(Error::Config("label dims must be >= 1".into()));
        }
        let (attribute_names, indicators) = match attributes {
            None => (labels.to_vec(), Matrix::identity(c)),
            Some(attrs) => indicator_matrix(labels, attrs)?,
        };
        let mut r = rng::seeded(rng::derive_seed(seed, "label_space"));
        let attribute_embeddings = rng::normal_matrix(&mut r, attribute_names.len(), d_e, 1.0 / (d_e as f64).sqrt());
        let projection = rng::normal_matrix(&mut r, d_e, d_z, 1.0 / (d_z as f64).sqrt());
        Ok(LabelSpace {
            label_names: labels.to_vec(),
            attribute_names,
            indicators,
            attribute_embeddings,
            projection,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.indicators.rows()
    }

    pub fn label_dim(&self) -> usize {
        self.attribute_embeddings.cols()
    }

    pub fn fused_dim(&self) -> usize {
        self.projection.cols()
    }

    /// `E = Q·M`, C×d_e.
    pub fn label_matrix(&self) -> Matrix {
        self.indicators
            .matmul(&self.attribute_embeddings)
            .expect("indicator and embedding shapes agree")
    }

    pub fn validate(&self) -> Result<()> {
        let (c, a) = self.indicators.shape();
        if c != self.label_names.len() || a != self.attribute_names.len() {
            return Err(Error::shape("label indicators", (c, a), (self.label_names.len(), self.attribute_names.len())));
        }
        if self.attribute_embeddings.rows() != a {
            return Err(Error::shape("attribute embeddings", self.attribute_embeddings.shape(), (a, self.label_dim())));
        }
        if self.projection.rows() != self.label_dim() {
            return Err(Error::shape("label projection", self.projection.shape(), (self.label_dim(), self.fused_dim())));
        }
        Ok(())
    }

    /// Registers `Q` as a constant and `M`, `W` as parameters (or constants
    /// when `trainable` is false).
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> LabelVars {
        let indicators = tape.constant(self.indicators.clone());
        let (m, w) = if trainable {
            (tape.param(self.attribute_embeddings.clone()), tape.param(self.projection.clone()))
        } else {
            (tape.constant(self.attribute_embeddings.clone()), tape.constant(self.projection.clone()))
        };
        LabelVars {
            indicators,
            attribute_embeddings: m,
            projection: w,
        }
    }
}

fn indicator_matrix(labels: &[String], attrs: &[Vec<String>]) -> Result<(Vec<String>, Matrix)> {
    if attrs.len() != labels.len() {
        return Err(Error::Config(format!(
            "attribute lists given for {} labels, expected {}",
            attrs.len(),
            labels.len()
        )));
    }
    let mut vocab: Vec<String> = Vec::new();
    for (label, list) in labels.iter().zip(attrs) {
        if list.is_empty() {
            return Err(Error::Config(format!("label {label:?} has an empty attribute list")));
        }
        for a in list {
            if !vocab.contains(a) {
                vocab.push(a.clone());
            }
        }
    }
    let mut q = Matrix::zeros(labels.len(), vocab.len());
    for (i, list) in attrs.iter().enumerate() {
        let mut distinct: Vec<&String> = Vec::new();
        for a in list {
            if !distinct.contains(&a) {
                distinct.push(a);
            }
        }
        let w = 1.0 / distinct.len() as f64;
        for a in distinct {
            let j = vocab.iter().position(|v| v == a).expect("attribute is in vocabulary");
            q.set(i, j, w);
        }
    }
    Ok((vocab, q))
}

pub fn label_embeddings(tape: &mut Tape, vars: &LabelVars) -> Result<Var> {
    tape.matmul(vars.indicators, vars.attribute_embeddings)
}

/// `u = z·Wᵀ`, B×d_e.
pub fn project(tape: &mut Tape, z: Var, vars: &LabelVars) -> Result<Var> {
    let w_t = tape.transpose(vars.projection)?;
    tape.matmul(z, w_t)
}

/// Class probabilities from projected representations `u` and labels `e`.
pub fn score_projected(tape: &mut Tape, u: Var, e: Var) -> Result<Var> {
    let e_t = tape.transpose(e)?;
    let logits = tape.matmul(u, e_t)?;
    tape.softmax_rows(logits)
}

/// `softmax(E·W·z)` for each row of `z`, B×C.
pub fn score(tape: &mut Tape, z: Var, vars: &LabelVars) -> Result<Var> {
    let u = project(tape, z, vars)?;
    let e = label_embeddings(tape, vars)?;
    score_projected(tape, u, e)
}

/// Alignment between projected representations `u` (B×d_e) and label
/// embeddings `e` (C×d_e), averaged over rows.
///
/// With `d(u, e_i) = ‖u − e_i‖² / d_e`, the literal form is `Σ_i d(u, e_i)`
/// and the contrastive form is
/// `d(u, e_gold) + 1/(C−1) Σ_{i≠gold} max(0, margin − d(u, e_i))`.
pub fn alignment_from_projected(
    tape: &mut Tape,
    u: Var,
    e: Var,
    golds: &[usize],
    mode: AlignMode,
    margin: f64,
) -> Result<Var> {
    let (batch, d_e) = tape.value(u)?.shape();
    let classes = tape.value(e)?.rows();
    if golds.len() != batch || batch == 0 {
        return Err(Error::shape("alignment_loss", (batch, d_e), (golds.len(), 1)));
    }
    if let Some(&bad) = golds.iter().find(|&&g| g >= classes) {
        return Err(Error::Index {
            op: "alignment_loss",
            index: bad,
            len: classes,
        });
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidInput(format!("margin must be finite and >= 0, got {margin}")));
    }
    let dist = tape.sq_dist(u, e, 1.0 / d_e as f64)?;
    let per_batch = match mode {
        AlignMode::Literal => tape.sum(dist)?,
        AlignMode::Contrastive => {
            let gold_mask = tape.constant(Matrix::from_fn(batch, classes, |b, i| f64::from(u8::from(golds[b] == i))));
            let other_mask = tape.constant(Matrix::from_fn(batch, classes, |b, i| f64::from(u8::from(golds[b] != i))));
            let pulled = tape.hadamard(dist, gold_mask)?;
            let pull = tape.sum(pulled)?;
            let neg = tape.scale(dist, -1.0)?;
            let gap = tape.add_scalar(neg, margin)?;
            let hinge = tape.relu(gap)?;
            let pushed = tape.hadamard(hinge, other_mask)?;
            let push = tape.sum(pushed)?;
            let push = tape.scale(push, 1.0 / (classes - 1) as f64)?;
            tape.add(pull, push)?
        }
    };
    tape.scale(per_batch, 1.0 / batch as f64)
}

pub fn alignment_loss(
    tape: &mut Tape,
    z: Var,
    golds: &[usize],
    vars: &LabelVars,
    mode: AlignMode,
    margin: f64,
) -> Result<Var> {
    let u = project(tape, z, vars)?;
    let e = label_embeddings(tape, vars)?;
    alignment_from_projected(tape, u, e, golds, mode, margin)
}
