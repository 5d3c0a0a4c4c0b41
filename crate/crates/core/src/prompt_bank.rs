//! Structured prompt factors, their input-dependent fusion with the encoded
//! text, and the soft orthogonality penalty over the factors.
//!
//! Fusion of `h` (B×d_h) with the bank:
//!
//! ```text
//! α = softmax_rows(h · Kᵀ)        B×n   per-factor relevance
//! c = α · P                       B×d_h convex combination of factors
//! z = [h | c] · W_f + b_f         B×d_z
//! ```

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_PROMPTS: usize = 20;
pub const DEFAULT_FUSED_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    /// n×d_h prompt vectors.
    pub prompts: Matrix,
    /// n×d_h relevance keys.
    pub keys: Matrix,
    /// 2d_h×d_z fusion projection.
    pub fusion_weight: Matrix,
    /// 1×d_z fusion bias.
    pub fusion_bias: Matrix,
}

/// Tape handles for the four bank matrices.
#[derive(Debug, Clone, Copy)]
pub struct PromptVars {
    pub prompts: Var,
    pub keys: Var,
    pub fusion_weight: Var,
    pub fusion_bias: Var,
}

/// Output of [`fuse`]: the joint representation and the factor weights.
#[derive(Debug, Clone, Copy)]
pub struct Fused {
    pub z: Var,
    pub alpha: Var,
}

impl PromptBank {
    /// `P, K ~ N(0, 1/√d_h)`, `W_f ~ N(0, 1/√(2d_h))`, `b_f = 0`.
    pub fn init(seed: u64, n: usize, d_h: usize, d_z: usize) -> Result<Self> {
        if n == 0 || d_h == 0 || d_z == 0 {
            return Err(Error::Config(format!(
                "prompt bank needs n, d_h, d_z >= 1 (got {n}, {d_h}, {d_z})"
            )));
        }
        let mut r = rng::seeded(rng::derive_seed(seed, "prompt_bank"));
        let std_h = 1.0 / (d_h as f64).sqrt();
        let prompts = rng::normal_matrix(&mut r, n, d_h, std_h);
        let keys = rng::normal_matrix(&mut r, n, d_h, std_h);
        let fusion_weight = rng::normal_matrix(&mut r, 2 * d_h, d_z, 1.0 / ((2 * d_h) as f64).sqrt());
        Ok(PromptBank {
            prompts,
            keys,
            fusion_weight,
            fusion_bias: Matrix::zeros(1, d_z),
        })
    }

    pub fn n_prompts(&self) -> usize {
        self.prompts.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.prompts.cols()
    }

    pub fn fused_dim(&self) -> usize {
        self.fusion_weight.cols()
    }

    /// Checks the shape relations between the four matrices.
    pub fn validate(&self) -> Result<()> {
        let (n, d_h) = self.prompts.shape();
        if n == 0 {
            return Err(Error::Config("prompt bank needs at least one factor".into()));
        }
        if self.keys.shape() != (n, d_h) {
            return Err(Error::shape("prompt keys", self.keys.shape(), (n, d_h)));
        }
        if self.fusion_weight.rows() != 2 * d_h {
            return Err(Error::shape("fusion weight", self.fusion_weight.shape(), (2 * d_h, self.fused_dim())));
        }
        if self.fusion_bias.shape() != (1, self.fused_dim()) {
            return Err(Error::shape("fusion bias", self.fusion_bias.shape(), (1, self.fused_dim())));
        }
        Ok(())
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> PromptVars {
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        PromptVars {
            prompts: leaf(&self.prompts),
            keys: leaf(&self.keys),
            fusion_weight: leaf(&self.fusion_weight),
            fusion_bias: leaf(&self.fusion_bias),
        }
    }
}

/// Learnable combination of encoded text `h` (B×d_h) with the prompt bank.
pub fn fuse(tape: &mut Tape, h: Var, bank: &PromptVars) -> Result<Fused> {
    let keys_t = tape.transpose(bank.keys)?;
    let scores = tape.matmul(h, keys_t)?;
    let alpha = tape.softmax_rows(scores)?;
    let context = tape.matmul(alpha, bank.prompts)?;
    let joint = tape.concat_cols(h, context)?;
    let projected = tape.matmul(joint, bank.fusion_weight)?;
    let z = tape.add_row(projected, bank.fusion_bias)?;
    Ok(Fused { z, alpha })
}

/// Mean squared cosine similarity over all unordered pairs of rows of `p`:
/// `2/(n(n−1)) Σ_{i<j} (p̂_i·p̂_j)²` with `p̂ = p / (‖p‖ + 1e-12)`; zero for a
/// single row.
pub fn orthogonality_penalty(tape: &mut Tape, prompts: Var) -> Result<Var> {
    let n = tape.value(prompts)?.rows();
    let unit = tape.normalize_rows(prompts)?;
    let unit_t = tape.transpose(unit)?;
    let gram = tape.matmul(unit, unit_t)?;
    let gram_sq = tape.hadamard(gram, gram)?;
    let upper = tape.constant(Matrix::from_fn(n, n, |i, j| if i < j { 1.0 } else { 0.0 }));
    let masked = tape.hadamard(gram_sq, upper)?;
    let total = tape.sum(masked)?;
    let factor = if n > 1 { 2.0 / (n * (n - 1)) as f64 } else { 0.0 };
    tape.scale(total, factor)
}

/// [`orthogonality_penalty`] evaluated outside of any training tape.
pub fn orthogonality_penalty_of(prompts: &Matrix) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(prompts.clone());
    let l = orthogonality_penalty(&mut tape, p)?;
    tape.scalar(l)
}
