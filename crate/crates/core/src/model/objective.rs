use super::{ModelState, TrainConfig};
use crate::autodiff::{Matrix, Tape, Var};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::label_space::{self, LabelVars};
use crate::prompt_bank::{self, PromptVars};
use crate::text_encoder::EncoderTable;

/// Encoded inputs with their gold labels. Encoding happens once: the
/// encoder is frozen, so features never change during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// B×d_h matrix of encoded texts.
    pub features: Matrix,
    pub golds: Vec<usize>,
}

impl Batch {
    pub fn encode(encoder: &EncoderTable, examples: &[Example]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Usage("batch is empty".into()));
        }
        let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
        Ok(Batch {
            features: encoder.encode_texts(&texts)?,
            golds: examples.iter().map(|e| e.label).collect(),
        })
    }

    pub fn from_ids(encoder: &EncoderTable, items: &[(Vec<usize>, usize)]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Usage("batch is empty".into()));
        }
        let mut values = Vec::with_capacity(items.len() * encoder.dim());
        for (ids, _) in items {
            values.extend_from_slice(encoder.encode(ids)?.values());
        }
        Ok(Batch {
            features: Matrix::from_vec(items.len(), encoder.dim(), values)?,
            golds: items.iter().map(|(_, g)| *g).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.golds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.golds.is_empty()
    }
}

/// Tape handles for the whole trainable registry.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub bank: PromptVars,
    pub labels: LabelVars,
}

impl ParamVars {
    /// Handles in registry order.
    pub fn in_order(&self) -> [Var; 6] {
        [
            self.bank.prompts,
            self.bank.keys,
            self.bank.fusion_weight,
            self.bank.fusion_bias,
            self.labels.attribute_embeddings,
            self.labels.projection,
        ]
    }
}

pub fn register(tape: &mut Tape, state: &ModelState) -> ParamVars {
    ParamVars {
        bank: state.bank.register(tape, true),
        labels: state.labels.register(tape, true),
    }
}

/// The components of the joint objective as tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub task: Var,
    pub align: Var,
    pub reg: Var,
    pub total: Var,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub task: f64,
    pub align: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> Result<LossValues> {
        Ok(LossValues {
            task: tape.scalar(self.task)?,
            align: tape.scalar(self.align)?,
            reg: tape.scalar(self.reg)?,
            total: tape.scalar(self.total)?,
        })
    }
}

/// `L = mean CE + λ1·mean alignment + λ2·orthogonality(P)`, all on one tape.
pub fn total_loss(tape: &mut Tape, vars: &ParamVars, batch: &Batch, cfg: &TrainConfig) -> Result<LossTerms> {
    if batch.is_empty() {
        return Err(Error::Usage("batch is empty".into()));
    }
    let h = tape.constant(batch.features.clone());
    let fused = prompt_bank::fuse(tape, h, &vars.bank)?;
    let u = label_space::project(tape, fused.z, &vars.labels)?;
    let e = label_space::label_embeddings(tape, &vars.labels)?;
    let probs = label_space::score_projected(tape, u, e)?;
    let task = tape.cross_entropy(probs, &batch.golds)?;
    let align = label_space::alignment_from_projected(tape, u, e, &batch.golds, cfg.align_mode, cfg.margin)?;
    let reg = prompt_bank::orthogonality_penalty(tape, vars.bank.prompts)?;

    let weighted_align = tape.scale(align, cfg.lambda1)?;
    let weighted_reg = tape.scale(reg, cfg.lambda2)?;
    let partial = tape.add(task, weighted_align)?;
    let total = tape.add(partial, weighted_reg)?;
    Ok(LossTerms { task, align, reg, total })
}
