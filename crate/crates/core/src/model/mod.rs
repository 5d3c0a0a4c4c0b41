//! Model state, the joint training objective, optimizers and the training
//! loop.

mod config;
mod objective;
mod optim;
mod train;

pub use config::{OptimizerKind, TrainConfig};
pub use objective::{register, total_loss, Batch, LossTerms, LossValues, ParamVars};
pub use optim::{adam_step, sgd_step, AdamMoments, AdamSettings};
pub use train::{fit, predict_proba, project_features, EpochRecord};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::label_space::LabelSpace;
use crate::prompt_bank::PromptBank;
use crate::rng;
use crate::text_encoder::EncoderTable;

/// Names of the trainable parameters, in registry order.
pub const PARAM_NAMES: [&str; 6] = ["P", "K", "W_f", "b_f", "M", "W"];

/// Frozen encoder plus every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub encoder: EncoderTable,
    pub bank: PromptBank,
    pub labels: LabelSpace,
}

impl ModelState {
    /// Fresh state for `cfg`. The prompt bank and label space are seeded from
    /// `cfg.seed` through independent derived streams.
    pub fn init(
        cfg: &TrainConfig,
        encoder: EncoderTable,
        label_names: &[String],
        attributes: Option<&[Vec<String>]>,
    ) -> Result<Self> {
        cfg.validate()?;
        if encoder.dim() != cfg.d_h {
            return Err(Error::Config(format!(
                "encoder dim {} does not match d_h {}",
                encoder.dim(),
                cfg.d_h
            )));
        }
        let bank = PromptBank::init(rng::derive_seed(cfg.seed, "bank"), cfg.n_prompts, cfg.d_h, cfg.d_z)?;
        let labels = LabelSpace::build(label_names, attributes, rng::derive_seed(cfg.seed, "labels"), cfg.d_e, cfg.d_z)?;
        let state = ModelState { encoder, bank, labels };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        self.bank.validate()?;
        self.labels.validate()?;
        if self.bank.input_dim() != self.encoder.dim() {
            return Err(Error::shape("prompt bank input", self.bank.prompts.shape(), (self.bank.n_prompts(), self.encoder.dim())));
        }
        if self.bank.fused_dim() != self.labels.fused_dim() {
            return Err(Error::shape("label projection", self.labels.projection.shape(), (self.labels.label_dim(), self.bank.fused_dim())));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.labels.n_classes()
    }

    /// Trainable parameters in [`PARAM_NAMES`] order.
    pub fn registry(&self) -> [(&'static str, &Matrix); 6] {
        [
            (PARAM_NAMES[0], &self.bank.prompts),
            (PARAM_NAMES[1], &self.bank.keys),
            (PARAM_NAMES[2], &self.bank.fusion_weight),
            (PARAM_NAMES[3], &self.bank.fusion_bias),
            (PARAM_NAMES[4], &self.labels.attribute_embeddings),
            (PARAM_NAMES[5], &self.labels.projection),
        ]
    }

    pub fn registry_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.bank.prompts,
            &mut self.bank.keys,
            &mut self.bank.fusion_weight,
            &mut self.bank.fusion_bias,
            &mut self.labels.attribute_embeddings,
            &mut self.labels.projection,
        ]
    }
}
