use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_space::{AlignMode, DEFAULT_LABEL_DIM, DEFAULT_MARGIN};
use crate::prompt_bank::{DEFAULT_FUSED_DIM, DEFAULT_PROMPTS};
use crate::text_encoder::{DEFAULT_DIM, DEFAULT_VOCAB_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    #[serde(rename = "V")]
    pub vocab_size: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub d_e: usize,
    pub n_prompts: usize,
    /// Weight of the alignment term.
    pub lambda1: f64,
    /// Weight of the orthogonality term.
    pub lambda2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub align_mode: AlignMode,
    pub margin: f64,
    pub k_shot: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            vocab_size: DEFAULT_VOCAB_SIZE,
            d_h: DEFAULT_DIM,
            d_z: DEFAULT_FUSED_DIM,
            d_e: DEFAULT_LABEL_DIM,
            n_prompts: DEFAULT_PROMPTS,
            lambda1: 0.1,
            lambda2: 0.01,
            lr: 0.01,
            epochs: 200,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            align_mode: AlignMode::Contrastive,
            margin: DEFAULT_MARGIN,
            k_shot: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("V", self.vocab_size),
            ("d_h", self.d_h),
            ("d_z", self.d_z),
            ("d_e", self.d_e),
            ("n_prompts", self.n_prompts),
            ("k_shot", self.k_shot),
        ];
        for (key, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{key} must be >= 1")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("V must be >= 2".into()));
        }
        for (key, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("margin", self.margin)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{key} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be finite and > 0, got {}", self.lr)));
        }
        for (key, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{key} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::Config(format!("adam_eps must be > 0, got {}", self.adam_eps)));
        }
        Ok(())
    }
}
