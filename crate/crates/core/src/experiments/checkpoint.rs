//! Versioned JSON checkpoints.
//!
//! A checkpoint stores the effective run config, the encoder source (seed or
//! vector-file digest, never the table itself), the frozen label indicators
//! and every registry matrix by name with its shape and row-major values.
//! Floats are written in shortest round-trip form, so `load(save(s)) == s`
//! bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{FORMAT_VERSION, write_file};
use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::label_space::LabelSpace;
use crate::model::{ModelState, PARAM_NAMES};
use crate::prompt_bank::PromptBank;
use crate::text_encoder::{EncoderSource, EncoderTable};

pub const CHECKPOINT_FORMAT: &str = "structprompt-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl NamedMatrix {
    fn new(name: &str, m: &Matrix) -> Self {
        NamedMatrix {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            values: m.values().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<Matrix> {
        Matrix::from_vec(self.rows, self.cols, self.values.clone())
            .map_err(|e| Error::Format(format!("matrix {}: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub source: EncoderSource,
    pub vocab_size: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub encoder: EncoderSpec,
    pub label_names: Vec<String>,
    pub attribute_names: Vec<String>,
    pub indicators: NamedMatrix,
    pub registry_order: Vec<String>,
    pub parameters: Vec<NamedMatrix>,
}

impl Checkpoint {
    pub fn from_state(state: &ModelState, config: &RunConfig) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: FORMAT_VERSION,
            config: config.clone(),
            encoder: EncoderSpec {
                source: state.encoder.source().clone(),
                vocab_size: state.encoder.vocab_size(),
                dim: state.encoder.dim(),
            },
            label_names: state.labels.label_names.clone(),
            attribute_names: state.labels.attribute_names.clone(),
            indicators: NamedMatrix::new("Q", &state.labels.indicators),
            registry_order: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            parameters: state.registry().iter().map(|(n, m)| NamedMatrix::new(n, m)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint is not JSON: {e}")))?;
        if raw.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Format("not a structprompt checkpoint".into()));
        }
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("checkpoint has no version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        serde_json::from_value(raw).map_err(|e| Error::Format(format!("checkpoint: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Rebuilds the model. Seeded encoders are regenerated; vector-file
    /// encoders are re-read and must match the recorded digest.
    pub fn to_state(&self) -> Result<ModelState> {
        if self.registry_order != PARAM_NAMES {
            return Err(Error::Format(format!(
                "registry order {:?} does not match {:?}",
                self.registry_order, PARAM_NAMES
            )));
        }
        if self.parameters.len() != PARAM_NAMES.len()
            || self.parameters.iter().zip(PARAM_NAMES).any(|(p, n)| p.name != n)
        {
            return Err(Error::Format("checkpoint parameters do not follow registry order".into()));
        }
        let encoder = match &self.encoder.source {
            EncoderSource::Seeded { seed } => EncoderTable::seeded(*seed, self.encoder.vocab_size, self.encoder.dim)?,
            EncoderSource::VectorFile { path, sha256 } => {
                let table = EncoderTable::from_vectors_file(path, self.encoder.vocab_size, Some(self.encoder.dim))?;
                match table.source() {
                    EncoderSource::VectorFile { sha256: found, .. } if found == sha256 => table,
                    _ => {
                        return Err(Error::Compatibility(format!(
                            "vector file {path} changed since the checkpoint was written"
                        )))
                    }
                }
            }
        };
        let m: Vec<Matrix> = self
            .parameters
            .iter()
            .map(NamedMatrix::to_matrix)
            .collect::<Result<_>>()?;
        let mut it = m.into_iter();
        let mut next = || it.next().expect("six parameters");
        let bank = PromptBank {
            prompts: next(),
            keys: next(),
            fusion_weight: next(),
            fusion_bias: next(),
        };
        let labels = LabelSpace {
            label_names: self.label_names.clone(),
            attribute_names: self.attribute_names.clone(),
            indicators: self.indicators.to_matrix()?,
            attribute_embeddings: next(),
            projection: next(),
        };
        let state = ModelState { encoder, bank, labels };
        state.validate()?;
        Ok(state)
    }
}
