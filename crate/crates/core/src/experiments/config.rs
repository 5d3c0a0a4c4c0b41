//! Run configuration files.
//!
//! A run config is a TOML document. Top-level keys are the training
//! hyperparameters (`seed`, `V`, `d_h`, `d_z`, `d_e`, `n_prompts`, `lambda1`,
//! `lambda2`, `lr`, `epochs`, `optimizer`, `adam_beta1`, `adam_beta2`,
//! `adam_eps`, `align_mode`, `margin`, `k_shot`) plus `labels`, `attributes`,
//! `vectors` and the `[data]` and `[sweep]` tables. Unknown keys are rejected;
//! missing keys take the defaults of [`RunConfig::default`].
//!
//! ```toml
//! seed = 3
//! lr = 0.01
//! align_mode = "contrastive"
//!
//! [data.synth]
//! C = 4
//! per_class = 50
//! rho = 0.2
//!
//! [attributes]
//! class0 = ["events"]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::text_encoder::EncoderTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(rename = "C")]
    pub classes: usize,
    pub per_class: usize,
    pub rho: f64,
    /// Seed of the corpus itself, independent of the run seed.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub csv: Option<String>,
    pub synth: Option<SynthSpec>,
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource {
            csv: None,
            synth: Some(SynthSpec {
                classes: 4,
                per_class: 100,
                rho: 0.0,
                seed: 0,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrids {
    pub lr: Vec<f64>,
    pub prompt_len: Vec<f64>,
    pub data_scale: Vec<f64>,
    pub seeds: usize,
}

impl Default for SweepGrids {
    fn default() -> Self {
        SweepGrids {
            lr: vec![1e-5, 1e-4, 5e-4, 1e-3],
            prompt_len: vec![5.0, 10.0, 20.0, 30.0, 40.0],
            data_scale: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            seeds: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub data: DataSource,
    /// Overrides the label names supplied by the data source.
    pub labels: Option<Vec<String>>,
    /// Attribute names per label name.
    pub attributes: Option<BTreeMap<String, Vec<String>>>,
    /// word2vec-style text file to build the encoder from instead of `seed`.
    pub vectors: Option<String>,
    pub sweep: SweepGrids,
}

fn known_top_level_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {}", e.message())))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let known = known_top_level_keys();
        if let Some(bad) = table.keys().find(|k| !known.contains(k)) {
            return Err(Error::Config(format!("unknown config key {bad:?}")));
        }
        let cfg: RunConfig = toml::Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}{}", key_context(&table), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match (&self.data.csv, &self.data.synth) {
            (Some(_), Some(_)) => Err(Error::Config("data: give either csv or synth, not both".into())),
            (None, None) => Err(Error::Config("data: one of csv or synth is required".into())),
            _ => Ok(()),
        }?;
        if self.sweep.seeds == 0 {
            return Err(Error::Config("sweep.seeds must be >= 1".into()));
        }
        Ok(())
    }

    /// Loads or generates the configured dataset, applying label overrides.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = match (&self.data.csv, &self.data.synth) {
            (Some(path), None) => data::load_agnews_csv(path)?,
            (None, Some(s)) => data::synth_generate(s.classes, s.per_class, s.rho, s.seed)?,
            _ => {
                self.validate()?;
                unreachable!()
            }
        };
        match &self.labels {
            None => Ok(ds),
            Some(names) => {
                if names.len() != ds.n_classes() {
                    return Err(Error::Config(format!(
                        "labels lists {} names, data has {} classes",
                        names.len(),
                        ds.n_classes()
                    )));
                }
                Dataset::new(ds.examples().to_vec(), names.clone())
            }
        }
    }

    /// Attribute lists aligned with `label_names`, if configured.
    pub fn attribute_lists(&self, label_names: &[String]) -> Result<Option<Vec<Vec<String>>>> {
        let Some(map) = &self.attributes else {
            return Ok(None);
        };
        if let Some(unknown) = map.keys().find(|k| !label_names.contains(k)) {
            return Err(Error::Config(format!("attributes given for unknown label {unknown:?}")));
        }
        Ok(Some(
            label_names
                .iter()
                .map(|l| map.get(l).cloned().unwrap_or_default())
                .collect(),
        ))
    }

    pub fn build_encoder(&self) -> Result<EncoderTable> {
        match &self.vectors {
            Some(path) => EncoderTable::from_vectors_file(path, self.train.vocab_size, Some(self.train.d_h)),
            None => EncoderTable::seeded(self.train.seed, self.train.vocab_size, self.train.d_h),
        }
    }
}

// Names the first top-level key that fails to deserialize on its own.
fn key_context(table: &toml::Table) -> String {
    for (key, value) in table {
        let mut single = toml::Table::new();
        single.insert(key.clone(), value.clone());
        if toml::Value::Table(single).try_into::<RunConfig>().is_err() {
            return format!("key {key:?}: ");
        }
    }
    String::new()
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {part:?} is not a table")))?;
    }
    // Choosing one data source replaces the other.
    if parts.len() >= 2 && parts[0] == "data" {
        let other = if parts[1] == "csv" { "synth" } else { "csv" };
        cur.remove(other);
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
