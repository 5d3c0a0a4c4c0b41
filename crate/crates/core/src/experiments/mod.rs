//! Run configs, checkpoints, the train/eval commands and sensitivity sweeps.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod sweep;

pub use checkpoint::{Checkpoint, NamedMatrix, CHECKPOINT_FORMAT};
pub use commands::{cmd_eval, cmd_train, train_and_evaluate, EvalOutcome, RunOutcome};
pub use config::{DataSource, RunConfig, SweepGrids, SynthSpec};
pub use sweep::{cmd_sweep, run_sweep, sweep_seed, SweepAxis, SweepRow, SweepSummaryRow};

use std::path::Path;

use crate::error::{Error, Result};

/// Version tag written into every output document.
pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_json_bytes<T: serde::Serialize>(doc: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(doc).expect("document serializes");
    s.push('\n');
    s.into_bytes()
}
