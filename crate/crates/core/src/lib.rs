//! Few-shot text classification with structured prompt fusion, structured
//! label embeddings and cross-space alignment.
//!
//! Pipeline: a frozen hashing encoder turns text into `h`; a bank of prompt
//! factors is fused with `h` into `z`; `z` is projected into the label space
//! and scored against label embeddings built from attribute indicators.
//! Training minimizes task cross-entropy plus weighted alignment and prompt
//! orthogonality terms.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiments;
pub mod label_space;
pub mod metrics;
pub mod model;
pub mod prompt_bank;
pub mod rng;
pub mod text_encoder;

pub use error::{Error, Result};
