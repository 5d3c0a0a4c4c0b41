//! Frozen hashing bag-of-embeddings encoder.
//!
//! Text is lowercased, split on every non-alphanumeric character, and each
//! token hashed with 64-bit FNV-1a into one of `V` rows of a fixed embedding
//! table. A text is represented by the mean of its rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_VOCAB_SIZE: usize = 4096;
pub const DEFAULT_DIM: usize = 64;

/// Where a table's contents came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSource {
    Seeded { seed: u64 },
    VectorFile { path: String, sha256: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTable {
    vocab_size: usize,
    dim: usize,
    table: Matrix,
    source: EncoderSource,
}

/// Bucket of a single (already lowercased) token.
pub fn token_id(token: &str, vocab_size: usize) -> usize {
    (rng::fnv1a(token.as_bytes()) % vocab_size as u64) as usize
}

pub fn split_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn tokenize(text: &str, vocab_size: usize) -> Vec<usize> {
    split_tokens(text)
        .iter()
        .map(|t| token_id(t, vocab_size))
        .collect()
}

impl EncoderTable {
    /// Table with entries drawn from `Normal(0, 1/√dim)`.
    pub fn seeded(seed: u64, vocab_size: usize, dim: usize) -> Result<Self> {
        check_dims(vocab_size, dim)?;
        let mut r = rng::seeded(rng::derive_seed(seed, "encoder"));
        let table = rng::normal_matrix(&mut r, vocab_size, dim, 1.0 / (dim as f64).sqrt());
        Ok(EncoderTable {
            vocab_size,
            dim,
            table,
            source: EncoderSource::Seeded { seed },
        })
    }

    /// Table built from a word2vec-style text file: a `count dim` header then
    /// one `token v1 … v_dim` line per token. Tokens are lowercased and hashed
    /// into the table in file order, so later collisions overwrite earlier
    /// rows. Rows no token hashes to stay zero.
    pub fn from_vectors_file(path: impl AsRef<Path>, vocab_size: usize, expected_dim: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
            line: 0,
            msg: "vector file is not valid UTF-8".into(),
        })?;
        let (table, dim) = parse_vectors(&text, vocab_size, expected_dim)?;
        Ok(EncoderTable {
            vocab_size,
            dim,
            table,
            source: EncoderSource::VectorFile {
                path: path.display().to_string(),
                sha256,
            },
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn source(&self) -> &EncoderSource {
        &self.source
    }

    /// Mean of the rows selected by `ids`.
    ///
    /// Rows are accumulated once per distinct id in ascending id order,
    /// weighted by multiplicity, which makes the result bit-identical under
    /// any permutation of `ids` and under duplicating every id.
    pub fn encode(&self, ids: &[usize]) -> Result<Matrix> {
        if ids.is_empty() {
            return Err(Error::InvalidInput("cannot encode an empty token list".into()));
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &id in ids {
            if id >= self.vocab_size {
                return Err(Error::Index {
                    op: "encode",
                    index: id,
                    len: self.vocab_size,
                });
            }
            *counts.entry(id).or_default() += 1;
        }
        let mut acc = vec![0.0; self.dim];
        for (id, count) in counts {
            let c = count as f64;
            for (a, v) in acc.iter_mut().zip(self.table.row(id)) {
                *a += c * v;
            }
        }
        let total = ids.len() as f64;
        Matrix::row_vector(acc.into_iter().map(|a| a / total).collect())
    }

    pub fn encode_text(&self, text: &str) -> Result<Matrix> {
        self.encode(&tokenize(text, self.vocab_size))
    }

    /// Encodes each text into one row of a `texts.len() × dim` matrix.
    pub fn encode_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Matrix> {
        let mut values = Vec::with_capacity(texts.len() * self.dim);
        for t in texts {
            values.extend_from_slice(self.encode_text(t.as_ref())?.values());
        }
        Matrix::from_vec(texts.len(), self.dim, values)
    }
}

fn check_dims(vocab_size: usize, dim: usize) -> Result<()> {
    if vocab_size < 2 {
        return Err(Error::Config(format!("vocab size must be >= 2, got {vocab_size}")));
    }
    if dim < 1 {
        return Err(Error::Config("encoder dim must be >= 1".into()));
    }
    Ok(())
}

fn parse_vectors(text: &str, vocab_size: usize, expected_dim: Option<usize>) -> Result<(Matrix, usize)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("header field {s:?} is not a count"),
        })
    };
    if fields.len() != 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be \"count dim\"".into(),
        });
    }
    let count = parse_count(fields[0])?;
    let dim = parse_count(fields[1])?;
    check_dims(vocab_size, dim)?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(Error::Format(format!(
                "vector file has dim {dim}, configuration expects {expected}"
            )));
        }
    }

    let mut table = Matrix::zeros(vocab_size, dim);
    let mut seen = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("line is non-blank");
        let values = parts
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("{s:?} is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::Format(format!(
                "line {line_no}: expected {dim} values, found {}",
                values.len()
            )));
        }
        let row = token_id(&token.to_lowercase(), vocab_size);
        for (j, v) in values.into_iter().enumerate() {
            table.set(row, j, v);
        }
        seen += 1;
    }
    if seen != count {
        return Err(Error::Format(format!("header declares {count} vectors, file has {seen}")));
    }
    Ok((table, dim))
}
