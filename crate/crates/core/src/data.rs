//! Labeled text datasets: AG News CSV ingestion, seeded k-shot splits and a
//! synthetic corpus with controllable class overlap.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::text_encoder::split_tokens;

pub const AGNEWS_LABELS: [&str; 4] = ["world", "sports", "business", "technology"];

/// Tokens per synthetic text.
pub const SYNTH_TEXT_LEN: usize = 10;
/// Signature tokens owned by each synthetic class.
pub const SYNTH_SIGNATURE_SIZE: usize = 20;
/// Tokens in the pool shared by all synthetic classes.
pub const SYNTH_SHARED_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    examples: Vec<Example>,
    label_names: Vec<String>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, label_names: Vec<String>) -> Result<Self> {
        if let Some(bad) = examples.iter().find(|e| e.label >= label_names.len()) {
            return Err(Error::Index {
                op: "dataset",
                index: bad.label,
                len: label_names.len(),
            });
        }
        Ok(Dataset { examples, label_names })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
            label_names: self.label_names.clone(),
        }
    }
}

fn agnews_names() -> Vec<String> {
    AGNEWS_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Reads AG News rows `"class","title","description"` with 1-based classes.
/// The text is `title + " " + description`, or just the title when the
/// description is empty.
pub fn load_agnews_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_agnews(file)
}

pub fn parse_agnews<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut examples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Parse {
                line: row,
                msg: format!("read failure: {e}"),
            },
            _ => Error::Parse {
                line: row,
                msg: e.to_string(),
            },
        })?;
        if record.len() != 3 {
            return Err(Error::Parse {
                line: row,
                msg: format!("expected 3 fields (class, title, description), found {}", record.len()),
            });
        }
        let class: usize = record[0].trim().parse().map_err(|_| Error::Parse {
            line: row,
            msg: format!("class {:?} is not an integer", &record[0]),
        })?;
        if !(1..=AGNEWS_LABELS.len()).contains(&class) {
            return Err(Error::Parse {
                line: row,
                msg: format!("class {class} outside 1-{}", AGNEWS_LABELS.len()),
            });
        }
        let text = if record[2].is_empty() {
            record[1].to_string()
        } else {
            format!("{} {}", &record[1], &record[2])
        };
        if split_tokens(&text).is_empty() {
            return Err(Error::Parse {
                line: row,
                msg: "text produces no tokens".into(),
            });
        }
        examples.push(Example { text, label: class - 1 });
    }
    Dataset::new(examples, agnews_names())
}

/// Inverse of [`load_agnews_csv`] for datasets with at most four classes.
pub fn write_agnews_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    serialize_agnews(ds, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn serialize_agnews<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    if ds.n_classes() > AGNEWS_LABELS.len() {
        return Err(Error::Format(format!(
            "AG News format holds at most {} classes, dataset has {}",
            AGNEWS_LABELS.len(),
            ds.n_classes()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .quote_style(csv::QuoteStyle::Always)
        .from_writer(writer);
    let fmt_err = |e: csv::Error| Error::Format(e.to_string());
    for e in &ds.examples {
        let (title, description) = split_title(&e.text);
        w.write_record([(e.label + 1).to_string().as_str(), title, description])
            .map_err(fmt_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

// Splits at the first space when something follows it, so that the loader's
// join reproduces the text exactly.
fn split_title(text: &str) -> (&str, &str) {
    match text.find(' ') {
        Some(i) if i + 1 < text.len() => (&text[..i], &text[i + 1..]),
        _ => (text, ""),
    }
}

/// Draws exactly `k` examples per class without replacement.
///
/// Each class's indices (in dataset order) are shuffled with a `ChaCha8Rng`
/// seeded from `seed`, classes processed in index order; the first `k` are
/// kept. Both outputs preserve dataset order.
pub fn kshot_sample(ds: &Dataset, k: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let counts = ds.class_counts();
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < k) {
        return Err(Error::Config(format!(
            "class {class} ({}) has {count} examples, k-shot needs {k}",
            ds.label_names[class]
        )));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, "kshot"));
    let mut chosen = vec![false; ds.len()];
    for class in 0..ds.n_classes() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.examples[i].label == class).collect();
        idx.shuffle(&mut r);
        for &i in idx.iter().take(k) {
            chosen[i] = true;
        }
    }
    let train: Vec<usize> = (0..ds.len()).filter(|&i| chosen[i]).collect();
    let rest: Vec<usize> = (0..ds.len()).filter(|&i| !chosen[i]).collect();
    Ok((ds.subset(&train), ds.subset(&rest)))
}

pub fn synth_signature_token(class: usize, j: usize) -> String {
    format!("c{class}sig{j}")
}

pub fn synth_shared_token(j: usize) -> String {
    format!("shared{j}")
}

/// Synthetic corpus: `per_class` texts for each of `classes` classes, laid out
/// class by class. Every text has [`SYNTH_TEXT_LEN`] tokens drawn i.i.d.: with
/// probability `overlap` uniformly from the shared pool, otherwise uniformly
/// from the class's own signature vocabulary.
pub fn synth_generate(classes: usize, per_class: usize, overlap: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || per_class < 1 {
        return Err(Error::Config(format!(
            "synthetic corpus needs C >= 2 and per_class >= 1 (got {classes}, {per_class})"
        )));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap must lie in [0, 1], got {overlap}")));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, "synth"));
    let mut examples = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        for _ in 0..per_class {
            let tokens: Vec<String> = (0..SYNTH_TEXT_LEN)
                .map(|_| {
                    if r.random::<f64>() < overlap {
                        synth_shared_token(r.random_range(0..SYNTH_SHARED_SIZE))
                    } else {
                        synth_signature_token(class, r.random_range(0..SYNTH_SIGNATURE_SIZE))
                    }
                })
                .collect();
            examples.push(Example {
                text: tokens.join(" "),
                label: class,
            });
        }
    }
    let names = (0..classes).map(|c| format!("class{c}")).collect();
    Dataset::new(examples, names)
}
