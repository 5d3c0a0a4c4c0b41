//! `train` and `eval`.
//!
//! `train` writes `checkpoint.json`, `metrics.json` (evaluated on the
//! examples left over after k-shot sampling) and `loss_trace.csv`. `eval`
//! writes `metrics.json` and `predictions.csv`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::{to_json_bytes, write_file, FORMAT_VERSION};
use crate::autodiff::Matrix;
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::model::{fit, predict_proba, Batch, EpochRecord, ModelState};

pub const METRICS_FORMAT: &str = "structprompt-metrics";
pub const LOSS_TRACE_HEADER: &str = "epoch,task_loss,align_loss,reg_loss,total_loss";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: ModelState,
    pub trace: Vec<EpochRecord>,
    pub n_train: usize,
    pub n_eval: usize,
    /// `None` when k-shot sampling left nothing to evaluate on.
    pub report: Option<MetricsReport>,
}

#[derive(Serialize)]
struct TrainMetricsDoc<'a> {
    format: &'static str,
    version: u32,
    config: &'a RunConfig,
    n_train: usize,
    n_eval: usize,
    report: &'a Option<MetricsReport>,
}

#[derive(Serialize)]
struct EvalMetricsDoc<'a> {
    format: &'static str,
    version: u32,
    config: &'a RunConfig,
    data: String,
    n_eval: usize,
    report: &'a MetricsReport,
}

/// Samples `k_shot` examples per class with the run seed, trains on them and
/// evaluates on the rest.
pub fn train_and_evaluate(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let (train, rest) = data::kshot_sample(&ds, cfg.train.k_shot, cfg.train.seed)?;
    let encoder = cfg.build_encoder()?;
    let attrs = cfg.attribute_lists(ds.label_names())?;
    let mut state = ModelState::init(&cfg.train, encoder, ds.label_names(), attrs.as_deref())?;
    let trace = fit(&mut state, &train, &cfg.train, |_| {})?;
    let report = if rest.is_empty() {
        None
    } else {
        Some(evaluate_on(&state, &rest)?.0)
    };
    Ok(RunOutcome {
        n_train: train.len(),
        n_eval: rest.len(),
        state,
        trace,
        report,
    })
}

fn evaluate_on(state: &ModelState, ds: &Dataset) -> Result<(MetricsReport, Batch, Matrix)> {
    let batch = Batch::encode(&state.encoder, ds.examples())?;
    let probs = predict_proba(state, &batch.features)?;
    let report = metrics::evaluate(&batch.golds, &probs)?;
    Ok((report, batch, probs))
}

pub fn loss_trace_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::from(LOSS_TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.task_loss, r.align_loss, r.reg_loss, r.total_loss
        );
    }
    out
}

pub fn cmd_train(cfg: &RunConfig, out_dir: impl AsRef<Path>) -> Result<RunOutcome> {
    let out = out_dir.as_ref();
    let outcome = train_and_evaluate(cfg)?;
    Checkpoint::from_state(&outcome.state, cfg).save(out.join("checkpoint.json"))?;
    let doc = TrainMetricsDoc {
        format: METRICS_FORMAT,
        version: FORMAT_VERSION,
        config: cfg,
        n_train: outcome.n_train,
        n_eval: outcome.n_eval,
        report: &outcome.report,
    };
    write_file(&out.join("metrics.json"), &to_json_bytes(&doc))?;
    write_file(&out.join("loss_trace.csv"), loss_trace_csv(&outcome.trace).as_bytes())?;
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub golds: Vec<usize>,
    pub probs: Matrix,
}

/// Scores an AG News style CSV with a saved model.
pub fn cmd_eval(
    checkpoint: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
) -> Result<EvalOutcome> {
    let ck = Checkpoint::load(checkpoint)?;
    let state = ck.to_state()?;
    let ds = data::load_agnews_csv(data_path.as_ref())?;
    if ds.n_classes() != state.n_classes() {
        return Err(Error::Compatibility(format!(
            "checkpoint has {} labels, data has {}",
            state.n_classes(),
            ds.n_classes()
        )));
    }
    if ds.is_empty() {
        return Err(Error::Evaluation("no examples to evaluate".into()));
    }
    let (report, batch, probs) = evaluate_on(&state, &ds)?;
    let out = out_dir.as_ref();
    let doc = EvalMetricsDoc {
        format: METRICS_FORMAT,
        version: FORMAT_VERSION,
        config: &ck.config,
        data: data_path.as_ref().display().to_string(),
        n_eval: ds.len(),
        report: &report,
    };
    write_file(&out.join("metrics.json"), &to_json_bytes(&doc))?;
    write_file(&out.join("predictions.csv"), predictions_csv(&batch.golds, &probs).as_bytes())?;
    Ok(EvalOutcome {
        report,
        golds: batch.golds,
        probs,
    })
}

pub fn predictions_csv(golds: &[usize], probs: &Matrix) -> String {
    let mut out = String::from("index,gold,pred");
    for c in 0..probs.cols() {
        let _ = write!(out, ",p_{c}");
    }
    out.push('\n');
    for (i, g) in golds.iter().enumerate() {
        let _ = write!(out, "{i},{g},{}", probs.argmax_row(i));
        for p in probs.row(i) {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}
