//! One-axis sensitivity sweeps.
//!
//! Every (grid value, seed index) pair is an independent train+eval run with
//! seed `fnv1a(base_seed ‖ value bits ‖ run index)`, so runs can execute in
//! any order or concurrently. Rows are always written in grid order, then
//! seed order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::commands::train_and_evaluate;
use super::config::RunConfig;
use super::{to_json_bytes, write_file, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::rng::fnv1a;

pub const SWEEP_FORMAT: &str = "structprompt-sweep";
pub const SWEEP_HEADER: &str = "axis_value,seed,accuracy,macro_precision,macro_recall,macro_f1,macro_auc";
pub const SUMMARY_HEADER: &str =
    "axis_value,runs,diverged,accuracy,macro_precision,macro_recall,macro_f1,macro_auc";
pub const DIVERGED: &str = "diverged";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lr,
    PromptLen,
    DataScale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Lr => "lr",
            SweepAxis::PromptLen => "prompt_len",
            SweepAxis::DataScale => "data_scale",
        }
    }

    pub fn default_grid(self, cfg: &RunConfig) -> Vec<f64> {
        match self {
            SweepAxis::Lr => cfg.sweep.lr.clone(),
            SweepAxis::PromptLen => cfg.sweep.prompt_len.clone(),
            SweepAxis::DataScale => cfg.sweep.data_scale.clone(),
        }
    }

    /// Sets the swept hyperparameter: `lr`, `n_prompts` or `k_shot`.
    pub fn apply(self, cfg: &mut RunConfig, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v.fract() == 0.0 && v >= 1.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} grid values must be positive integers, got {v}", self.name())))
            }
        };
        match self {
            SweepAxis::Lr => cfg.train.lr = value,
            SweepAxis::PromptLen => cfg.train.n_prompts = count(value)?,
            SweepAxis::DataScale => cfg.train.k_shot = count(value)?,
        }
        cfg.validate()
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(SweepAxis::Lr),
            "prompt_len" => Ok(SweepAxis::PromptLen),
            "data_scale" => Ok(SweepAxis::DataScale),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (lr, prompt_len, data_scale)"))),
        }
    }
}

pub fn sweep_seed(base_seed: u64, value: f64, run_index: usize) -> u64 {
    let mut bytes = Vec::with_capacity(24);
    bytes.extend_from_slice(&base_seed.to_le_bytes());
    bytes.extend_from_slice(&value.to_bits().to_le_bytes());
    bytes.extend_from_slice(&(run_index as u64).to_le_bytes());
    fnv1a(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_auc: f64,
}

impl SweepMetrics {
    fn as_array(&self) -> [f64; 5] {
        [self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1, self.macro_auc]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    /// `None` when training diverged.
    pub metrics: Option<SweepMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub axis_value: f64,
    pub runs: usize,
    pub diverged: usize,
    /// Means over the runs that did not diverge.
    pub mean: Option<SweepMetrics>,
}

fn run_point(cfg: &RunConfig, axis: SweepAxis, value: f64, run_index: usize) -> Result<SweepRow> {
    let mut c = cfg.clone();
    axis.apply(&mut c, value)?;
    let seed = sweep_seed(cfg.train.seed, value, run_index);
    c.train.seed = seed;
    let metrics = match train_and_evaluate(&c) {
        Ok(out) => {
            let r = out
                .report
                .ok_or_else(|| Error::Evaluation(format!("{}={value}: no examples left after k-shot sampling", axis.name())))?;
            Some(SweepMetrics {
                accuracy: r.accuracy,
                macro_precision: r.macro_precision,
                macro_recall: r.macro_recall,
                macro_f1: r.macro_f1,
                macro_auc: r.macro_auc.unwrap_or(f64::NAN),
            })
        }
        Err(Error::Divergence { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(SweepRow {
        axis_value: value,
        seed,
        metrics,
    })
}

/// Runs every grid point. Results are identical whether `parallel` or not.
pub fn run_sweep(cfg: &RunConfig, axis: SweepAxis, grid: &[f64], seeds: usize, parallel: bool) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if seeds == 0 {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    for &v in grid {
        axis.apply(&mut cfg.clone(), v)?;
    }
    let jobs: Vec<(f64, usize)> = grid.iter().flat_map(|&v| (0..seeds).map(move |s| (v, s))).collect();
    let run = |&(v, s): &(f64, usize)| run_point(cfg, axis, v, s);
    if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    }
}

pub fn summarize(grid: &[f64], rows: &[SweepRow]) -> Vec<SweepSummaryRow> {
    grid.iter()
        .map(|&v| {
            let here: Vec<&SweepRow> = rows.iter().filter(|r| r.axis_value.to_bits() == v.to_bits()).collect();
            let ok: Vec<[f64; 5]> = here.iter().filter_map(|r| r.metrics.map(|m| m.as_array())).collect();
            let mean = (!ok.is_empty()).then(|| {
                let mut acc = [0.0; 5];
                for m in &ok {
                    for (a, x) in acc.iter_mut().zip(m) {
                        *a += x;
                    }
                }
                let n = ok.len() as f64;
                SweepMetrics {
                    accuracy: acc[0] / n,
                    macro_precision: acc[1] / n,
                    macro_recall: acc[2] / n,
                    macro_f1: acc[3] / n,
                    macro_auc: acc[4] / n,
                }
            });
            SweepSummaryRow {
                axis_value: v,
                runs: here.len(),
                diverged: here.len() - ok.len(),
                mean,
            }
        })
        .collect()
}

fn write_metrics(out: &mut String, m: Option<SweepMetrics>) {
    match m {
        Some(m) => {
            for x in m.as_array() {
                let _ = write!(out, ",{x}");
            }
        }
        None => {
            for _ in 0..5 {
                let _ = write!(out, ",{DIVERGED}");
            }
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.axis_value, r.seed);
        write_metrics(&mut out, r.metrics);
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[SweepSummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.axis_value, r.runs, r.diverged);
        write_metrics(&mut out, r.mean);
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    format: &'static str,
    version: u32,
    axis: SweepAxis,
    grid: &'a [f64],
    seeds: usize,
    config: &'a RunConfig,
    rows: &'a [SweepRow],
    summary: &'a [SweepSummaryRow],
}

/// Runs the sweep and writes `sweep_<axis>.csv`, `sweep_<axis>_summary.csv`
/// and `sweep_<axis>.json`. `grid` and `seeds` default to the config's
/// `[sweep]` table.
pub fn cmd_sweep(
    cfg: &RunConfig,
    axis: SweepAxis,
    grid: Option<&[f64]>,
    seeds: Option<usize>,
    parallel: bool,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<SweepRow>> {
    let grid = grid.map(<[f64]>::to_vec).unwrap_or_else(|| axis.default_grid(cfg));
    let seeds = seeds.unwrap_or(cfg.sweep.seeds);
    let rows = run_sweep(cfg, axis, &grid, seeds, parallel)?;
    let summary = summarize(&grid, &rows);
    let out = out_dir.as_ref();
    let name = axis.name();
    write_file(&out.join(format!("sweep_{name}.csv")), sweep_csv(&rows).as_bytes())?;
    write_file(&out.join(format!("sweep_{name}_summary.csv")), summary_csv(&summary).as_bytes())?;
    let doc = SweepDoc {
        format: SWEEP_FORMAT,
        version: FORMAT_VERSION,
        axis,
        grid: &grid,
        seeds,
        config: cfg,
        rows: &rows,
        summary: &summary,
    };
    write_file(&out.join(format!("sweep_{name}.json")), &to_json_bytes(&doc))?;
    Ok(rows)
}
