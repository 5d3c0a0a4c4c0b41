use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use structprompt::experiments::{cmd_eval, cmd_sweep, cmd_train, RunConfig, SweepAxis};

#[derive(Parser)]
#[command(name = "structprompt", version, about = "Structured-prompt few-shot text classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a k-shot sample and evaluate on the remaining examples.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set lr=0.05` or `--set data.synth.rho=0.2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an AG News style CSV with a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one hyperparameter over a grid, several seeds per value.
    Sweep {
        /// lr, prompt_len or data_scale.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated values; defaults to the config's [sweep] grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Run grid points concurrently. Output is identical to a serial run.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, set, out } => {
            let cfg = RunConfig::from_file(&config, &set).with_context(|| format!("loading {}", config.display()))?;
            let outcome = cmd_train(&cfg, &out)?;
            match &outcome.report {
                Some(r) => println!(
                    "trained on {} examples; accuracy {:.4}, macro F1 {:.4} on {} held-out",
                    outcome.n_train, r.accuracy, r.macro_f1, outcome.n_eval
                ),
                None => println!("trained on {} examples; nothing held out", outcome.n_train),
            }
        }
        Command::Eval { checkpoint, data, out } => {
            let ev = cmd_eval(&checkpoint, &data, &out)?;
            println!(
                "{} examples; accuracy {:.4}, macro F1 {:.4}",
                ev.golds.len(),
                ev.report.accuracy,
                ev.report.macro_f1
            );
        }
        Command::Sweep {
            axis,
            config,
            grid,
            seeds,
            set,
            parallel,
            out,
        } => {
            let cfg = RunConfig::from_file(&config, &set).with_context(|| format!("loading {}", config.display()))?;
            let rows = cmd_sweep(&cfg, axis, grid.as_deref(), seeds, parallel, &out)?;
            let diverged = rows.iter().filter(|r| r.metrics.is_none()).count();
            println!("{} runs ({} diverged) written to {}", rows.len(), diverged, out.display());
        }
    }
    Ok(())
}
