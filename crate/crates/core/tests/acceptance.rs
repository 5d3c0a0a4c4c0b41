//! End-to-end acceptance criteria. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structprompt::autodiff::{grad_check, Matrix, Tape, Var};
use structprompt::data::{kshot_sample, synth_generate, Dataset};
use structprompt::experiments::sweep::{summarize, SWEEP_HEADER};
use structprompt::experiments::{
    cmd_sweep, cmd_train, run_sweep, sweep_seed, train_and_evaluate, RunConfig, SweepAxis, SynthSpec,
};
use structprompt::label_space::{AlignMode, LabelVars};
use structprompt::metrics::{confusion_metrics, macro_auc};
use structprompt::model::{fit, project_features, total_loss, Batch, ModelState, ParamVars, TrainConfig};
use structprompt::prompt_bank::{orthogonality_penalty_of, PromptVars};
use structprompt::text_encoder::EncoderTable;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const GRAD_TOL: f64 = 1e-4;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(10);
const ORTHO_TARGET: f64 = 0.05;
const SEPARABLE_ACC: f64 = 0.95;
const SEPARABLE_AUC: f64 = 0.98;
const SEPARABLE_TIME_LIMIT: Duration = Duration::from_secs(60);

fn verdict(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn synth_cfg(classes: usize, per_class: usize, rho: f64, k: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.csv = None;
    cfg.data.synth = Some(SynthSpec {
        classes,
        per_class,
        rho,
        seed: 0,
    });
    cfg.train.k_shot = k;
    cfg
}

fn init_state(cfg: &RunConfig, ds: &Dataset) -> ModelState {
    let enc = cfg.build_encoder().unwrap();
    ModelState::init(&cfg.train, enc, ds.label_names(), None).unwrap()
}

// 1. Gradient fidelity of the full joint loss over every trainable matrix.
fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut summary = Vec::new();
    for (mode, attributes) in [
        (AlignMode::Contrastive, false),
        (AlignMode::Literal, false),
        (AlignMode::Contrastive, true),
    ] {
        let cfg = TrainConfig {
            vocab_size: 512,
            d_h: 8,
            d_z: 8,
            d_e: 8,
            n_prompts: 4,
            lambda1: 0.7,
            lambda2: 0.3,
            align_mode: mode,
            seed: 11,
            ..Default::default()
        };
        let ds = synth_generate(4, 6, 0.3, 5).unwrap();
        // six examples covering every class
        let picked: Vec<_> = [0usize, 6, 12, 18, 1, 13].iter().map(|&i| ds.examples()[i].clone()).collect();
        let enc = EncoderTable::seeded(cfg.seed, cfg.vocab_size, cfg.d_h).unwrap();
        let attrs: Option<Vec<Vec<String>>> = attributes.then(|| {
            vec![
                vec!["a".into(), "shared".into()],
                vec!["b".into(), "shared".into()],
                vec!["c".into()],
                vec!["d".into(), "a".into()],
            ]
        });
        let state = ModelState::init(&cfg, enc, ds.label_names(), attrs.as_deref()).unwrap();
        let batch = Batch::encode(&state.encoder, &picked).unwrap();
        let q = state.labels.indicators.clone();
        let params: Vec<Matrix> = state.registry().iter().map(|(_, m)| (*m).clone()).collect();
        let report = grad_check(&params, |tape: &mut Tape, v: &[Var]| {
            let vars = ParamVars {
                bank: PromptVars {
                    prompts: v[0],
                    keys: v[1],
                    fusion_weight: v[2],
                    fusion_bias: v[3],
                },
                labels: LabelVars {
                    indicators: tape.constant(q.clone()),
                    attribute_embeddings: v[4],
                    projection: v[5],
                },
            };
            Ok(total_loss(tape, &vars, &batch, &cfg)?.total)
        })
        .map_err(|e| e.to_string())?;
        worst = worst.max(report.max_rel_error);
        let tag = if attributes { "+attrs" } else { "" };
        summary.push(format!("{mode:?}{tag}={:.2e}", report.max_rel_error));
    }
    let elapsed = start.elapsed();
    let msg = format!("max rel error {worst:.3e} [{}], {elapsed:.2?}", summary.join(", "));
    verdict(worst < GRAD_TOL && elapsed < GRAD_TIME_LIMIT, msg)
}

// 2. The soft orthogonality term keeps prompt factors near-orthogonal.
fn orthogonality_efficacy() -> Outcome {
    let mut cfg = synth_cfg(4, 50, 0.2, 8);
    cfg.train.epochs = 200;
    let ds = cfg.load_dataset().unwrap();
    let (train, _) = kshot_sample(&ds, 8, cfg.train.seed).unwrap();
    let mut finals = Vec::new();
    for lambda2 in [0.1, 0.0] {
        let mut c = cfg.train.clone();
        c.lambda2 = lambda2;
        let mut state = init_state(&cfg, &ds);
        fit(&mut state, &train, &c, |_| {}).map_err(|e| e.to_string())?;
        finals.push(orthogonality_penalty_of(&state.bank.prompts).unwrap());
    }
    let msg = format!("penalty λ2=0.1: {:.5}, λ2=0: {:.5}", finals[0], finals[1]);
    verdict(finals[0] < ORTHO_TARGET && finals[0] <= finals[1], msg)
}

// 3. A separable corpus is learned from 16 shots with default settings.
fn separable_learning() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let start = Instant::now();
        let mut cfg = synth_cfg(4, 100, 0.0, 16);
        cfg.train.seed = seed;
        let out = train_and_evaluate(&cfg).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let r = out.report.ok_or("nothing held out")?;
        let auc = r.macro_auc.unwrap_or(f64::NAN);
        ok &= r.accuracy >= SEPARABLE_ACC && auc >= SEPARABLE_AUC && elapsed < SEPARABLE_TIME_LIMIT;
        lines.push(format!("seed {seed}: acc {:.4} auc {:.4} ({elapsed:.1?})", r.accuracy, auc));
    }
    verdict(ok, lines.join("; "))
}

fn class_mean_spread(state: &ModelState, ds: &Dataset) -> f64 {
    let batch = Batch::encode(&state.encoder, ds.examples()).unwrap();
    let u = project_features(state, &batch.features).unwrap();
    let c = ds.n_classes();
    let mut means = vec![vec![0.0; u.cols()]; c];
    let mut counts = vec![0usize; c];
    for (i, &g) in batch.golds.iter().enumerate() {
        counts[g] += 1;
        for (m, x) in means[g].iter_mut().zip(u.row(i)) {
            *m += x;
        }
    }
    for (m, n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|x| *x /= *n as f64);
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..c {
        for b in a + 1..c {
            let d2: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum();
            total += d2.sqrt();
            pairs += 1;
        }
    }
    total / pairs as f64
}

// 4. Literal alignment pulls every projection toward all label embeddings at
// once, shrinking the gaps between class means.
fn literal_collapse() -> Outcome {
    let mut cfg = synth_cfg(4, 50, 0.2, 16);
    cfg.train.align_mode = AlignMode::Literal;
    let ds = cfg.load_dataset().unwrap();
    let (train, _) = kshot_sample(&ds, 16, cfg.train.seed).unwrap();
    let mut spreads = Vec::new();
    for lambda1 in [10.0, 0.0] {
        let mut c = cfg.train.clone();
        c.lambda1 = lambda1;
        let mut state = init_state(&cfg, &ds);
        fit(&mut state, &train, &c, |_| {}).map_err(|e| e.to_string())?;
        spreads.push(class_mean_spread(&state, &ds));
    }
    let msg = format!("class-mean spread λ1=10: {:.5}, λ1=0: {:.5}", spreads[0], spreads[1]);
    verdict(spreads[0] < spreads[1], msg)
}

fn auc_oracle(golds: &[usize], probs: &Matrix) -> f64 {
    let mut per_class = Vec::new();
    for c in 0..probs.cols() {
        let pos = golds.iter().filter(|&&g| g == c).count() as u64;
        let neg = golds.len() as u64 - pos;
        let mut half = 0u64;
        for i in (0..golds.len()).filter(|&i| golds[i] == c) {
            for j in (0..golds.len()).filter(|&j| golds[j] != c) {
                let (si, sj) = (probs.get(i, c), probs.get(j, c));
                half += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
        if pos > 0 && neg > 0 {
            per_class.push(half as f64 / (2 * pos * neg) as f64);
        }
    }
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

fn confusion_oracle(golds: &[usize], preds: &[usize], c: usize) -> (f64, f64, f64, f64) {
    let mut m = vec![vec![0usize; c]; c];
    for (&g, &p) in golds.iter().zip(preds) {
        m[g][p] += 1;
    }
    let diag: usize = (0..c).map(|k| m[k][k]).sum();
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for (k, counts) in m.iter().enumerate() {
        let col: usize = m.iter().map(|r| r[k]).sum();
        let row: usize = counts.iter().sum();
        let p = if col == 0 { 0.0 } else { counts[k] as f64 / col as f64 };
        let r = if row == 0 { 0.0 } else { counts[k] as f64 / row as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        ps += p;
        rs += r;
        fs += f;
    }
    let n = c as f64;
    (diag as f64 / golds.len() as f64, ps / n, rs / n, fs / n)
}

// 5. Metrics agree exactly with brute-force oracles.
fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (n, c) = (200, 4);
    let mut mismatches = 0;
    for trial in 0..100 {
        let golds: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        // coarse scores force plenty of ties
        let levels = if trial % 2 == 0 { 7 } else { 1000 };
        let values: Vec<f64> = (0..n * c).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let probs = Matrix::from_vec(n, c, values).unwrap();
        let got = macro_auc(&golds, &probs).map_err(|e| e.to_string())?.macro_auc;
        if got != auc_oracle(&golds, &probs) {
            mismatches += 1;
        }
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let r = confusion_metrics(&golds, &preds, c).map_err(|e| e.to_string())?;
        if (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1) != confusion_oracle(&golds, &preds, c) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} mismatches over 100 AUC + 100 confusion trials"))
}

fn read(path: std::path::PathBuf) -> Vec<u8> {
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

// 6. Same config, same bytes; parallel sweeps equal serial ones.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = synth_cfg(4, 30, 0.2, 8);
    cfg.train.epochs = 50;
    cfg.train.seed = 9;
    for run in ["a", "b"] {
        cmd_train(&cfg, dir.path().join(run)).map_err(|e| e.to_string())?;
    }
    let mut same = Vec::new();
    for f in ["checkpoint.json", "metrics.json", "loss_trace.csv"] {
        same.push(read(dir.path().join("a").join(f)) == read(dir.path().join("b").join(f)));
    }
    let grid = [0.005, 0.02, 0.08];
    for (name, parallel) in [("serial", false), ("parallel", true)] {
        cmd_sweep(&cfg, SweepAxis::Lr, Some(&grid), Some(1), parallel, dir.path().join(name))
            .map_err(|e| e.to_string())?;
    }
    for f in ["sweep_lr.csv", "sweep_lr_summary.csv", "sweep_lr.json"] {
        same.push(read(dir.path().join("serial").join(f)) == read(dir.path().join("parallel").join(f)));
    }
    let msg = format!(
        "train outputs identical {:?}; sweep parallel == serial {:?}",
        &same[..3],
        &same[3..]
    );
    verdict(same.iter().all(|&s| s), msg)
}

// 7. Too large a learning rate hurts.
fn large_lr_hurts() -> Outcome {
    let cfg = synth_cfg(4, 100, 0.2, 16);
    let grid = [1e-3, 1e-2, 1e-1, 5e-1, 1.0];
    let rows = run_sweep(&cfg, SweepAxis::Lr, &grid, 3, true).map_err(|e| e.to_string())?;
    let summary = summarize(&grid, &rows);
    // a diverged run scores chance accuracy
    let chance = 1.0 / 4.0;
    let means: Vec<f64> = grid
        .iter()
        .map(|&v| {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.axis_value == v)
                .map(|r| r.metrics.map_or(chance, |m| m.accuracy))
                .collect();
            accs.iter().sum::<f64>() / accs.len() as f64
        })
        .collect();
    let best_mid = means[1..4].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let diverged: usize = summary.iter().map(|s| s.diverged).sum();
    let table: Vec<String> = grid.iter().zip(&means).map(|(g, m)| format!("{g}:{m:.4}")).collect();
    let msg = format!(
        "mean acc {}; best mid {best_mid:.4} vs lr=1 {:.4}; {diverged} diverged",
        table.join(" "),
        means[4]
    );
    verdict(means[4] < best_mid, msg)
}

fn check_sweep_csv(text: &str, grid: &[f64], seeds: usize, base_seed: u64) -> Result<usize, String> {
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        return Err("bad header".into());
    }
    let rows: Vec<&str> = lines.collect();
    if rows.len() != grid.len() * seeds {
        return Err(format!("{} rows, expected {}", rows.len(), grid.len() * seeds));
    }
    let mut diverged = 0;
    for (i, row) in rows.iter().enumerate() {
        let (v, s) = (grid[i / seeds], i % seeds);
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 7 {
            return Err(format!("row {i}: {} fields", f.len()));
        }
        if f[0].parse::<f64>() != Ok(v) || f[1].parse::<u64>() != Ok(sweep_seed(base_seed, v, s)) {
            return Err(format!("row {i}: out of order ({row})"));
        }
        if f[2..].iter().all(|x| *x == "diverged") {
            diverged += 1;
            continue;
        }
        for x in &f[2..] {
            match x.parse::<f64>() {
                Ok(val) if val.is_finite() && (0.0..=1.0).contains(&val) => {}
                _ => return Err(format!("row {i}: bad metric {x:?}")),
            }
        }
    }
    Ok(diverged)
}

// 8. Default lr and prompt-length grids produce well-formed sweep tables.
fn sweep_contract() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = synth_cfg(4, 100, 0.2, 16);
    let mut parts = Vec::new();
    for axis in [SweepAxis::Lr, SweepAxis::PromptLen] {
        let grid = axis.default_grid(&cfg);
        cmd_sweep(&cfg, axis, None, None, true, dir.path()).map_err(|e| e.to_string())?;
        let text = String::from_utf8(read(dir.path().join(format!("sweep_{}.csv", axis.name())))).unwrap();
        let diverged = check_sweep_csv(&text, &grid, cfg.sweep.seeds, cfg.train.seed)
            .map_err(|e| format!("{}: {e}", axis.name()))?;
        parts.push(format!("{} {:?} x {} seeds ({diverged} diverged)", axis.name(), grid, cfg.sweep.seeds));
    }
    Ok(parts.join("; "))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("orthogonality efficacy", orthogonality_efficacy),
        ("separable learning", separable_learning),
        ("literal-mode collapse", literal_collapse),
        ("metric oracles", metric_oracles),
        ("determinism", determinism),
        ("large learning rate hurts", large_lr_hurts),
        ("sweep artifact contract", sweep_contract),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("criterion {} PASS {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
