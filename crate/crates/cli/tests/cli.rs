use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structprompt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "V = 256\nd_h = 8\nd_z = 8\nd_e = 8\nn_prompts = 4\nepochs = 10\nk_shot = 3\n\
         [data.synth]\nC = 4\nper_class = 8\nrho = 0.1\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_eval_sweep_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();

    let out = run(&["train", "--config", &cfg, "--set", "lr=0.05", "--out", &p("train")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["checkpoint.json", "metrics.json", "loss_trace.csv"] {
        assert!(dir.path().join("train").join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("train/metrics.json")).unwrap();
    assert!(metrics.contains("\"lr\": 0.05"));

    // AG News style file for eval
    let csv = p("data.csv");
    std::fs::write(&csv, "\"1\",\"c0sig1 c0sig2\",\"\"\n\"3\",\"c2sig4\",\"shared1\"\n").unwrap();
    let out = run(&["eval", "--checkpoint", &p("train/checkpoint.json"), "--data", &csv, "--out", &p("eval")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let preds = std::fs::read_to_string(dir.path().join("eval/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 3);

    let out = run(&[
        "sweep", "--axis", "prompt_len", "--config", &cfg, "--grid", "2,3", "--seeds", "2", "--parallel", "--out",
        &p("sweep"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("sweep/sweep_prompt_len.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
    assert!(dir.path().join("sweep/sweep_prompt_len_summary.csv").exists());
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("o");
    let out_dir = out_dir.to_str().unwrap();

    let bad = run(&["train", "--config", &cfg, "--set", "bogus=1", "--out", out_dir]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bogus"));

    let missing = run(&["eval", "--checkpoint", "/nonexistent.json", "--data", "/nonexistent.csv", "--out", out_dir]);
    assert!(!missing.status.success());

    let axis = run(&["sweep", "--axis", "depth", "--config", &cfg, "--out", out_dir]);
    assert!(!axis.status.success());
}
