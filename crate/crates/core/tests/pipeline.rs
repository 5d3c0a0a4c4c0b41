use std::fmt::Write as _;

use structprompt::data::{self, synth_signature_token};
use structprompt::experiments::{cmd_eval, cmd_train, Checkpoint, RunConfig, FORMAT_VERSION};
use structprompt::model::{predict_proba, Batch, PARAM_NAMES};
use structprompt::Error;

const SMALL: &str = "V = 512\nd_h = 8\nd_z = 8\nd_e = 8\nn_prompts = 4\nepochs = 40\nk_shot = 4\nlr = 0.05\n\
                     [data.synth]\nC = 4\nper_class = 12\nrho = 0.1\n";

fn vectors_file(dir: &std::path::Path, dim: usize) -> std::path::PathBuf {
    let mut text = format!("{} {dim}\n", 4 * 20);
    for c in 0..4 {
        for j in 0..20 {
            let _ = write!(text, "{}", synth_signature_token(c, j).to_uppercase());
            for d in 0..dim {
                let v = if d % 4 == c { 1.0 } else { 0.0 } + 0.01 * j as f64;
                let _ = write!(text, " {v}");
            }
            text.push('\n');
        }
    }
    let path = dir.join("vectors.txt");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn reloaded_checkpoint_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml_str(SMALL, &[]).unwrap();
    let out = cmd_train(&cfg, dir.path()).unwrap();
    let state = Checkpoint::load(dir.path().join("checkpoint.json")).unwrap().to_state().unwrap();
    assert_eq!(state, out.state);

    let ds = cfg.load_dataset().unwrap();
    let batch = Batch::encode(&state.encoder, ds.examples()).unwrap();
    let p_mem = predict_proba(&out.state, &batch.features).unwrap();

    let csv = dir.path().join("all.csv");
    data::write_agnews_csv(&ds, &csv).unwrap();
    let ev = cmd_eval(dir.path().join("checkpoint.json"), &csv, dir.path().join("eval")).unwrap();
    assert_eq!(ev.probs, p_mem);
}

#[test]
fn checkpoint_registry_excludes_frozen_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml_str(SMALL, &["epochs=2".into()]).unwrap();
    cmd_train(&cfg, dir.path()).unwrap();
    let ck = Checkpoint::load(dir.path().join("checkpoint.json")).unwrap();
    let names: Vec<&str> = ck.parameters.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, PARAM_NAMES);
    assert_eq!(ck.registry_order, PARAM_NAMES);
    assert_eq!(ck.version, FORMAT_VERSION);
    assert_eq!(ck.config, cfg);
}

#[test]
fn vector_file_encoder_is_pinned_by_digest() {
    let dir = tempfile::tempdir().unwrap();
    let vec_path = vectors_file(dir.path(), 8);
    let cfg = RunConfig::from_toml_str(SMALL, &[format!("vectors={:?}", vec_path.to_str().unwrap())]).unwrap();
    let out = cmd_train(&cfg, dir.path().join("run")).unwrap();
    // file tokens are uppercase; encoding lowercases, so every synth token is covered
    let r = out.report.unwrap();
    assert!(r.accuracy > 0.9, "{}", r.accuracy);

    let ck_path = dir.path().join("run/checkpoint.json");
    assert_eq!(Checkpoint::load(&ck_path).unwrap().to_state().unwrap(), out.state);

    let mut text = std::fs::read_to_string(&vec_path).unwrap();
    text = text.replacen(" 1 ", " 2 ", 1);
    std::fs::write(&vec_path, text).unwrap();
    assert!(matches!(
        Checkpoint::load(&ck_path).unwrap().to_state(),
        Err(Error::Compatibility(_))
    ));
}

#[test]
fn future_checkpoint_versions_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml_str(SMALL, &["epochs=0".into()]).unwrap();
    cmd_train(&cfg, dir.path()).unwrap();
    let path = dir.path().join("checkpoint.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let bumped = text.replacen(&format!("\"version\": {FORMAT_VERSION}"), "\"version\": 2", 1);
    std::fs::write(&path, bumped).unwrap();
    let csv = dir.path().join("d.csv");
    std::fs::write(&csv, "\"1\",\"a\",\"b\"\n").unwrap();
    assert!(matches!(
        cmd_eval(&path, &csv, dir.path().join("e")),
        Err(Error::Version { found: 2, expected: 1 })
    ));
}

#[test]
fn malformed_csv_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "\"1\",\"ok\",\"fine\"\n\"7\",\"bad\",\"class\"\n").unwrap();
    match data::load_agnews_csv(&csv) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    std::fs::write(&csv, "\"2\",\"...\",\"!!\"\n").unwrap();
    assert!(matches!(data::load_agnews_csv(&csv), Err(Error::Parse { line: 1, .. })));
}
