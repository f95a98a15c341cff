use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dppal(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_dppal")).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "dppal {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SMALL: &[&str] = &[
    "--synthetic-train",
    "120",
    "--synthetic-test",
    "30",
    "--n-seed",
    "6",
    "--sentence-budget",
    "80",
    "--token-budget",
    "20",
    "--rounds",
    "2",
    "--repeats",
    "2",
    "--epochs",
    "3",
];

#[test]
fn run_writes_every_output_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--out", "r", "--dpp", "--checkpoints"];
    args.extend_from_slice(SMALL);
    dppal(&args, dir.path());
    let r = dir.path().join("r");
    let curves = fs::read_to_string(r.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "round,strategy,use_dpp,mean_las,std_las,mean_uas,std_uas");
    assert_eq!(curves.lines().count(), 4);
    assert!(curves.lines().nth(1).unwrap().starts_with("0,amp,true,"));
    assert!(fs::read_to_string(r.join("diversity.csv")).unwrap().contains(",subgraph,"));
    let selections = fs::read_to_string(r.join("selections.jsonl")).unwrap();
    assert_eq!(selections.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(selections.lines().next().unwrap()).unwrap();
    assert!(first["sentences"].is_array() && first["tokens"].is_array());
    let model = fs::read_to_string(r.join("checkpoints/model-rep0-round001.json")).unwrap();
    assert!(model.contains("dppal-parser-weights"));

    let saved = fs::read_to_string(r.join("config.toml")).unwrap();
    fs::write(dir.path().join("cfg.toml"), &saved).unwrap();
    dppal(
        &["run", "--config", "cfg.toml", "--resume", "r/checkpoints/pool-rep1-round001.json", "--repeat", "1", "--out", "resumed"],
        dir.path(),
    );
    let resumed = fs::read_to_string(dir.path().join("resumed/selections.jsonl")).unwrap();
    assert_eq!(resumed.lines().count(), 1);
    assert_eq!(resumed.lines().next(), selections.lines().last());
}

#[test]
fn config_files_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"strategy": "random", "rounds": 1, "synthetic_train": 100, "synthetic_test": 20, "repeats": 1}"#,
    )
    .unwrap();
    dppal(&["run", "--config", "c.json", "--n-seed", "5", "--epochs", "2", "--out", "o"], dir.path());
    let saved = fs::read_to_string(dir.path().join("o/config.toml")).unwrap();
    assert!(saved.contains("strategy = \"random\"") && saved.contains("n_seed_sentences = 5") && saved.contains("epochs = 2"));
    let bad = Command::new(env!("CARGO_BIN_EXE_dppal")).args(["run", "--strategy", "nope"]).current_dir(dir.path()).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--out", "s", "--strategies", "random,amp", "--repeats", "1"];
    args.extend_from_slice(&SMALL[..SMALL.len() - 4]);
    args.extend_from_slice(&["--epochs", "3"]);
    dppal(&args, dir.path());
    for arm in ["random-nodpp", "random-dpp", "amp-nodpp", "amp-dpp"] {
        assert!(dir.path().join("s").join(arm).join("curves.csv").is_file(), "{arm}");
    }
    let out = dppal(&["report", "s", "--out", "all.csv"], dir.path());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("amp+dpp") && table.contains("| 2 |"));
    assert_eq!(fs::read_to_string(dir.path().join("all.csv")).unwrap().lines().count(), 1 + 4 * 3);
}

#[test]
fn synth_then_run_and_dump_on_conllu() {
    let dir = tempfile::tempdir().unwrap();
    dppal(&["synth", "--train", "100", "--test", "20", "--out", "data"], dir.path());
    let common = ["--corpus", "data/train.conllu", "--test", "data/test.conllu", "--n-seed", "5", "--epochs", "2"];
    let mut args = vec!["run", "--rounds", "1", "--repeats", "1", "--sentence-budget", "60", "--token-budget", "10", "--out", "o"];
    args.extend_from_slice(&common);
    dppal(&args, dir.path());
    let mut args = vec!["dump", "--out", "d"];
    args.extend_from_slice(&common);
    dppal(&args, dir.path());
    let quality = fs::read_to_string(dir.path().join("d/quality.csv")).unwrap();
    assert_eq!(quality.lines().count(), 1 + 95);
    for f in ["features-averaged.csv", "features-subgraph.csv", "model.json"] {
        assert!(dir.path().join("d").join(f).is_file(), "{f}");
    }
}
