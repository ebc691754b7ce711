use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: [&str; 14] = [
    "--epochs",
    "3",
    "--d-model",
    "8",
    "--layers",
    "1",
    "--heads",
    "2",
    "--d-ff",
    "16",
    "--max-len",
    "12",
    "--lr",
    "2e-3",
];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emoblend"))
        .current_dir(dir)
        .env_remove("EMOBLEND_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the parsed stderr JSON of a failing run.
fn fails(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = run(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    (out.status.code().unwrap(), err)
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--kind",
            "separable",
            "--seed",
            "1",
            "--out",
            "sep.csv",
        ],
    );
    ok(
        dir.path(),
        &["synth", "--kind", "lexicon", "--out", "lex.tsv"],
    );
    dir
}

fn train(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["train", "--dataset", "sep.csv", "--seed", "5", "--out", out];
    args.extend(TINY);
    args.extend(extra);
    ok(dir, &args);
}

#[test]
fn prepare_reports_counts_and_checks_manifests() {
    let dir = setup();
    let out = ok(
        dir.path(),
        &["prepare", "--dataset", "sep.csv", "--out", "copy.jsonl"],
    );
    assert!(out.contains("600 utterances (120 neutral)"), "{out}");
    assert!(dir.path().join("copy.jsonl").exists());

    let (code, err) = fails(
        dir.path(),
        &["prepare", "--dataset", "sep.csv", "--manifest", "github"],
    );
    assert_eq!(code, 2);
    assert_eq!(err["error"], "validation");
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("Anger: expected 340"));

    ok(
        dir.path(),
        &["synth", "--kind", "github", "--out", "gh.csv"],
    );
    ok(
        dir.path(),
        &["prepare", "--dataset", "gh.csv", "--manifest", "github"],
    );
}

#[test]
fn malformed_dataset_is_a_parse_error_with_line() {
    let dir = setup();
    fs::write(
        dir.path().join("bad.csv"),
        "id,text,anger,love,fear,joy,sadness,surprise\na,ok,0,0,0,0,0,0\nb,bad,0,2,0,0,0,0\n",
    )
    .unwrap();
    let (code, err) = fails(dir.path(), &["prepare", "--dataset", "bad.csv"]);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "parse");
    assert_eq!(err["line"], 3);
}

#[test]
fn extract_polarity_writes_one_record_per_utterance() {
    let dir = setup();
    let out = ok(
        dir.path(),
        &[
            "extract-polarity",
            "--dataset",
            "sep.csv",
            "--lexicon",
            "lex.tsv",
            "--out",
            "pol.jsonl",
        ],
    );
    let stats: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(stats["utterances"], 600);
    let text = fs::read_to_string(dir.path().join("pol.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 600);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["polarity_words"].is_array());
}

#[test]
fn training_is_reproducible_and_evaluation_matches() {
    let dir = setup();
    let d = dir.path();
    train(d, "a", &["--mode", "polarity", "--lexicon", "lex.tsv"]);
    train(
        d,
        "b",
        &["--mode", "polarity", "--lexicon", "lex.tsv", "--jobs", "1"],
    );
    for f in [
        "model/anger.ckpt",
        "model/surprise.ckpt",
        "model/vocab.txt",
        "predictions.csv",
        "split.json",
    ] {
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let cfg: Value =
        serde_json::from_str(&fs::read_to_string(d.join("a/run_config.json")).unwrap()).unwrap();
    assert_eq!(cfg["experiment"]["mode"], "polarity");
    assert_eq!(cfg["experiment"]["seeds"][0], 5);

    // The saved configuration reproduces the run on its own.
    ok(d, &["train", "--config", "a/run_config.json", "--out", "c"]);
    assert_eq!(
        fs::read(d.join("a/predictions.csv")).unwrap(),
        fs::read(d.join("c/predictions.csv")).unwrap()
    );

    ok(
        d,
        &[
            "evaluate",
            "--dataset",
            "sep.csv",
            "--model",
            "a/model",
            "--split",
            "a/split.json",
            "--lexicon",
            "lex.tsv",
            "--out",
            "ev",
        ],
    );
    assert_eq!(
        fs::read(d.join("a/predictions.csv")).unwrap(),
        fs::read(d.join("ev/predictions.csv")).unwrap()
    );
    let r1: Value =
        serde_json::from_str(&fs::read_to_string(d.join("a/report.json")).unwrap()).unwrap();
    let r2: Value =
        serde_json::from_str(&fs::read_to_string(d.join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(r1["macro_f1"], r2["macro_f1"]);

    let (code, err) = fails(
        d,
        &[
            "evaluate",
            "--dataset",
            "sep.csv",
            "--model",
            "a/model",
            "--split",
            "a/split.json",
            "--out",
            "ev2",
        ],
    );
    assert_eq!((code, err["error"].as_str()), (2, Some("config")));
}

#[test]
fn seed_comes_from_environment() {
    let dir = setup();
    let d = dir.path();
    let mut args = vec!["train", "--dataset", "sep.csv", "--out", "env"];
    args.extend(TINY);
    let out = Command::new(env!("CARGO_BIN_EXE_emoblend"))
        .current_dir(d)
        .env("EMOBLEND_SEED", "11")
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg: Value =
        serde_json::from_str(&fs::read_to_string(d.join("env/run_config.json")).unwrap()).unwrap();
    assert_eq!(cfg["experiment"]["seeds"][0], 11);
}

#[test]
fn tampered_vocabulary_is_a_compatibility_error() {
    let dir = setup();
    let d = dir.path();
    train(d, "m", &[]);
    let vocab = d.join("m/model/vocab.txt");
    let mut text = fs::read_to_string(&vocab).unwrap();
    text.push_str("extra\n");
    fs::write(&vocab, text).unwrap();
    let (code, err) = fails(
        d,
        &[
            "evaluate",
            "--dataset",
            "sep.csv",
            "--model",
            "m/model",
            "--out",
            "ev",
        ],
    );
    assert_eq!(code, 4);
    assert_eq!(err["error"], "compatibility");
}

#[test]
fn divergence_is_a_training_error() {
    let dir = setup();
    let d = dir.path();
    let mut args = vec!["train", "--dataset", "sep.csv", "--out", "nan"];
    args.extend(&TINY[..12]);
    args.extend(["--lr", "1e300"]);
    let (code, err) = fails(d, &args);
    assert_eq!(code, 3);
    assert_eq!(err["error"], "training");
    assert!(err["emotion"].is_string());
    assert!(err["epoch"].is_u64());
}

#[test]
fn polarity_mode_requires_a_lexicon() {
    let dir = setup();
    let mut args = vec![
        "train",
        "--dataset",
        "sep.csv",
        "--mode",
        "polarity",
        "--out",
        "x",
    ];
    args.extend(TINY);
    let (code, err) = fails(dir.path(), &args);
    assert_eq!((code, err["error"].as_str()), (2, Some("config")));
}

#[test]
fn compare_and_errors_commands() {
    let dir = setup();
    let d = dir.path();
    train(d, "base", &[]);
    train(d, "pol", &["--mode", "polarity", "--lexicon", "lex.tsv"]);

    let out = ok(
        d,
        &[
            "compare",
            "base/report.json",
            "pol/report.json",
            "--reference",
            "bert-github",
            "--out",
            "cmp.json",
        ],
    );
    assert!(out.contains("vs first"));
    assert!(out.contains("not a reproduction claim"));
    let cmp: Value =
        serde_json::from_str(&fs::read_to_string(d.join("cmp.json")).unwrap()).unwrap();
    assert_eq!(cmp["references"].as_array().unwrap().len(), 2);

    let keys = ok(d, &["compare", "--list-references"]);
    assert!(keys.lines().any(|k| k == "bert-polarity-stackoverflow"));
    let (code, err) = fails(d, &["compare", "base/report.json", "--reference", "nope"]);
    assert_eq!((code, err["error"].as_str()), (2, Some("lookup")));

    let out = ok(
        d,
        &[
            "errors",
            "--dataset",
            "sep.csv",
            "--predictions",
            "base/predictions.csv",
            "--after",
            "pol/predictions.csv",
            "--out",
            "err",
        ],
    );
    assert!(out.contains("unanimous error cases"));
    assert!(d.join("err/cases.jsonl").exists());
    assert!(d.join("err/resolution.json").exists());

    fs::write(
        d.join("ann.csv"),
        "case_id,category\nsyn-0001:love,sarcasm\n",
    )
    .unwrap();
    let (code, err) = fails(
        d,
        &[
            "errors",
            "--dataset",
            "sep.csv",
            "--predictions",
            "base/predictions.csv",
            "--annotations",
            "ann.csv",
            "--out",
            "err2",
        ],
    );
    assert_eq!((code, err["error"].as_str()), (2, Some("validation")));
}

#[test]
fn experiment_aggregates_seeds() {
    let dir = setup();
    let d = dir.path();
    let mut args = vec![
        "experiment",
        "--dataset",
        "sep.csv",
        "--seeds",
        "1,2",
        "--out",
        "exp",
    ];
    args.extend(TINY);
    let out = ok(d, &args);
    assert!(out.contains("2 runs"), "{out}");
    for f in [
        "aggregate.json",
        "run_config.json",
        "seed-1/report.json",
        "seed-2/model/model.json",
    ] {
        assert!(d.join("exp").join(f).exists(), "{f}");
    }
}
