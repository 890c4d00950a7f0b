use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn satgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satgate")).args(args).output().expect("run satgate")
}

fn ok(args: &[&str]) {
    let out = satgate(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn bytes(path: &str) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = satgate(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_missing_flag_exit_2() {
    assert_eq!(satgate(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(satgate(&["gen-corpus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_are_one_line_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = satgate(&["label", "--model", &p(dir.path(), "missing.json"), "--in", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.starts_with("error: kind=io "));

    let cfg = p(dir.path(), "bad.toml");
    fs::write(&cfg, "num_sessions = 3\nunknown_key = 1\n").unwrap();
    let out = satgate(&["gen-corpus", "--config", &cfg, "--out", &p(dir.path(), "c.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind=config "));
}

#[test]
fn gen_corpus_writes_corpus_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "corpus.toml");
    fs::write(&cfg, "num_sessions = 25\nasr_error_rate = 0.2\n").unwrap();
    let out = p(dir.path(), "c.jsonl");
    ok(&["gen-corpus", "--config", &cfg, "--seed", "4", "--out", &out]);
    let text = String::from_utf8(bytes(&out)).unwrap();
    assert_eq!(text.lines().count(), 25);
    let manifest: serde_json::Value = serde_json::from_slice(&bytes(&format!("{out}.manifest.json"))).unwrap();
    assert_eq!(manifest["subcommand"], "gen-corpus");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["asr_error_rate"], 0.2);
    assert_eq!(manifest["config"]["nlu_error_rate"], 0.08);
    assert_eq!(manifest["checksums"].as_object().unwrap().len(), 2);
}

/// Runs every stage twice into separate directories and compares outputs.
#[test]
fn full_pipeline_is_byte_reproducible() {
    let runs: Vec<PathBuf> = (0..2).map(|_| tempfile::tempdir().unwrap().keep()).collect();
    let mut files: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for dir in &runs {
        // identical relative paths so manifests can be compared too
        let d = |n: &str| n.to_string();
        let run = |args: &[&str]| {
            let out = Command::new(env!("CARGO_BIN_EXE_satgate")).current_dir(dir).args(args).output().unwrap();
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        };
        fs::write(dir.join("corpus.toml"), "num_sessions = 120\nseed = 3\n").unwrap();
        fs::write(dir.join("weak.toml"), "max_pairs = 200\nseed = 1\n").unwrap();
        fs::write(
            dir.join("train.toml"),
            "embed_dim = 8\nffn_dim = 16\nnum_turns = 2\nmax_text_len = 16\nepochs = 2\nbatch_size = 32\nlearning_rate = 0.005\n",
        )
        .unwrap();
        run(&["gen-corpus", "--config", "corpus.toml", "--out", &d("corpus.jsonl")]);
        run(&["gen-corpus", "--config", "corpus.toml", "--seed", "9", "--out", &d("val.jsonl")]);
        run(&["extract-features", "--in", "corpus.jsonl", "--out", &d("features.csv")]);
        run(&["train-weak", "--config", "weak.toml", "--labeled", "corpus.jsonl", "--out", &d("weak.json")]);
        run(&["label", "--model", "weak.json", "--in", "corpus.jsonl", "--out", &d("labeled.jsonl")]);
        run(&["train", "--config", "train.toml", "--corpus", "labeled.jsonl", "--val", "val.jsonl", "--out", &d("model.ckpt")]);
        run(&["eval", "--ckpt", "model.ckpt", "--corpus", "val.jsonl", "--report", &d("eval.csv")]);
        fs::write(
            dir.join("variants.toml"),
            "seed = 2\ncheckpoint = \"model.ckpt\"\nbaseline_corpus = \"labeled.jsonl\"\noracle = true\n",
        )
        .unwrap();
        run(&["simulate", "--corpus", "val.jsonl", "--variants", "variants.toml", "--out", &d("sim.csv")]);
        run(&["train", "--config", "train.toml", "--corpus", "labeled.jsonl", "--val", "val.jsonl", "--warm-start", "model.ckpt", "--out", &d("model2.ckpt")]);

        let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        files.push(names.iter().map(|n| (n.clone(), fs::read(dir.join(n)).unwrap())).collect());
    }
    assert_eq!(files[0].len(), files[1].len());
    for ((na, a), (nb, b)) in files[0].iter().zip(&files[1]) {
        assert_eq!(na, nb);
        assert!(a == b, "{na} differs between runs");
    }
    let names: Vec<&str> = files[0].iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["corpus.jsonl.manifest.json", "model.ckpt.trace.csv", "eval.csv.manifest.json", "sim.csv.manifest.json"] {
        assert!(names.contains(&expected), "{expected} missing");
    }
    let sim = String::from_utf8(files[0].iter().find(|(n, _)| n == "sim.csv").unwrap().1.clone()).unwrap();
    assert!(sim.starts_with("variant,avg_cus,clarification_rate,n_sessions\n"));
    assert_eq!(sim.lines().count(), 5);
    let eval = String::from_utf8(files[0].iter().find(|(n, _)| n == "eval.csv").unwrap().1.clone()).unwrap();
    assert!(eval.contains("\nauc,") && eval.contains("threshold,precision,recall"));
    for dir in runs {
        fs::remove_dir_all(dir).ok();
    }
}
