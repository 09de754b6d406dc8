use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use trie_decode::main_with_args;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Run in-process; returns (exit code, stdout, stderr).
fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("trie-decode").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Hotel {
    dir: TempDir,
}

impl Hotel {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let h = Self { dir };
        let (code, _, err) = run(&["build-vocab", "--corpus", s(&fixture("hotel_keywords.txt")), "--out", s(&h.vocab())]);
        assert_eq!(code, 0, "{err}");
        let (code, out, err) =
            run(&["build-trie", "--keywords", s(&fixture("hotel_keywords.txt")), "--vocab", s(&h.vocab()), "--out", s(&h.trie())]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("keywords: 3"));
        h
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn vocab(&self) -> PathBuf {
        self.path("vocab.txt")
    }

    fn trie(&self) -> PathBuf {
        self.path("hotel.trie")
    }

    fn extend(&self, extra: &[&str]) -> (i32, String, String) {
        let (table, trie, vocab) = (fixture("hotel_table.jsonl"), self.trie(), self.vocab());
        let mut args = vec!["extend", "--trie", s(&trie), "--scorer", s(&table), "--vocab", s(&vocab), "--query", "best hotel"];
        args.extend_from_slice(extra);
        run(&args)
    }
}

fn first_keyword(stdout: &str) -> &str {
    stdout.lines().next().unwrap().split('\t').nth(1).unwrap()
}

#[test]
fn build_trie_reports_count_and_dedupes() {
    let h = Hotel::new();
    assert!(h.trie().exists());
    assert!(trie_decode::manifest_path(&h.trie()).exists());

    let dup = h.path("dup.txt");
    fs::write(&dup, "the best hotel in texas\nthe best hotel in texas\nthe best hotel of tokyo\n").unwrap();
    let (code, out, _) = run(&["build-trie", "--keywords", s(&dup), "--vocab", s(&h.vocab()), "--out", s(&h.path("d.trie"))]);
    assert_eq!(code, 0);
    assert!(out.contains("keywords: 2"), "{out}");
}

#[test]
fn missing_file_exits_2_naming_the_path() {
    let h = Hotel::new();
    let (code, _, err) = run(&["build-trie", "--keywords", "/nonexistent/kw.txt", "--vocab", s(&h.vocab()), "--out", s(&h.path("x"))]);
    assert_eq!(code, 2);
    assert!(err.contains("/nonexistent/kw.txt"), "{err}");
}

#[test]
fn out_of_vocabulary_keyword_is_a_data_error() {
    let h = Hotel::new();
    let kw = h.path("oov.txt");
    fs::write(&kw, "the best hotel in paris\n").unwrap();
    let (code, _, err) = run(&["build-trie", "--keywords", s(&kw), "--vocab", s(&h.vocab()), "--out", s(&h.path("x"))]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn extend_flips_with_lookahead() {
    let h = Hotel::new();
    let (code, out, err) = h.extend(&["--beam", "1", "--ngram", "2", "--lambda", "0.5"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(first_keyword(&out), "the best hotel in texas");

    let (code, out, _) = h.extend(&["--beam", "1", "--ngram", "2", "--lambda", "0.5", "--plain"]);
    assert_eq!(code, 0);
    assert_eq!(first_keyword(&out), "the best hotel of tokyo");
}

#[test]
fn extend_prints_score_tab_keyword() {
    let h = Hotel::new();
    let (code, out, _) = h.extend(&["--beam", "3", "--ngram", "2", "--lambda", "0.8"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    let scores: Vec<f64> = lines.iter().map(|l| l.split('\t').next().unwrap().parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(first_keyword(&out), "the best hotel of tokyo");
    assert!((scores[0] - 0.5f64.ln()).abs() < 1e-6, "{out}");
    assert!((scores[1] - (0.4f64 * 0.9).ln()).abs() < 1e-6, "{out}");
}

#[test]
fn lambda_out_of_range_exits_2() {
    let h = Hotel::new();
    let (code, _, err) = h.extend(&["--lambda", "1.5", "--ngram", "2"]);
    assert_eq!(code, 2);
    assert!(err.contains("lambda must be in [0,1]"), "{err}");
}

#[test]
fn ngram_beyond_scorer_order_exits_2() {
    let h = Hotel::new();
    let (code, _, err) = h.extend(&["--ngram", "3"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn unknown_flag_exits_2() {
    let (code, _, _) = run(&["extend", "--bogus"]);
    assert_eq!(code, 2);
}

#[test]
fn train_scorer_is_deterministic_and_echoes_config() {
    let h = Hotel::new();
    let pairs = fixture("hotel_pairs.tsv");
    let a = h.path("a.json");
    let b = h.path("b.json");
    for out in [&a, &b] {
        let (code, _, err) =
            run(&["train-scorer", "--pairs", s(&pairs), "--vocab", s(&h.vocab()), "--order", "2", "--beta", "0.5", "--out", s(out)]);
        assert_eq!(code, 0, "{err}");
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(trie_decode::manifest_path(&a)).unwrap()).unwrap();
    assert_eq!(manifest["config"]["markov_order"], 2);
    assert_eq!(manifest["config"]["copy_bonus_beta"], 0.5);
    assert_eq!(manifest["command"], "train-scorer");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);

    // the trained model drives extend
    let (code, out, err) = run(&[
        "extend", "--trie", s(&h.trie()), "--scorer", s(&a), "--vocab", s(&h.vocab()), "--query", "tokyo hotel", "--beam", "3",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn empty_pairs_exit_2() {
    let h = Hotel::new();
    let empty = h.path("empty.tsv");
    fs::write(&empty, "").unwrap();
    let (code, _, _) = run(&["train-scorer", "--pairs", s(&empty), "--vocab", s(&h.vocab()), "--out", s(&h.path("m.json"))]);
    assert_eq!(code, 2);
}

#[test]
fn eval_grid_merge_and_bm25() {
    let h = Hotel::new();
    let report = h.path("report.json");
    let (code, out, err) = run(&[
        "eval", "--trie", s(&h.trie()), "--scorer", s(&fixture("hotel_table.jsonl")), "--vocab", s(&h.vocab()),
        "--dataset", s(&fixture("hotel_dataset.tsv")), "--beams", "1,2,3", "--lambdas", "0.5,1.0", "--ngrams", "2",
        "--bm25", "--merge", "--out", s(&report),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("Merged") && out.contains("BM25"), "{out}");
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["label"], "n=2 lambda=0.5");
    assert!(trie_decode::manifest_path(&report).exists());
    for r in rows {
        let recall: Vec<f64> = r["recall"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!(recall.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn eval_single_baseline_row() {
    let h = Hotel::new();
    let (code, out, err) = run(&[
        "eval", "--trie", s(&h.trie()), "--scorer", s(&fixture("hotel_table.jsonl")), "--vocab", s(&h.vocab()),
        "--dataset", s(&fixture("hotel_dataset.tsv")), "--beams", "5", "--lambdas", "1.0", "--ngrams", "1",
    ]);
    assert_eq!(code, 0, "{err}");
    let table_rows = out.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(table_rows, 2, "{out}");
}

#[test]
fn eval_missing_golden_exits_3_with_ids() {
    let h = Hotel::new();
    let (code, _, err) = run(&[
        "eval", "--trie", s(&h.trie()), "--scorer", s(&fixture("hotel_table.jsonl")), "--vocab", s(&h.vocab()),
        "--dataset", s(&fixture("hotel_dataset_missing.tsv")), "--beams", "5", "--ngrams", "2",
    ]);
    assert_eq!(code, 3);
    assert!(err.contains("[1]"), "{err}");
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn without_timestamp(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("timestamp_unix");
    v
}

#[test]
fn synth_same_seed_same_tree() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"noise_queries": 4, "trap_queries": 3, "fork_queries": 3}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let (code, stdout, err) = run(&["synth", "--seed", "11", "--spec", s(&spec), "--out-dir", s(out)]);
        assert_eq!(code, 0, "{err}");
        assert!(stdout.contains("test queries: 10"));
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert_eq!(ta.len(), 5);
    for ((na, ba), (nb, bb)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        if na == "manifest.json" {
            assert_eq!(without_timestamp(ba), without_timestamp(bb));
        } else {
            assert_eq!(ba, bb, "{na}");
        }
    }
}

#[test]
fn synth_bad_specs_exit_2() {
    let dir = TempDir::new().unwrap();
    let malformed = dir.path().join("bad.json");
    fs::write(&malformed, "{ not json").unwrap();
    let (code, _, _) = run(&["synth", "--spec", s(&malformed), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(code, 2);

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"queries": 3}"#).unwrap();
    let (code, _, _) = run(&["synth", "--spec", s(&unknown), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(code, 2);

    let zero = dir.path().join("zero.json");
    fs::write(&zero, r#"{"noise_queries": 0, "trap_queries": 0, "fork_queries": 0}"#).unwrap();
    let (code, _, err) = run(&["synth", "--spec", s(&zero), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn synth_pipeline_end_to_end() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"noise_queries": 3, "trap_queries": 3, "fork_queries": 3}"#).unwrap();
    let data = dir.path().join("data");
    assert_eq!(run(&["synth", "--seed", "5", "--spec", s(&spec), "--out-dir", s(&data)]).0, 0);
    let vocab = dir.path().join("vocab.txt");
    let trie = dir.path().join("kw.trie");
    let model = dir.path().join("model.json");
    let kw = data.join("keywords.txt");
    let train = data.join("train.tsv");
    assert_eq!(run(&["build-vocab", "--corpus", s(&kw), s(&train), "--out", s(&vocab)]).0, 0);
    assert_eq!(run(&["build-trie", "--keywords", s(&kw), "--vocab", s(&vocab), "--out", s(&trie)]).0, 0);
    assert_eq!(
        run(&["train-scorer", "--pairs", s(&train), "--vocab", s(&vocab), "--beta", "3", "--out", s(&model)]).0,
        0
    );
    let (code, out, err) = run(&[
        "eval", "--trie", s(&trie), "--scorer", s(&model), "--vocab", s(&vocab), "--dataset", s(&data.join("test.tsv")),
        "--beams", "1,5", "--lambdas", "0.8,1.0", "--ngrams", "3", "--merge",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("[common-prefix]"), "{out}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_trie-decode");
    let status = Command::new(bin).args(["build-trie", "--keywords", "/no/such", "--vocab", "/no/v", "--out", "/tmp/x"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    let bad_threads = Command::new(bin)
        .env("TRIE_DECODE_THREADS", "zero")
        .args(["synth", "--out-dir", "/tmp/unused-synth-dir"])
        .status()
        .unwrap();
    assert_eq!(bad_threads.code(), Some(2));
}
