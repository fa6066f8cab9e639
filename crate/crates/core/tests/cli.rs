mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::fixture;
use haabsa_core::dataset::{Corpus, Polarity, Sentence, SplitTag};
use haabsa_core::embeddings::EmbeddingSpec;
use haabsa_core::model::{save_checkpoint, LcrRot, ModelConfig};
use haabsa_core::pipeline::cli::run;
use haabsa_core::pipeline::{AttentionRecord, PredictionRecord, Stage};
use serde_json::Value;

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("haabsa").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stats_rows(stdout: &str) -> Vec<(String, usize, f64)> {
    stdout
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn stats_on_bundled_fixture() {
    let (code, out, err) = cli(&["stats", "--corpus", p(&fixture("stats_20.jsonl"))]);
    assert_eq!(code, 0, "{err}");
    let rows = stats_rows(&out);
    assert_eq!(
        rows,
        [
            ("positive".to_string(), 11, 55.0),
            ("neutral".to_string(), 2, 10.0),
            ("negative".to_string(), 7, 35.0),
            ("total".to_string(), 20, 100.0),
        ]
    );
}

/// Writes a corpus with the given polarity counts.
fn counted_corpus(path: &Path, pos: usize, neu: usize, neg: usize) {
    let mut sentences = Vec::new();
    for (polarity, n) in [(Polarity::Positive, pos), (Polarity::Neutral, neu), (Polarity::Negative, neg)] {
        for i in 0..n {
            let tokens = vec!["the".into(), "food".into(), "here".into()];
            let sid = format!("{}{i}", polarity.as_str());
            sentences.push(Sentence::new(sid, tokens, (1, 2), "FOOD#QUALITY", polarity).unwrap());
        }
    }
    Corpus::new(sentences, SplitTag::Unspecified, "counts").unwrap().write_jsonl(path).unwrap();
}

#[test]
fn stats_reproduce_semeval_class_shares() {
    let dir = tempfile::tempdir().unwrap();
    // SemEval (pos, neu, neg) counts and their percentages.
    let splits = [
        ((925, 41, 312), (72.4, 3.2, 24.4)),
        ((1319, 72, 488), (70.2, 3.8, 26.0)),
        ((483, 32, 135), (74.3, 4.9, 20.8)),
    ];
    for (i, ((pos, neu, neg), (pp, pu, pn))) in splits.into_iter().enumerate() {
        let path = dir.path().join(format!("split{i}.jsonl"));
        counted_corpus(&path, pos, neu, neg);
        let (code, out, _) = cli(&["stats", "--corpus", p(&path)]);
        assert_eq!(code, 0);
        let rows = stats_rows(&out);
        assert_eq!(rows[3].1, pos + neu + neg);
        for (row, want) in rows.iter().zip([pp, pu, pn]) {
            assert!((row.2 - want).abs() <= 0.1, "split {i}: {row:?} vs {want}");
        }
    }
}

fn zero_checkpoint(dir: &Path, method: u8, hops: usize, dim: usize) -> std::path::PathBuf {
    let path = dir.join(format!("zero{method}.json"));
    let model = LcrRot::new(ModelConfig::new(dim, 4).with_method(method).with_hops(hops)).unwrap();
    save_checkpoint(&path, &model, &EmbeddingSpec::hashed(dim, 0)).unwrap();
    path
}

#[test]
fn evaluate_zero_model_scores_majority_share() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = zero_checkpoint(dir.path(), 4, 2, 16);
    let (code, out, err) = cli(&["evaluate", "--corpus", p(&fixture("eval_small.jsonl")), "--checkpoint", p(&ckpt)]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["mode"], "model");
    assert_eq!(v["accuracy"], 0.5);
    assert_eq!(v["total"], 10);
}

#[test]
fn hybrid_evaluate_and_classify_with_majority_backup() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "--corpus",
        fixture_str("hybrid_mixed.jsonl"),
        "--train-corpus",
        fixture_str("hybrid_train.jsonl"),
        "--backup",
        "majority",
    ];
    let mut args = vec!["evaluate", "--mode", "hybrid"];
    args.extend(common);
    let (code, out, err) = cli(&args);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!((v["ontology_stage"].as_u64(), v["backup_stage"].as_u64()), (Some(7), Some(5)));

    let out_path = dir.path().join("pred.jsonl");
    let mut args = vec!["classify", "--out", p(&out_path)];
    args.extend(common);
    assert_eq!(cli(&args).0, 0);
    let recs: Vec<PredictionRecord> = fs::read_to_string(&out_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 12);
    for r in &recs {
        match r.stage {
            Stage::Backup => assert_eq!(r.polarity, Polarity::Positive),
            Stage::Ontology => assert_ne!(r.polarity, Polarity::Neutral),
        }
    }
}

fn toy_train_args<'a>(ckpt: &'a str, trace: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--corpus",
        fixture_str("toy_train.jsonl"),
        "--test-corpus",
        fixture_str("toy_test.jsonl"),
        "--embeddings",
        fixture_str("toy_vectors.txt"),
        "--checkpoint",
        ckpt,
        "--out",
        trace,
        "--hidden",
        "8",
        "--hops",
        "2",
        "--method",
        "4",
        "--epochs",
        "40",
        "--lr",
        "0.01",
        "--init-bound",
        "0.1",
        "--seed",
        "5",
    ]
}

fn fixture_str(name: &str) -> &'static str {
    Box::leak(fixture(name).into_os_string().into_string().unwrap().into_boxed_str())
}

#[test]
fn train_then_evaluate_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.json");
    let trace = dir.path().join("trace.jsonl");
    let (code, _, err) = cli(&toy_train_args(p(&ckpt), p(&trace)));
    assert_eq!(code, 0, "{err}");
    let losses: Vec<f64> = fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["loss"].as_f64().unwrap())
        .collect();
    assert_eq!(losses.len(), 40);
    assert!(losses.last().unwrap() < &(0.5 * losses[0]), "{losses:?}");

    let (code, out, _) = cli(&[
        "evaluate",
        "--corpus",
        fixture_str("toy_test.jsonl"),
        "--embeddings",
        fixture_str("toy_vectors.txt"),
        "--checkpoint",
        p(&ckpt),
    ]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["total"], 30);
    assert!(v["accuracy"].as_f64().unwrap() >= 0.5, "{v}");

    // Same seed, same bytes.
    let ckpt2 = dir.path().join("m2.json");
    let trace2 = dir.path().join("trace2.jsonl");
    assert_eq!(cli(&toy_train_args(p(&ckpt2), p(&trace2))).0, 0);
    assert_eq!(fs::read(&trace).unwrap(), fs::read(&trace2).unwrap());
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&ckpt2).unwrap());
}

#[test]
fn dump_attention_records() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("eval_small.jsonl");
    let n_sentences = fs::read_to_string(&corpus).unwrap().lines().count();
    let sentences: Vec<Value> = fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let sides_present: usize = sentences
        .iter()
        .map(|s| {
            let (a, b) = (s["target"][0].as_u64().unwrap(), s["target"][1].as_u64().unwrap());
            let n = s["tokens"].as_array().unwrap().len() as u64;
            2 + (a > 0) as usize + (b < n) as usize
        })
        .sum();
    for method in 0..=4u8 {
        let hops = 3;
        let ckpt = zero_checkpoint(dir.path(), method, hops, 16);
        let (code, out, err) = cli(&[
            "dump-attention",
            "--corpus",
            p(&corpus),
            "--checkpoint",
            p(&ckpt),
        ]);
        assert_eq!(code, 0, "{err}");
        let recs: Vec<AttentionRecord> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(recs.len(), sides_present * hops, "method {method}, {n_sentences} sentences");
        for r in &recs {
            assert_eq!(r.scores.len(), r.tokens.len());
            assert!((r.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(r.hierarchical.is_some(), method >= 1);
        }
    }
}

#[test]
fn contextual_embedding_kinds() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, file) in [("bert", "bert_layers.jsonl"), ("elmo", "elmo_layers.jsonl")] {
        let ckpt = dir.path().join(format!("{kind}.json"));
        let base = [
            "--corpus",
            fixture_str("eval_small.jsonl"),
            "--embeddings",
            fixture_str(file),
            "--embedding-kind",
            kind,
            "--checkpoint",
            p(&ckpt),
        ];
        let mut train = vec!["train", "--epochs", "2", "--hidden", "3", "--hops", "1"];
        train.extend(base);
        let (code, _, err) = cli(&train);
        assert_eq!(code, 0, "{kind}: {err}");
        let mut eval = vec!["evaluate"];
        eval.extend(base);
        let (code, out, err) = cli(&eval);
        assert_eq!(code, 0, "{kind}: {err}");
        let v: Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["total"], 10);
    }
}

#[test]
fn tune_resumes_to_the_same_history() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str, budget: &'static str| {
        vec![
            "tune".to_string(),
            "--corpus".into(),
            fixture_str("toy_train.jsonl").into(),
            "--embeddings".into(),
            fixture_str("toy_vectors.txt").into(),
            "--hidden".into(),
            "3".into(),
            "--hops".into(),
            "1".into(),
            "--epochs".into(),
            "2".into(),
            "--budget".into(),
            budget.into(),
            "--out".into(),
            out.into(),
        ]
    };
    let run_args = |a: Vec<String>| {
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        cli(&refs)
    };
    let full = dir.path().join("full.jsonl");
    let (code, out, err) = run_args(args(p(&full), "3"));
    assert_eq!(code, 0, "{err}");
    let summary: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(summary["trials"], 3);
    assert!(summary["best"]["learning_rate"].is_f64());

    let split = dir.path().join("split.jsonl");
    assert_eq!(run_args(args(p(&split), "2")).0, 0);
    assert_eq!(fs::read_to_string(&split).unwrap().lines().count(), 2);
    let (code, out, _) = run_args(args(p(&split), "3"));
    assert_eq!(code, 0);
    assert_eq!(fs::read(&full).unwrap(), fs::read(&split).unwrap());
    assert_eq!(serde_json::from_str::<Value>(out.trim()).unwrap(), summary);
}

#[test]
fn usage_errors_exit_with_two() {
    let missing = ["stats", "--corpus", "/nonexistent/corpus.jsonl"];
    assert_eq!(cli(&missing).0, 2);
    assert_eq!(cli(&["stats"]).0, 2);
    assert_eq!(cli(&["train", "--method", "5", "--corpus", fixture_str("toy_train.jsonl")]).0, 2);
    assert_eq!(cli(&["evaluate", "--hops", "0", "--corpus", fixture_str("toy_train.jsonl")]).0, 2);
    assert_eq!(cli(&["frobnicate"]).0, 2);
    assert_eq!(cli(&["--help"]).0, 0);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_haabsa");
    let status = Command::new(bin).args(["stats", "--corpus", "/nonexistent"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));

    let ckpt = dir.path().join("d.json");
    let out = Command::new(bin)
        .args(["train", "--corpus", fixture_str("toy_train.jsonl"), "--embeddings", fixture_str("toy_vectors.txt")])
        .args(["--checkpoint", p(&ckpt), "--lr", "1e300", "--epochs", "2", "--hidden", "3", "--hops", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!ckpt.exists());

    let ok = Command::new(bin).args(["stats", "--corpus", fixture_str("stats_20.jsonl")]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8(ok.stdout).unwrap().contains("55.0"));
}
