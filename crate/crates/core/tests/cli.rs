use std::path::Path;
use std::process::{Command, Output};

use clirisk::redactor::{RedactionResult, PLACEHOLDER};
use clirisk::schema::read_corpus;

fn clirisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clirisk"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = clirisk(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_corpus_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for path in [&a, &b] {
        ok(&["gen-corpus", "--records", "500", "--seed", "3", "--out", p(path)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_corpus(&a).unwrap().len(), 500);
}

#[test]
fn tokenize_prints_words() {
    assert_eq!(ok(&["tokenize", "New-AzVMConfig"]).trim(), "new az vm config");
    assert_eq!(ok(&["tokenize", "--keep-case", "New-AzKeyVault"]).trim(), "New Az Key Vault");
}

#[test]
fn train_evaluate_redact_round() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let responses = dir.path().join("responses.jsonl");
    ok(&[
        "gen-corpus",
        "--records",
        "800",
        "--positive-rate",
        "0.08",
        "--seed",
        "4",
        "--out",
        p(&corpus),
        "--responses-out",
        p(&responses),
    ]);

    let model = dir.path().join("model.json");
    ok(&["train", "--transform", "bow-pf", "--model", "lr", "--corpus", p(&corpus), "--out", p(&model)]);
    let inspected = ok(&["inspect-model", "--model", p(&model)]);
    assert!(inspected.contains("transform: bow-pf"), "{inspected}");
    assert!(inspected.contains("trained at: 1700000000"), "{inspected}");

    let scored = ok(&["evaluate", "--corpus", p(&corpus), "--model", p(&model)]);
    assert!(scored.contains("records 800"), "{scored}");

    let out_dir = dir.path().join("grid");
    ok(&[
        "evaluate",
        "--corpus",
        p(&corpus),
        "--transforms",
        "bow,bow-pf",
        "--models",
        "lr",
        "--repetitions",
        "2",
        "--out-dir",
        p(&out_dir),
    ]);
    let runs = std::fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    let mut lines = runs.lines();
    assert_eq!(
        lines.next().unwrap(),
        "transform,model,repetition,seed,max_f5_tune,threshold,f5_validation,precision_validation,\
         recall_validation,auc_validation,runtime_ms"
    );
    assert_eq!(lines.count(), 4);
    assert!(out_dir.join("cells.csv").exists() && out_dir.join("report.json").exists());

    // One generated response, in the envelope form the generator writes.
    let first = std::fs::read_to_string(&responses).unwrap().lines().next().unwrap().to_string();
    let envelope = dir.path().join("response.json");
    std::fs::write(&envelope, &first).unwrap();
    let fields = read_corpus(&corpus)
        .unwrap()
        .iter()
        .filter(|r| first.contains(&format!("\"command\":\"{}\"", r.command)))
        .count();

    let all: RedactionResult =
        serde_json::from_str(&ok(&["redact", "--model", p(&model), "--response", p(&envelope), "--threshold", "0"]))
            .unwrap();
    assert_eq!(all.audit.len(), fields);
    assert_eq!(all.redacted_count(), fields);
    assert!(serde_json::to_string(&all.response).unwrap().contains(PLACEHOLDER));

    let out = dir.path().join("redacted.json");
    ok(&["redact", "--model", p(&model), "--response", p(&envelope), "--out", p(&out)]);
    let written: RedactionResult = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(written.audit.len(), fields);
}

#[test]
fn sweep_reads_score_files() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    std::fs::write(&scores, "score,label\n0.9,1\n0.8,0\n0.7,1\n0.1,0\n").unwrap();
    let curve = dir.path().join("curve.csv");
    let text = ok(&["sweep", "--scores", p(&scores), "--out", p(&curve)]);
    assert!(text.contains("auc: 0.750000"), "{text}");
    let header = std::fs::read_to_string(&curve).unwrap();
    assert!(header.starts_with("threshold,precision,recall,fbeta"));
}

#[test]
fn exit_codes() {
    assert_eq!(clirisk(&["--help"]).status.code(), Some(0));
    assert_eq!(clirisk(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(clirisk(&[]).status.code(), Some(1));
    let missing = clirisk(&["inspect-model", "--model", "/nonexistent/model.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}

#[test]
fn rejects_corrupt_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, "{\"format\": \"clirisk-model\", \"version\": 99}").unwrap();
    let out = clirisk(&["inspect-model", "--model", p(&model)]);
    assert_eq!(out.status.code(), Some(2));
}
