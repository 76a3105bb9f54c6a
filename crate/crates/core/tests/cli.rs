use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halluprobe"))
        .arg("--config")
        .arg(fixtures().join("run.conf"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = run(out, args);
    assert!(o.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const SEQUENCE: [&[&str]; 10] = [
    &["ingest"],
    &["gen-true"],
    &["gen-false"],
    &["classify", "--mode", "plain"],
    &["classify", "--mode", "cot"],
    &["evaluate"],
    &["popularity"],
    &["correlate"],
    &["maskprobe"],
    &["report"],
];

const REPORTS: [&str; 9] = [
    "evaluation.txt",
    "summary.jsonl",
    "relation_recall.jsonl",
    "correlation.txt",
    "correlation.jsonl",
    "maskprobe.txt",
    "maskprobe.jsonl",
    "report.txt",
    "report.jsonl",
];

fn reports(out: &Path) -> Vec<String> {
    REPORTS.iter().map(|f| read(&out.join("synthetic/reports").join(f))).collect()
}

#[test]
fn full_run_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    for args in SEQUENCE {
        ok(out, args);
    }
    for text in reports(out) {
        assert!(text.starts_with("manifest_hash: ") || text.starts_with("{\"manifest_hash\":"), "{text}");
    }

    for args in SEQUENCE {
        ok(out, args);
    }
    let second = reports(out);
    for args in SEQUENCE {
        ok(out, args);
    }
    assert_eq!(second, reports(out));

    let evaluation = read(&out.join("synthetic/reports/evaluation.txt"));
    ok(out, &["evaluate"]);
    assert_eq!(evaluation, read(&out.join("synthetic/reports/evaluation.txt")));

    let summary = &second[1];
    assert_eq!(summary.lines().count(), 3, "{summary}");
    assert!(summary.contains("\"mode\":\"plain\"") && summary.contains("\"mode\":\"cot\""));

    ok(out, &["review-sample", "--n", "100", "--kind", "true"]);
    let sample = read(&out.join("synthetic/reports/review_true.jsonl"));
    assert_eq!(sample.lines().filter(|l| l.contains("\"record_id\"")).count(), 100);
    ok(out, &["review-sample", "--n", "100", "--kind", "true"]);
    assert_eq!(sample, read(&out.join("synthetic/reports/review_true.jsonl")));
}

#[test]
fn missing_prerequisites_name_the_command() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["gen-true"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingest"));

    ok(tmp.path(), &["ingest"]);
    let o = run(tmp.path(), &["gen-false"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("gen-true"));

    ok(tmp.path(), &["gen-true"]);
    ok(tmp.path(), &["gen-false"]);
    let o = run(tmp.path(), &["evaluate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("classify"));
}

#[test]
fn bad_arguments_fail() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(!run(tmp.path(), &["ingest", "--no-such-flag"]).status.success());
    assert!(!run(tmp.path(), &["classify", "--mode", "sideways"]).status.success());
    assert!(!run(tmp.path(), &["frobnicate"]).status.success());
}

#[test]
fn synth_writes_a_runnable_workspace() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("world");
    let o = Command::new(env!("CARGO_BIN_EXE_halluprobe"))
        .args(["--seed", "5", "synth", "--records", "82", "--dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["corpus.jsonl", "popularity.tsv", "icl.jsonl", "oracle.conf", "run.conf"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_halluprobe"))
        .arg("--config")
        .arg(dir.join("run.conf"))
        .arg("--out")
        .arg(tmp.path().join("runs"))
        .arg("ingest")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
