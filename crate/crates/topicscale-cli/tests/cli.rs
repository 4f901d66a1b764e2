//! End-to-end checks of the binary: run the subcommands a first-time user
//! would, asserting on exit codes and produced files rather than internals.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topicscale"))
}

fn simulate_demo(corpus: &Path) {
    let output = bin()
        .args(["simulate", "--kind", "demo"])
        .args(["--docs", "18", "--vocab", "50", "--tokens", "250"])
        .args(["--seed", "3"])
        .arg("-o")
        .arg(corpus)
        .output()
        .expect("spawn simulate");
    assert!(output.status.success());
    assert!(corpus.join("docs.jsonl").is_file());
    assert!(corpus.join("meta.csv").is_file());
}

#[test]
fn simulate_then_run_exports_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    simulate_demo(&corpus);

    let out = dir.path().join("out");
    let output = bin()
        .arg("run")
        .arg("--docs")
        .arg(corpus.join("docs.jsonl"))
        .arg("--meta")
        .arg(corpus.join("meta.csv"))
        .args(["--k", "3", "--em-iters", "25"])
        .arg("-o")
        .arg(&out)
        .output()
        .expect("spawn run");
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("r_squared"), "stdout: {stdout}");
    for file in ["manifest.csv", "doc_positions.csv", "topic_order.csv"] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
}

#[test]
fn export_without_output_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    simulate_demo(&corpus);

    let output = bin()
        .arg("export")
        .arg("--docs")
        .arg(corpus.join("docs.jsonl"))
        .arg("--meta")
        .arg(corpus.join("meta.csv"))
        .output()
        .expect("spawn export");
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.starts_with("error:"), "stderr: {err}");
}

#[test]
fn missing_corpus_fails_cleanly() {
    let output = bin()
        .args([
            "run",
            "--docs",
            "does-not-exist.jsonl",
            "--meta",
            "nope.csv",
        ])
        .output()
        .expect("spawn run");
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.starts_with("error:"), "stderr: {err}");
}
