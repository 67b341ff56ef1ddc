//! End-to-end checks of the `halluc` binary: exit codes, manifests, and
//! determinism of file outputs.

use std::path::Path;
use std::process::{Command, Output};

fn halluc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halluc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path.display().to_string()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn eval_identical_files_scores_one_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let line = r#"{"doc_id":"d1","annotator":"a","spans":[{"start":0,"end":4,"class":"unsupported_word"}]}
"#;
    let gold = write(dir.path(), "gold.jsonl", line);
    let pred = write(dir.path(), "pred.jsonl", line);
    let output = dir.path().join("report.json");
    let result = halluc(
        &[
            "eval",
            "--gold",
            &gold,
            "--pred",
            &pred,
            "--output",
            output.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(result.status.success(), "{result:?}");
    let stdout = String::from_utf8(result.stdout).unwrap();
    assert!(stdout.contains("100.0"), "no perfect score in {stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&output).unwrap()).unwrap();
    assert_eq!(report["f1"], 1.0);
    let manifest_path = dir.path().join("report.json.manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "eval");
    assert_eq!(manifest["input_digests"].as_object().unwrap().len(), 2);
}

#[test]
fn detect_llm_with_missing_fixture_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(
        dir.path(),
        "corpus.jsonl",
        r#"{"id":"d1","context":"some context","summary":"some summary"}
"#,
    );
    let fixtures = dir.path().join("fixtures");
    std::fs::create_dir(&fixtures).unwrap();
    let result = halluc(
        &[
            "detect-llm",
            "--input",
            &corpus,
            "--output",
            dir.path().join("out.jsonl").to_str().unwrap(),
            "--replay",
            fixtures.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(result.status.code(), Some(2), "{result:?}");
}

#[test]
fn prep_renders_stage_stats_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.jsonl");
    let out_b = dir.path().join("b.jsonl");
    for out in [&out_a, &out_b] {
        let result = halluc(
            &[
                "prep",
                "--rules",
                &fixture("fixtures/prep_rules.toml"),
                "--input",
                &fixture("fixtures/prep_notes.jsonl"),
                "--output",
                out.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(result.status.success(), "{result:?}");
        let stdout = String::from_utf8(result.stdout).unwrap();
        assert!(stdout.contains("kept"), "no stage table in {stdout}");
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "prep output differs between runs");
}

#[test]
fn validate_reports_violations_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(
        dir.path(),
        "corpus.jsonl",
        r#"{"id":"d1","context":"ctx","summary":"short"}
"#,
    );
    let bad = write(
        dir.path(),
        "bad.jsonl",
        r#"{"doc_id":"d1","annotator":"a","spans":[{"start":0,"end":99,"class":null}]}
"#,
    );
    let result = halluc(
        &["validate", "--corpus", &corpus, "--annotations", &bad],
        dir.path(),
    );
    assert_eq!(result.status.code(), Some(1), "{result:?}");
    let stderr = String::from_utf8(result.stderr).unwrap();
    assert!(stderr.contains("out of bounds"), "stderr: {stderr}");
}
