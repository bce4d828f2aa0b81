//! Process-level checks of the `ddee` binary: flag surface, exit codes,
//! stream discipline (results on stdout, notes on stderr), and idempotence.
//!
//! Every invocation runs inside a fresh temp directory so a stray
//! `ddee.toml` in the repository can never leak into a test.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ddee_in(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddee"));
    cmd.current_dir(dir);
    cmd
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_code(output: &Output, expected: i32, what: &str) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "{what}\nstdout:\n{}\nstderr:\n{}",
        stdout_of(output),
        stderr_of(output)
    );
}

/// Minimal config pointing at the shared fixtures, written into `dir`.
fn write_fixture_config(dir: &Path) -> PathBuf {
    let path = dir.join("ddee.toml");
    std::fs::write(
        &path,
        format!(
            "[paths]\ncorpus = \"{}\"\nontology = \"{}\"\n",
            fixture("corpus.jsonl").display(),
            fixture("ontology.json").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let output = ddee_in(dir.path()).arg("--help").output().unwrap();
    assert_code(&output, 0, "--help");
    let text = stdout_of(&output);
    for subcommand in ["ingest", "stats", "balance", "defs", "run", "score", "report"] {
        assert!(text.contains(subcommand), "--help does not mention {subcommand}:\n{text}");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = ddee_in(dir.path()).arg("frobnicate").output().unwrap();
    assert_code(&output, 2, "unknown subcommand");
}

#[test]
fn score_rejects_unknown_mode() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.jsonl");
    let output = ddee_in(dir.path())
        .args([
            "score",
            "--gold",
            corpus.to_str().unwrap(),
            "--pred",
            corpus.to_str().unwrap(),
            "--mode",
            "bogus",
        ])
        .output()
        .unwrap();
    assert_code(&output, 2, "score --mode bogus");
}

#[test]
fn self_score_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.jsonl");
    let output = ddee_in(dir.path())
        .args([
            "score",
            "--gold",
            corpus.to_str().unwrap(),
            "--pred",
            corpus.to_str().unwrap(),
            "--mode",
            "offset",
        ])
        .output()
        .unwrap();
    assert_code(&output, 0, "self-score");
    let text = stdout_of(&output);
    assert!(text.starts_with("metric,precision,recall,f1,gold,predicted,matched,mode"), "{text}");
    assert!(text.contains("trig_c,1.000000,1.000000,1.000000,5,5,5,offset"), "{text}");
    assert!(text.contains("arg_i,1.000000,1.000000,1.000000,6,6,6,offset"), "{text}");
    assert!(text.contains("arg_c,1.000000,1.000000,1.000000,6,6,6,offset"), "{text}");
}

#[test]
fn score_rejects_a_file_in_neither_format() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("pred.jsonl");
    std::fs::write(&garbage, "this is not a prediction\n").unwrap();
    let output = ddee_in(dir.path())
        .args([
            "score",
            "--gold",
            fixture("corpus.jsonl").to_str().unwrap(),
            "--pred",
            garbage.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_code(&output, 1, "garbage predictions");
}

#[test]
fn report_with_reference_prints_published_rows() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.jsonl");
    let output = ddee_in(dir.path())
        .args([
            "report",
            "--with-reference",
            "--gold",
            corpus.to_str().unwrap(),
            "--pred",
            corpus.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_code(&output, 0, "report --with-reference");
    let text = stdout_of(&output);
    assert!(text.contains("| Method | Model | Trig-C | Arg-C |"), "{text}");
    assert!(text.contains("| DDEE | Qwen-turbo | 25.93 | 20.13 |"), "{text}");
    // side-effect note goes to stderr, not into the machine-readable stream
    assert!(stderr_of(&output).contains("wrote"), "{}", stderr_of(&output));
    assert!(dir.path().join("report.csv").is_file());
    assert!(dir.path().join("report.md").is_file());
}

#[test]
fn ingest_is_idempotent_on_its_own_output() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.jsonl");
    let output = ddee_in(dir.path())
        .args([
            "ingest",
            "--input",
            fixture("corpus.jsonl").to_str().unwrap(),
            "--format",
            "canonical-jsonl",
            "--out",
            first.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_code(&output, 0, "first ingest");
    assert!(stdout_of(&output).contains("6 documents"), "{}", stdout_of(&output));

    let second = dir.path().join("second.jsonl");
    let output = ddee_in(dir.path())
        .args([
            "ingest",
            "--input",
            first.to_str().unwrap(),
            "--format",
            "canonical-jsonl",
            "--out",
            second.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_code(&output, 0, "second ingest");
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn stats_reports_fixture_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture_config(dir.path());
    let output = ddee_in(dir.path())
        .args(["--config", config.to_str().unwrap(), "stats"])
        .output()
        .unwrap();
    assert_code(&output, 0, "stats");
    let text = stdout_of(&output);
    assert!(text.contains("documents: 6"), "{text}");
    assert!(text.contains("events: 5"), "{text}");
    assert!(text.contains("arguments: 6"), "{text}");
    assert!(text.contains("Conflict.Attack.Unspecified: 3"), "{text}");
}

#[test]
fn balance_is_deterministic_and_writes_a_plan() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture_config(dir.path());
    let run = |out: &Path| {
        let output = ddee_in(dir.path())
            .args([
                "--config",
                config.to_str().unwrap(),
                "balance",
                "--target-per-type",
                "4",
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_code(&output, 0, "balance");
    };
    let first = dir.path().join("bal1.jsonl");
    let second = dir.path().join("bal2.jsonl");
    run(&first);
    run(&second);
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    assert!(dir.path().join("bal1.plan.json").is_file());
}

#[test]
fn defs_load_summarizes_the_ontology() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture_config(dir.path());
    let output = ddee_in(dir.path())
        .args(["--config", config.to_str().unwrap(), "defs", "--load"])
        .output()
        .unwrap();
    assert_code(&output, 0, "defs --load");
    let text = stdout_of(&output);
    assert!(text.contains("2 event types"), "{text}");
    assert!(text.contains("4 roles"), "{text}");
}

#[test]
fn live_run_without_api_key_names_the_variable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture_config(dir.path());
    let output = ddee_in(dir.path())
        .env_remove("OPENAI_API_KEY")
        .args([
            "--config",
            config.to_str().unwrap(),
            "run",
            "--stage",
            "detect",
            "--provider",
            "gpt-4",
            "--run-dir",
            dir.path().join("run").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_code(&output, 1, "live run without key");
    assert!(stderr_of(&output).contains("OPENAI_API_KEY"), "{}", stderr_of(&output));
}

#[test]
fn replay_miss_reports_the_request_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture_config(dir.path());
    let empty_replay = dir.path().join("empty.jsonl");
    std::fs::write(&empty_replay, "").unwrap();
    let output = ddee_in(dir.path())
        .args([
            "--config",
            config.to_str().unwrap(),
            "run",
            "--stage",
            "detect",
            "--provider",
            "gpt-4-turbo",
            "--replay",
            empty_replay.to_str().unwrap(),
            "--run-dir",
            dir.path().join("run").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_code(&output, 1, "replay miss");
    assert!(stderr_of(&output).contains("request_key"), "{}", stderr_of(&output));
}

#[test]
fn config_with_unknown_key_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("ddee.toml");
    std::fs::write(&config, "[paths]\ncorpse = \"x.jsonl\"\n").unwrap();
    let output = ddee_in(dir.path())
        .args(["--config", config.to_str().unwrap(), "stats"])
        .output()
        .unwrap();
    assert_code(&output, 1, "unknown config key");
    assert!(stderr_of(&output).contains("corpse"), "{}", stderr_of(&output));
}

#[test]
fn explicitly_named_missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = ddee_in(dir.path())
        .args(["--config", dir.path().join("nope.toml").to_str().unwrap(), "stats"])
        .output()
        .unwrap();
    assert_code(&output, 1, "missing --config file");
}
