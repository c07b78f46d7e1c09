//! End-to-end exercise of the binary: generate a corpus, run both detectors,
//! compare their events, and print the report table.

use std::path::Path;
use std::process::{Command, Output};

fn squall(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_squall"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();

    let gen = squall(
        root,
        &[
            "gen-synthetic",
            "--seed",
            "5",
            "--docs",
            "10",
            "--tweets-per-doc",
            "150",
            "--burst",
            "earthquake@8=60",
            "--topic",
            "rip,muhammad,ali@3=45",
            "--topic",
            "rip,muhammad,ali@4=70",
            "--out",
            "corpus.jsonl",
        ],
    );
    assert_success(&gen, "gen-synthetic");
    assert!(root.join("corpus.jsonl").exists());
    assert!(root.join("corpus.truth.json").exists());

    let keybased = squall(
        root,
        &[
            "run-keybased",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "kb",
            "--seed",
            "1",
        ],
    );
    assert_success(&keybased, "run-keybased");
    assert!(root.join("kb/events.jsonl").exists());
    assert!(root.join("kb/report.json").exists());
    assert!(root.join("kb/charts").is_dir());

    let clustering = squall(
        root,
        &[
            "run-clustering",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "cl",
            "--seed",
            "1",
            "--store",
            "file:cl/store.snapshot",
        ],
    );
    assert_success(&clustering, "run-clustering");
    assert!(root.join("cl/cluster-events.jsonl").exists());
    assert!(root.join("cl/store.snapshot").exists());

    let compare = squall(
        root,
        &[
            "compare",
            "--keybased",
            "kb/events.jsonl",
            "--clustering",
            "cl/cluster-events.jsonl",
        ],
    );
    assert_success(&compare, "compare");
    let stdout = String::from_utf8_lossy(&compare.stdout);
    assert!(stdout.contains("clusters containing keywords"));

    let report = squall(root, &["report", "kb/report.json", "cl/report.json"]);
    assert_success(&report, "report");
    let table = String::from_utf8_lossy(&report.stdout);
    assert!(table.contains("keybased-direct"));
    assert!(table.contains("clustering"));
}

#[test]
fn compare_exits_2_on_mismatched_corpora() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();

    for (seed, out) in [("1", "a"), ("2", "b")] {
        let gen = squall(
            root,
            &[
                "gen-synthetic",
                "--seed",
                seed,
                "--docs",
                "3",
                "--tweets-per-doc",
                "40",
                "--out",
                &format!("{out}.jsonl"),
            ],
        );
        assert_success(&gen, "gen-synthetic");
        let run = squall(
            root,
            &[
                "run-keybased",
                "--corpus",
                &format!("{out}.jsonl"),
                "--out",
                out,
            ],
        );
        assert_success(&run, "run-keybased");
    }

    let compare = squall(
        root,
        &[
            "compare",
            "--keybased",
            "a/events.jsonl",
            "--clustering",
            "b/events.jsonl",
        ],
    );
    assert_eq!(compare.status.code(), Some(2), "mismatch must exit 2");
}

#[test]
fn run_errors_exit_1() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = squall(
        dir.path(),
        &["run-keybased", "--corpus", "missing.jsonl", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rejects_unplantable_burst_words() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = squall(
        dir.path(),
        &[
            "gen-synthetic",
            "--docs",
            "3",
            "--burst",
            "the@1=50",
            "--out",
            "c.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("does not survive preprocessing"));
}
