//! End-to-end tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fnmr-audit"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn fnmr-audit");
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_identical_groups_csv(dir: &Path) -> PathBuf {
    let path = dir.join("identical.csv");
    let mut rows = String::from("subject_id,group_id,attempt_index,decision\n");
    for (group, prefix) in [("A", "a"), ("B", "b")] {
        for s in 1..=3 {
            // Same decision pattern in both groups: rates are identical.
            let decisions = if s == 1 { [1, 0] } else { [0, 0] };
            for (j, d) in decisions.iter().enumerate() {
                rows.push_str(&format!("{prefix}{s},{group},{},{d}\n", j + 1));
            }
        }
    }
    std::fs::write(&path, rows).unwrap();
    path
}

#[test]
fn analyze_identical_groups_reports_no_difference() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_identical_groups_csv(dir.path());
    let out_dir = dir.path().join("out");
    let output = run_ok(&[
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "7",
        "--replicates",
        "49",
    ]);

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("No detectable difference"), "{stdout}");

    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("F = 0"), "{summary}");
    assert!(summary.contains("p = 1"), "{summary}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("ftest.json")).unwrap())
            .unwrap();
    assert_eq!(report["f_observed"], 0.0);
    assert_eq!(report["p_value"], 1.0);
    assert_eq!(report["K"], 49);
}

#[test]
fn malformed_csv_fails_with_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(
        &input,
        "subject_id,group_id,attempt_index,decision\ns1,A,1,0\ns2,A,1,2\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "analyze",
            "--input",
            input.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2"), "stderr: {stderr}");
}

#[test]
fn statistical_rejection_still_exits_zero() {
    // One group far off: the test rejects, the tool still succeeds.
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("shifted.csv");
    let mut rows = String::from("subject_id,group_id,attempt_index,decision\n");
    for s in 1..=40 {
        for j in 1..=2 {
            rows.push_str(&format!("a{s},A,{j},0\n"));
        }
    }
    for s in 1..=40 {
        for j in 1..=2 {
            let d = u8::from(s % 2 == 0);
            rows.push_str(&format!("b{s},B,{j},{d}\n"));
        }
    }
    std::fs::write(&input, rows).unwrap();
    let out_dir = dir.path().join("out");
    let output = run_ok(&[
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "3",
        "--replicates",
        "199",
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("differs detectably"), "{stdout}");
}

#[test]
fn moe_json_and_flag_table_agree() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_identical_groups_csv(dir.path());
    let out_dir = dir.path().join("out");
    run_ok(&[
        "moe",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "11",
        "--replicates",
        "99",
    ]);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("moe.json")).unwrap()).unwrap();
    let flags_csv = std::fs::read_to_string(out_dir.join("flags.csv")).unwrap();
    let mut lines = flags_csv.lines();
    assert_eq!(lines.next(), Some("group_id,flagged"));
    for (line, group) in lines.zip(report["groups"].as_array().unwrap()) {
        let expected = format!(
            "{},{}",
            group["group_id"].as_str().unwrap(),
            group["flagged"]
        );
        assert_eq!(line, expected);
    }

    // The summary's interval line mirrors the JSON fields.
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    let interval_line = summary
        .lines()
        .find(|l| l.contains("interval:"))
        .expect("interval line in summary");
    assert!(interval_line.contains(&format!("({}, {})", report["lower"], report["upper"])));
}

#[test]
fn simulate_single_cell_emits_one_row_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sim");
    let args = [
        "simulate",
        "--out",
        out_dir.to_str().unwrap(),
        "--pi",
        "0.1",
        "--rho",
        "0.05",
        "--n",
        "15",
        "--m",
        "2",
        "--G",
        "3",
        "-R",
        "3",
        "-K",
        "19",
        "--seed",
        "21",
    ];
    run_ok(&args);
    let grid = std::fs::read_to_string(out_dir.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 2, "header plus one row:\n{grid}");
    let ledger_before = std::fs::read_to_string(out_dir.join("grid.csv.ledger")).unwrap();

    // Second run resumes off the ledger: identical output, no new lines.
    run_ok(&args);
    assert_eq!(
        std::fs::read_to_string(out_dir.join("grid.csv")).unwrap(),
        grid
    );
    assert_eq!(
        std::fs::read_to_string(out_dir.join("grid.csv.ledger")).unwrap(),
        ledger_before
    );
}

#[test]
fn omitted_seed_is_drawn_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_identical_groups_csv(dir.path());
    let mut seeds = Vec::new();
    for name in ["o1", "o2"] {
        let out_dir = dir.path().join(name);
        run_ok(&[
            "analyze",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--replicates",
            "19",
        ]);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
                .unwrap();
        let seed = manifest["seed"].as_u64().unwrap();
        assert_eq!(manifest["config"]["seed"].as_u64().unwrap(), seed);
        seeds.push(seed);
    }
    assert_ne!(
        seeds[0], seeds[1],
        "entropy seeds should differ across runs"
    );
}

#[test]
fn default_replicates_and_alpha_match_library_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_identical_groups_csv(dir.path());
    let out_dir = dir.path().join("out");
    run_ok(&[
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("ftest.json")).unwrap())
            .unwrap();
    assert_eq!(report["K"], 999);
    assert_eq!(report["alpha"], 0.05);
}

#[test]
fn env_var_supplies_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_identical_groups_csv(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin()
        .env("FNMR_AUDIT_SEED", "424242")
        .args([
            "analyze",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--replicates",
            "19",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"].as_u64(), Some(424242));
}

#[test]
fn replay_refuses_a_changed_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_identical_groups_csv(dir.path());
    let out_dir = dir.path().join("out");
    run_ok(&[
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "5",
        "--replicates",
        "19",
    ]);

    // Tamper with the input; the recorded digest no longer matches.
    let mut text = std::fs::read_to_string(&input).unwrap();
    text.push_str("a1,A,9,1\n");
    std::fs::write(&input, text).unwrap();

    let out = bin()
        .args([
            "replay",
            "--manifest",
            out_dir.join("manifest.json").to_str().unwrap(),
            "--out",
            dir.path().join("replayed").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("changed since"), "stderr: {stderr}");
}

#[test]
fn invalid_simulation_parameters_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "simulate",
            "--out",
            dir.path().join("sim").to_str().unwrap(),
            "--pi",
            "1.5",
            "--rho",
            "0.05",
            "--n",
            "10",
            "--m",
            "2",
            "--G",
            "3",
            "-R",
            "2",
            "-K",
            "9",
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pi"), "stderr: {stderr}");
}
