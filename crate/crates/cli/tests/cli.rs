//! Process-level contracts: subcommand schemas, determinism, and exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wiski"))
}

fn tmpdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wiski-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Drop the elapsed_ms column (index 1) from every CSV line.
fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let mut kept: Vec<&str> = Vec::with_capacity(fields.len());
            for (i, f) in fields.iter().enumerate() {
                if i != 1 {
                    kept.push(f);
                }
            }
            kept.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn bench_timing_schema_contract() {
    let out = tmpdir().join("bench.csv");
    let status = bin()
        .args(["bench-timing", "--n", "30", "--m", "64", "--seed", "0", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let contents = std::fs::read_to_string(&out).unwrap();
    let mut lines = contents.lines();
    assert_eq!(lines.next().unwrap(), "step,elapsed_ms,rmse,nll");
    assert_eq!(lines.count(), 30);
}

#[test]
fn stream_regress_is_deterministic_up_to_timing() {
    let dir = tmpdir();
    let a = dir.join("det_a.csv");
    let b = dir.join("det_b.csv");
    for out in [&a, &b] {
        let status = bin()
            .args([
                "stream-regress",
                "--synthetic",
                "sine",
                "--n",
                "120",
                "--seed",
                "1",
                "--grid-size",
                "16",
                "--pretrain-epochs",
                "5",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let ca = std::fs::read_to_string(&a).unwrap();
    let cb = std::fs::read_to_string(&b).unwrap();
    assert_ne!(ca, "");
    assert_eq!(strip_timing(&ca), strip_timing(&cb));
}

#[test]
fn missing_data_flag_is_usage_error() {
    let output = bin()
        .args(["stream-regress", "--seed", "0"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("--data") || err.contains("--synthetic"), "stderr: {err}");
    assert!(err.to_lowercase().contains("usage") || err.contains("--help"), "stderr: {err}");
}

#[test]
fn unknown_flag_is_exit_2() {
    let output = bin()
        .args(["stream-regress", "--does-not-exist"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_exit_3() {
    let output = bin()
        .args([
            "stream-regress",
            "--data",
            "/nope/missing.csv",
            "--target",
            "y",
            "--seed",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn malformed_csv_is_exit_4() {
    let dir = tmpdir();
    let path = dir.join("bad.csv");
    std::fs::write(&path, "a,y\n1,2\nxx,3\n").unwrap();
    let output = bin()
        .args(["stream-regress", "--target", "y", "--seed", "0", "--data"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("row 3"), "stderr: {err}");
}

#[test]
fn snapshot_round_trip_through_the_cli() {
    let dir = tmpdir();
    let snap = dir.join("state.bin");
    let status = bin()
        .args([
            "stream-regress",
            "--synthetic",
            "linear",
            "--n",
            "80",
            "--seed",
            "3",
            "--grid-size",
            "16",
            "--pretrain-epochs",
            "2",
            "--snapshot-out",
        ])
        .arg(&snap)
        .args(["--out"])
        .arg(dir.join("snap_metrics.csv"))
        .status()
        .unwrap();
    assert!(status.success());

    let copy = dir.join("state_copy.bin");
    let output = bin()
        .arg("snapshot")
        .arg(&snap)
        .arg("--out")
        .arg(&copy)
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("observations:"), "stdout: {text}");
    assert!(copy.exists());

    let output = bin().arg("snapshot").arg(dir.join("missing.bin")).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn bayes_opt_trace_schema() {
    let out = tmpdir().join("bo.csv");
    let status = bin()
        .args([
            "bayes-opt",
            "--objective",
            "levy3",
            "--iterations",
            "3",
            "--q",
            "2",
            "--pool",
            "32",
            "--grid-size",
            "5",
            "--seed",
            "0",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let contents = std::fs::read_to_string(&out).unwrap();
    assert!(contents.starts_with("iteration,elapsed_ms,best_value\n"));
    assert_eq!(contents.lines().count(), 4);
}

#[test]
fn trials_fanout_writes_merged_and_per_seed_files() {
    let dir = tmpdir();
    let out = dir.join("multi.csv");
    let status = bin()
        .env("WISKI_THREADS", "2")
        .args([
            "stream-regress",
            "--synthetic",
            "sine",
            "--n",
            "60",
            "--seed",
            "5",
            "--trials",
            "2",
            "--grid-size",
            "16",
            "--pretrain-epochs",
            "2",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let merged = std::fs::read_to_string(&out).unwrap();
    assert!(merged.starts_with("seed,step,"));
    assert!(dir.join("multi_seed5.csv").exists());
    assert!(dir.join("multi_seed6.csv").exists());
}

#[test]
fn config_file_precedence_and_unknown_key() {
    let dir = tmpdir();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "grid_size=12\npretrain_epochs=2\n").unwrap();
    let out = dir.join("cfg_run.csv");
    let status = bin()
        .args(["stream-regress", "--synthetic", "sine", "--n", "60", "--seed", "2", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let bad = dir.join("bad.cfg");
    std::fs::write(&bad, "nonsense_key=1\n").unwrap();
    let output = bin()
        .args(["stream-regress", "--synthetic", "sine", "--n", "60", "--seed", "2", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn classify_and_active_learn_run_small() {
    let dir = tmpdir();
    let out = dir.join("cls.csv");
    let status = bin()
        .args([
            "stream-classify",
            "--n",
            "60",
            "--seed",
            "4",
            "--grid-size",
            "8",
            "--pretrain-epochs",
            "2",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let contents = std::fs::read_to_string(&out).unwrap();
    assert!(contents.starts_with("step,elapsed_ms,accuracy,nll,"));

    let out = dir.join("al.csv");
    let status = bin()
        .args([
            "active-learn",
            "--rounds",
            "2",
            "--q",
            "3",
            "--pool-size",
            "60",
            "--test-size",
            "30",
            "--grid-size",
            "8",
            "--seed",
            "4",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let contents = std::fs::read_to_string(&out).unwrap();
    assert!(contents.starts_with("acquisitions,rmse\n"));
    assert_eq!(contents.lines().count(), 4);
}
