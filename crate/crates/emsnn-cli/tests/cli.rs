//! End-to-end tests for the `emsnn` binary: exit codes, file outputs,
//! and determinism of the generated artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn emsnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emsnn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn emsnn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn gen_requires_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = emsnn(&["gen", "--d", "2", "-o", "x.emsnn"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("--n"));
    assert!(stderr(&out).contains("usage:"));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.emsnn", "b.emsnn"] {
        let out = emsnn(
            &["gen", "--n", "64", "--d", "3", "--seed", "9", "-o", name],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a.emsnn")).unwrap();
    let b = std::fs::read(dir.path().join("b.emsnn")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn run_reproduces_worked_example() {
    // 1-d points 0.0, 1.0, 2.5, 6.0 with k=3, theta=0: the first three
    // merge, the outlier stays alone.
    let dir = tempfile::tempdir().unwrap();
    let points = [0.0f64, 1.0, 2.5, 6.0];
    let mut payload = Vec::new();
    payload.extend_from_slice(b"EMSNN1");
    payload.extend_from_slice(&4u64.to_le_bytes());
    payload.extend_from_slice(&1u32.to_le_bytes());
    payload.push(0x01);
    for p in points {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    std::fs::write(dir.path().join("four.emsnn"), payload).unwrap();

    let out = emsnn(
        &[
            "run", "-i", "four.emsnn", "--k", "3", "--theta", "0", "--m", "4KiB", "--b", "256",
            "-o", "four",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let labels = std::fs::read_to_string(dir.path().join("four.labels.csv")).unwrap();
    assert_eq!(labels, "0,0\n1,0\n2,0\n3,3\n");
    assert!(dir.path().join("four.emknn").exists());
    let metrics = std::fs::read_to_string(dir.path().join("four.metrics.csv")).unwrap();
    assert!(metrics.starts_with(
        "phase,block_reads,block_writes,bytes_read,bytes_written,elapsed_ms\n"
    ));
    assert!(metrics.contains("\ncluster,"));
    assert!(stdout(&out).contains("total.transfers="));
}

#[test]
fn max_theta_gives_singletons() {
    let dir = tempfile::tempdir().unwrap();
    let out = emsnn(
        &["gen", "--n", "32", "--d", "2", "--seed", "4", "-o", "p.emsnn"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    // theta = k - 1 can never be exceeded by a shared-tail count.
    let out = emsnn(
        &[
            "run", "-i", "p.emsnn", "--k", "4", "--theta", "3", "--m", "8KiB", "--b", "512",
            "-o", "p",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let labels = std::fs::read_to_string(dir.path().join("p.labels.csv")).unwrap();
    for (i, line) in labels.lines().enumerate() {
        assert_eq!(line, format!("{i},{i}"));
    }
}

#[test]
fn knn_then_cluster_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    emsnn(
        &["gen", "--n", "80", "--d", "2", "--clusters", "3", "--seed", "21", "-o", "p.emsnn"],
        dir.path(),
    );
    let out = emsnn(
        &[
            "run", "-i", "p.emsnn", "--k", "5", "--theta", "1", "--m", "16KiB", "--b", "1KiB",
            "-o", "whole",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let out = emsnn(
        &[
            "knn", "-i", "p.emsnn", "--k", "5", "--m", "16KiB", "--b", "1KiB", "-o",
            "staged.emknn",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = emsnn(
        &[
            "cluster", "-i", "staged.emknn", "--theta", "1", "--m", "16KiB", "--b", "1KiB",
            "-o", "staged.labels.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let whole_knn = std::fs::read(dir.path().join("whole.emknn")).unwrap();
    let staged_knn = std::fs::read(dir.path().join("staged.emknn")).unwrap();
    assert_eq!(whole_knn, staged_knn);
    let whole = std::fs::read_to_string(dir.path().join("whole.labels.csv")).unwrap();
    let staged = std::fs::read_to_string(dir.path().join("staged.labels.csv")).unwrap();
    assert_eq!(whole, staged);
}

#[test]
fn undersized_budget_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    emsnn(
        &["gen", "--n", "64", "--d", "8", "--seed", "2", "-o", "p.emsnn"],
        dir.path(),
    );
    let out = emsnn(
        &[
            "run", "-i", "p.emsnn", "--k", "8", "--theta", "1", "--m", "128", "--b", "64",
            "-o", "p",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("minimum budget"));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("defaults.conf"),
        "n=48\nd=2\nseed=7\nk=4\ntheta=1\nm=8KiB\nb=512\n",
    )
    .unwrap();
    let out = emsnn(
        &["--config", "defaults.conf", "gen", "-o", "p.emsnn"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("n=48 d=2 seed=7"));
    let out = emsnn(
        &["--config", "defaults.conf", "run", "-i", "p.emsnn", "-o", "p"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("p.labels.csv").exists());
}

#[test]
fn bench_writes_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.profile"),
        "name=tiny\nsweep=n_points\nvalues=100,200\nd=2\nk=4\ntheta=1\nm=8KiB\nb=512\nseed=5\nalgorithms=blocked,traditional-lru\n",
    )
    .unwrap();
    let run = || {
        let out = emsnn(&["bench", "-p", "tiny.profile"], dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
        (
            std::fs::read(dir.path().join("tiny.metrics.csv")).unwrap(),
            std::fs::read(dir.path().join("tiny.summary.csv")).unwrap(),
            stdout(&out),
        )
    };
    let (metrics_a, summary_a, text) = run();
    assert!(text.contains("ratio.n100."));
    let header = String::from_utf8_lossy(&metrics_a);
    assert!(header.starts_with(
        "profile,algorithm,n,m,b,k,theta,phase,block_reads,block_writes,bytes_read,bytes_written,elapsed_ms\n"
    ));
    assert!(String::from_utf8_lossy(&summary_a)
        .starts_with("n,m,blocked_total_ios,traditional_total_ios,ratio\n"));

    // Default bench runs record elapsed_ms as 0, so reruns are byte-identical.
    let (metrics_b, summary_b, _) = run();
    assert_eq!(metrics_a, metrics_b);
    assert_eq!(summary_a, summary_b);
}

#[test]
fn bench_rejects_bad_profile() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.profile"), "name=bad\nsweep=n_points\nvalues=\n").unwrap();
    let out = emsnn(&["bench", "-p", "bad.profile"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn validate_reports_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.emsnn"), b"NOTMAGICATALL").unwrap();
    let out = emsnn(&["validate", "junk.emsnn"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("unrecognized magic"));
}

#[test]
fn validate_accepts_generated_files() {
    let dir = tempfile::tempdir().unwrap();
    emsnn(
        &["gen", "--n", "20", "--d", "2", "--seed", "3", "-o", "p.emsnn"],
        dir.path(),
    );
    emsnn(
        &["knn", "-i", "p.emsnn", "--k", "3", "--m", "4KiB", "--b", "256", "-o", "p.emknn"],
        dir.path(),
    );
    let out = emsnn(&["validate", "p.emsnn", "p.emknn"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("dataset ok n=20 d=2"));
    assert!(text.contains("knn ok n=20 k=3"));
}

#[test]
fn file_backing_matches_memory_backing() {
    let dir = tempfile::tempdir().unwrap();
    emsnn(
        &["gen", "--n", "60", "--d", "2", "--seed", "11", "-o", "p.emsnn"],
        dir.path(),
    );
    for (backing, prefix) in [("memory", "mem"), ("file", "disk")] {
        let out = emsnn(
            &[
                "run", "-i", "p.emsnn", "--k", "4", "--theta", "1", "--m", "8KiB", "--b",
                "512", "--backing", backing, "-o", prefix,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let mem = std::fs::read_to_string(dir.path().join("mem.labels.csv")).unwrap();
    let disk = std::fs::read_to_string(dir.path().join("disk.labels.csv")).unwrap();
    assert_eq!(mem, disk);
}
