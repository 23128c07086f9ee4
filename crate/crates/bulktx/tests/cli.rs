//! End-to-end checks of the command-line front door.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_BIN_EXE_bulktx"));
    assert!(p.exists(), "binary missing at {}", p.display());
    p = p.canonicalize().unwrap();
    p
}

fn run(args: &[&str], dir: &Path) -> (bool, String, String) {
    let out = Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn bulktx");
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn gen_run_oracle_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ok, _, err) = run(
        &[
            "gen", "--kind", "micro", "--txns", "400", "--tuples", "256", "--types", "4",
            "--compute", "0", "--alpha", "0.5", "--seed", "7", "--out", "w.txt",
            "--schema-out", "schema.txt",
        ],
        d,
    );
    assert!(ok, "{err}");
    assert!(d.join("w.txt").exists() && d.join("schema.txt").exists());

    // Same seed, byte-identical files.
    let (ok, _, _) = run(
        &[
            "gen", "--kind", "micro", "--txns", "400", "--tuples", "256", "--types", "4",
            "--compute", "0", "--alpha", "0.5", "--seed", "7", "--out", "w2.txt",
        ],
        d,
    );
    assert!(ok);
    assert_eq!(
        std::fs::read_to_string(d.join("w.txt")).unwrap(),
        std::fs::read_to_string(d.join("w2.txt")).unwrap()
    );

    for strategy in ["tpl", "part", "kset", "auto", "seq"] {
        let (ok, stdout, err) = run(
            &[
                "run", "--workload", "w.txt", "--schema", "schema.txt", "--strategy", strategy,
                "--lanes", "4", "--csv", &format!("report-{strategy}.csv"),
            ],
            d,
        );
        assert!(ok, "strategy {strategy}: {err}");
        assert!(stdout.contains("oracle check: ok"), "{stdout}");
        let csv = std::fs::read_to_string(d.join(format!("report-{strategy}.csv"))).unwrap();
        assert!(csv.starts_with("# bulktx-report v1"));
        assert!(csv.lines().last().unwrap().starts_with("summary,"));
    }

    // The oracle dump parses back as a schema file.
    let (ok, _, err) = run(
        &["oracle", "--workload", "w.txt", "--out", "snap.txt"],
        d,
    );
    assert!(ok, "{err}");
    let snap = std::fs::read_to_string(d.join("snap.txt")).unwrap();
    bulktx::storage::load_store(&snap).unwrap();
}

#[test]
fn run_respects_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(
        &[
            "gen", "--kind", "tpcb", "--txns", "300", "--tuples", "64", "--scale", "4",
            "--compute", "0", "--seed", "3", "--out", "w.txt",
        ],
        d,
    );
    std::fs::write(d.join("engine.cfg"), "strategy = part\nlane_count = 2\n").unwrap();
    let (ok, stdout, err) = run(
        &["run", "--workload", "w.txt", "--config", "engine.cfg"],
        d,
    );
    assert!(ok, "{err}");
    assert!(stdout.contains("strategy part"), "{stdout}");
    // Flag overrides the file.
    let (ok, stdout, _) = run(
        &[
            "run", "--workload", "w.txt", "--config", "engine.cfg", "--strategy", "kset",
        ],
        d,
    );
    assert!(ok);
    assert!(stdout.contains("strategy kset"), "{stdout}");
}

#[test]
fn calibrate_reports_grid_and_writes_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(
        &[
            "gen", "--kind", "micro", "--txns", "256", "--tuples", "512", "--compute", "1",
            "--seed", "5", "--out", "w.txt",
        ],
        d,
    );
    let (ok, stdout, err) = run(
        &[
            "calibrate", "--workload", "w.txt", "--grid-passes", "0,1",
            "--grid-partition-sizes", "64,128", "--strategy", "kset", "--out", "tuned.cfg",
        ],
        d,
    );
    assert!(ok, "{err}");
    assert_eq!(stdout.matches("ktps").count(), 4);
    assert!(stdout.contains("best:"));
    let tuned = std::fs::read_to_string(d.join("tuned.cfg")).unwrap();
    bulktx::config::EngineConfig::parse(&tuned).unwrap();
}

#[test]
fn tm1_workload_runs_with_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(
        &[
            "gen", "--kind", "tm1", "--txns", "400", "--scale", "1", "--compute", "0",
            "--abort-rate", "0.2", "--seed", "11", "--out", "w.txt",
        ],
        d,
    );
    let (ok, stdout, err) = run(
        &["run", "--workload", "w.txt", "--strategy", "tpl", "--lanes", "4"],
        d,
    );
    assert!(ok, "{err}");
    assert!(stdout.contains("aborted"), "{stdout}");
    assert!(stdout.contains("oracle check: ok"), "{stdout}");
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ok, _, err) = run(&["run", "--workload", "missing.txt"], d);
    assert!(!ok);
    assert!(err.contains("error:"));
    let (ok, _, err) = run(
        &[
            "gen", "--kind", "micro", "--tuples", "0", "--out", "w.txt",
        ],
        d,
    );
    assert!(!ok);
    assert!(err.contains("tuple_count"), "{err}");
}
