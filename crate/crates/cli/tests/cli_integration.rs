//! End-to-end tests of the `bangopt` binary: exit codes, output files,
//! determinism and resume behaviour.

use std::path::Path;
use std::process::{Command, Output};

fn bangopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bangopt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn sidecar_without_walltime(dir: &Path, name: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&read(dir, name)).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_seconds");
    v
}

#[test]
fn gap_prints_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(dir.path(), &["gap", "--model", "lmg", "--n", "128", "--output", "gap"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let expected = bangopt::models::critical_gap::<f64>(128).unwrap();
    assert!(
        stdout.contains(&format!("{expected}")),
        "stdout missing gap value: {stdout}"
    );
    let csv = read(dir.path(), "gap.csv");
    assert!(csv.starts_with("model,N,g,gap\n"));
    assert!(csv.contains("lmg,128,1,"));
    assert!(dir.path().join("gap.meta.json").exists(), "sidecar missing");
}

#[test]
fn unknown_family_exits_2_listing_families() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(
        dir.path(),
        &["optimize", "--model", "lz", "--family", "zigzag", "--tau", "0.5"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("double-bang"), "stderr: {stderr}");
    assert!(stderr.contains("crab"), "stderr: {stderr}");
}

#[test]
fn invalid_bound_exits_2_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(
        dir.path(),
        &["optimize", "--model", "lz", "--g0", "-20", "--tau", "0.5"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("g0"), "stderr should name the key: {stderr}");
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = bangopt(
            dir.path(),
            &[
                "optimize", "--model", "lz", "--family", "double-bang", "--tau", "0.5",
                "--seed", "42", "--restarts", "4", "--output", "run",
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        read(dir_a.path(), "run.csv"),
        read(dir_b.path(), "run.csv"),
        "CSV not byte-identical under a fixed seed"
    );
    assert_eq!(
        sidecar_without_walltime(dir_a.path(), "run.meta.json"),
        sidecar_without_walltime(dir_b.path(), "run.meta.json"),
        "sidecars differ beyond wall time"
    );
}

#[test]
fn absent_seed_is_recorded_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(
        dir.path(),
        &[
            "optimize", "--model", "lz", "--family", "double-bang", "--tau", "0.45",
            "--restarts", "3", "--output", "first",
        ],
    );
    assert!(out.status.success());
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "first.meta.json")).unwrap();
    let seed = sidecar["seed"].as_u64().expect("sidecar records the seed");
    let out = bangopt(
        dir.path(),
        &[
            "optimize", "--model", "lz", "--family", "double-bang", "--tau", "0.45",
            "--restarts", "3", "--seed", &seed.to_string(), "--output", "replay",
        ],
    );
    assert!(out.status.success());
    assert_eq!(
        read(dir.path(), "first.csv"),
        read(dir.path(), "replay.csv"),
        "replaying the recorded seed changed the output"
    );
}

#[test]
fn seed_zero_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(
        dir.path(),
        &[
            "optimize", "--model", "lz", "--family", "double-bang", "--tau", "0.4",
            "--seed", "0", "--restarts", "2", "--output", "zero",
        ],
    );
    assert!(out.status.success());
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "zero.meta.json")).unwrap();
    assert_eq!(sidecar["seed"].as_u64(), Some(0));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{ "model": "lz", "family": "double-bang", "tau": 0.5, "restarts": 2, "seed": 7 }"#,
    )
    .unwrap();
    let out = bangopt(
        dir.path(),
        &[
            "optimize", "--config", "run.json", "--tau", "0.3", "--output", "over",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "over.meta.json")).unwrap();
    assert_eq!(sidecar["effective_config"]["tau"].as_f64(), Some(0.3));
    assert_eq!(sidecar["effective_config"]["seed"].as_u64(), Some(7));
}

#[test]
fn scan_resume_reproduces_uninterrupted_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "scan-tau", "--model", "lz", "--family", "double-bang",
        "--tau-list", "0.3,0.4,0.5", "--seed", "11", "--restarts", "3",
        "--output", "scan",
    ];
    let out = bangopt(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let complete = read(dir.path(), "scan.csv");
    assert_eq!(complete.lines().count(), 4, "header plus three rows");

    // simulate an interrupted run: keep the header and the first row only
    let prefix: Vec<&str> = complete.lines().take(2).collect();
    std::fs::write(dir.path().join("scan.csv"), format!("{}\n", prefix.join("\n"))).unwrap();
    let out = bangopt(dir.path(), &args);
    assert!(out.status.success());
    assert_eq!(
        read(dir.path(), "scan.csv"),
        complete,
        "resumed scan differs from the uninterrupted output"
    );
}

#[test]
fn trajectory_writes_bloch_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(
        dir.path(),
        &[
            "trajectory", "--model", "lz", "--family", "double-bang", "--tau", "0.8",
            "--params", "4.0,-2.0,0.3", "--samples", "11", "--output", "traj",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "traj.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,bloch_x,bloch_y,bloch_z"));
    assert_eq!(lines.count(), 11);
    // Bloch norms bounded by one
    for line in csv.lines().skip(1) {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let norm = (vals[1].powi(2) + vals[2].powi(2) + vals[3].powi(2)).sqrt();
        assert!(norm <= 1.0 + 1e-10, "Bloch norm {norm}");
    }
}

#[test]
fn saturated_scan_and_constant_scan_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(
        dir.path(),
        &[
            "saturated-scan", "--model", "lmg", "--n", "12", "--g-max", "1.7",
            "--tau-min", "0.2", "--tau-max", "0.8", "--tau-step", "0.2",
            "--fraction-list", "0.0,0.5,1.0", "--seed", "5", "--output", "sat",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "sat.csv");
    assert_eq!(csv.lines().count(), 1 + 3 * 4);

    let out = bangopt(
        dir.path(),
        &[
            "constant-scan", "--model", "lmg", "--n", "12",
            "--tau-min", "0.5", "--tau-max", "1.5", "--tau-step", "0.5",
            "--g-list", "0.0,0.7", "--seed", "5", "--output", "con",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "con.csv");
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn scan_size_then_fit_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let out = bangopt(
        dir.path(),
        &[
            "scan-size", "--model", "lmg", "--n-list", "8,12", "--g-max", "1.7",
            "--family", "double-bang", "--restarts", "4", "--budget", "800",
            "--xatol", "1e-5", "--fatol", "1e-8", "--seed", "21", "--output", "sizes",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for criterion in ["threshold", "kink"] {
        let out = bangopt(
            dir.path(),
            &[
                "fit-scaling", "--input", "sizes.csv", "--criterion", criterion,
                "--family", "double-bang", "--output", &format!("fit-{criterion}"),
            ],
        );
        assert!(
            out.status.success(),
            "fit-scaling {criterion}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let fit: serde_json::Value =
            serde_json::from_str(&read(dir.path(), &format!("fit-{criterion}.json"))).unwrap();
        assert!(fit["exponent"].as_f64().is_some());
        assert_eq!(fit["points"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn workers_env_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bangopt"))
        .current_dir(dir.path())
        .env("BANGOPT_WORKERS", "1")
        .args([
            "optimize", "--model", "lz", "--family", "double-bang", "--tau", "0.4",
            "--seed", "3", "--restarts", "2", "--output", "w1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "w1.meta.json")).unwrap();
    assert_eq!(sidecar["effective_config"]["workers"].as_u64(), Some(1));
}
