use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dbshadow");

fn example_config() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tfim2.json"))
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--output-dir").arg(out).env_remove("DBSHADOW_WORKERS").output().unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn shipped_config_verifies_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--config", example_config().to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(dir.path());
    assert_eq!(rep["passed"], true);
    for ch in rep["channels"].as_array().unwrap() {
        for key in ["completeness", "fixed_point", "kms_channel", "kms_kraus_1", "kms_kraus_2"] {
            assert!(ch[key].as_f64().unwrap() <= 1e-8, "{key}: {}", ch[key]);
        }
    }
}

#[test]
fn example_config_command_matches_shipped_file() {
    let out = Command::new(BIN).arg("example-config").output().unwrap();
    assert!(out.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let shipped: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(example_config()).unwrap()).unwrap();
    assert_eq!(printed, shipped);
}

#[test]
fn construction_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config().to_str().unwrap();
    let out = run(&["verify", "--config", cfg, "--sigma", "0.3", "--c", "1.0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("channel construction failed"));
}

#[test]
fn oversized_observable_is_rejected_at_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("big.json");
    std::fs::write(
        &cfg,
        r#"{"n": 1, "hamiltonian": {"terms": "1.0 Z"}, "observables": [{"id": "big", "terms": "1.5 X"}]}"#,
    )
    .unwrap();
    let out = run(&["verify", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("big") && err.contains("norm"), "{err}");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = dir.path().join("bad.json");
    std::fs::write(&bad_json, "{\n  \"n\": 1,\n  \"beta\": oops\n}\n").unwrap();
    let out = run(&["verify", "--config", bad_json.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:3"), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(dir.path().join("h.txt"), "# Ising\n1.0 ZZ\n0.5 XQ\n").unwrap();
    let cfg = dir.path().join("file.json");
    std::fs::write(&cfg, r#"{"n": 2, "hamiltonian": {"file": "h.txt"}, "observables": [{"terms": "1.0 ZZ"}]}"#)
        .unwrap();
    let out = run(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("h.txt:3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn pauli_files_resolve_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("h.txt"), "-1.0 ZZ\n-0.5 XI\n").unwrap();
    std::fs::write(dir.path().join("a.txt"), "0.5 ZI\n0.5 IZ\n").unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"n": 2, "hamiltonian": {"file": "h.txt"}, "observables": [{"file": "a.txt"}]}"#).unwrap();
    let out = run(&["verify", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&dir.path().join("out"))["channels"][0]["observable"], "a.txt");
}

#[test]
fn estimate_writes_fixed_file_names_with_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config().to_str().unwrap();
    let out = run(&["estimate", "--config", cfg, "--epsilon", "0.2", "--delta", "0.2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let digest = report(dir.path())["config_digest"].as_str().unwrap().to_string();
    for name in ["estimates.csv", "transcript.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with(&format!("# config_digest={digest}\n# seed=2024\n")), "{name}");
    }
    for name in ["estimates.json", "transcript.json"] {
        assert!(dir.path().join(name).exists());
    }
}

#[test]
fn worker_count_does_not_change_outputs() {
    let cfg = example_config().to_str().unwrap();
    let args = ["estimate", "--config", cfg, "--epsilon", "0.3", "--delta", "0.3"];
    let mut files = Vec::new();
    for workers in ["1", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(BIN)
            .args(args)
            .arg("--output-dir")
            .arg(dir.path())
            .env("DBSHADOW_WORKERS", workers)
            .output()
            .unwrap();
        assert!(out.status.success());
        files.push(
            ["estimates.csv", "transcript.csv", "report.json"].map(|n| std::fs::read(dir.path().join(n)).unwrap()),
        );
    }
    assert_eq!(files[0], files[1]);

    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(args)
        .arg("--output-dir")
        .arg(dir.path())
        .env("DBSHADOW_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lowerbound_battery_passes_and_skips_below_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["lowerbound", "--config", example_config().to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(dir.path());
    assert_eq!(rep["tv"]["violations"], 0);
    assert!(rep["rounding"]["corrupted_detected"].as_u64().unwrap() > 0);

    let cfg = dir.path().join("cold.json");
    std::fs::write(&cfg, r#"{"lowerbound": {"tv_beta_offset": -1.0, "rounding_trials": 100, "realize_trials": 10, "collision_trials": 100, "hybrid_instances": 4}}"#).unwrap();
    let out = run(&["lowerbound", "--config", cfg.to_str().unwrap()], &dir.path().join("cold"));
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&dir.path().join("cold"));
    assert_eq!(rep["tv"]["checked"], 0);
    assert_eq!(rep["tv"]["skipped"], rep["tv"]["cases"]);
}

#[test]
fn scaling_budget_refusal_reports_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("huge.json");
    std::fs::write(&cfg, r#"{"n": 2, "hamiltonian": {"terms": "1.0 ZZ"}, "observables": [{"terms": "1.0 ZZ"}], "scaling": {"epsilon_grid": [0.01], "max_steps": 1000}}"#).unwrap();
    let out = run(&["scaling", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("max_steps") && err.contains(" s "), "{err}");
}
