use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subcrit-cp"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const TWO_STATE: &str = r#"{
    "group": {"model": "zd", "dim": 1},
    "kernel": [{"offset": [1], "rate": 1.0}, {"offset": [-1], "rate": 1.0}],
    "delta": 1.0,
    "caps": [2, 1],
    "mc": {"replicates": 500, "t_grid": [1.0, 2.0], "seed": 7, "conditioned_times": [1.0]}
}"#;

#[test]
fn sweep_without_infections_is_minus_delta() {
    let dir = scratch("sweep_pure_death");
    let cfg = write_config(
        &dir,
        r#"{"kernel": [], "delta": 1.0, "delta_grid": [0.5, 1.0, 1.5], "caps": [3, 2],
            "mc": {"replicates": 200, "t_grid": [0.5, 1.0]}}"#,
    );
    let out = run("sweep", &cfg, &dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "delta,r_spectral,r_mc,r_mc_stderr,caps_S,caps_D,trunc_mass,derivative_formula,derivative_fd"
    );
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 3);
    for (row, delta) in rows.iter().zip([0.5, 1.0, 1.5]) {
        let r: f64 = row[1].parse().unwrap();
        assert!((r + delta).abs() < 1e-12, "{row:?}");
        let formula: f64 = row[7].parse().unwrap();
        assert_eq!(formula, 1.0);
        let fd: f64 = row[8].parse().unwrap();
        assert!((fd - 1.0).abs() < 1e-9);
    }
    let doc = read_json(&dir.join("sweep.json"));
    assert_eq!(doc["command"], "sweep");
    assert_eq!(doc["results"]["audit"]["lipschitz"], true);
    assert_eq!(doc["results"]["audit"]["nonincreasing"], true);
}

#[test]
fn check_passes_on_two_state_instance() {
    let dir = scratch("check_two_state");
    let cfg = write_config(&dir, TWO_STATE);
    let out = run("check", &cfg, &dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.join("check.json"));
    let r = doc["results"]["r_hat"].as_f64().unwrap();
    assert!((r - (-7.0 + 17f64.sqrt()) / 2.0).abs() < 1e-9);
    assert_eq!(doc["results"]["all_passed"], true);
    // The resolved config is echoed with defaults filled in.
    assert_eq!(doc["config"]["fd_step"], 0.05);
    assert_eq!(doc["config"]["caps"], serde_json::json!([2, 1]));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = scratch("reproducible");
    let json = TWO_STATE.replace("\"delta\": 1.0,", "\"delta\": 1.0, \"record_wall_clock\": false, \"gammas\": [0.0, 0.3],");
    let cfg = write_config(&dir, &json);
    for command in ["growth", "eigenmeasure", "derivative", "simulate"] {
        let mut docs = Vec::new();
        for threads in ["1", "2"] {
            let out_dir = dir.join(format!("{command}-{threads}"));
            let out = run(command, &cfg, &out_dir, &["--threads", threads]);
            assert!(out.status.success(), "{command}: {}", String::from_utf8_lossy(&out.stderr));
            docs.push(std::fs::read(out_dir.join(format!("{command}.json"))).unwrap());
        }
        let mut a = String::from_utf8(docs[0].clone()).unwrap();
        let b = String::from_utf8(docs[1].clone()).unwrap();
        // Only the echoed thread count may differ.
        a = a.replace("\"threads\": 1", "\"threads\": 2");
        assert_eq!(a, b, "{command}");
    }
}

#[test]
fn seed_override_changes_monte_carlo_only() {
    let dir = scratch("seed_override");
    let json = TWO_STATE.replace("\"delta\": 1.0,", "\"delta\": 1.0, \"record_wall_clock\": false,");
    let cfg = write_config(&dir, &json);
    let a = run("growth", &cfg, &dir.join("a"), &["--seed", "1"]);
    let b = run("growth", &cfg, &dir.join("b"), &["--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    let da = read_json(&dir.join("a/growth.json"));
    let db = read_json(&dir.join("b/growth.json"));
    assert_eq!(da["config"]["mc"]["seed"], 1);
    assert_eq!(da["results"]["rows"][0]["r_spectral"], db["results"]["rows"][0]["r_spectral"]);
    assert_ne!(da["results"]["rows"][0]["mc"], db["results"]["rows"][0]["mc"]);
}

#[test]
fn exit_codes() {
    let dir = scratch("exit_codes");
    let missing = dir.join("missing.json");
    assert_eq!(run("check", &missing, &dir, &[]).status.code(), Some(1));

    let unknown = write_config(&dir, r#"{"delat": 1.0}"#);
    assert_eq!(run("check", &unknown, &dir, &[]).status.code(), Some(1));

    let mismatched = write_config(&dir, r#"{"kernel": [{"offset": "a", "rate": 1.0}]}"#);
    assert_eq!(run("spectrum", &mismatched, &dir, &[]).status.code(), Some(1));

    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));

    // A truncated spectrum is never positive, so spectral bisection cannot bracket.
    let spectral = write_config(
        &dir,
        r#"{"caps": [3, 2], "delta_c": {"method": "spectral", "bracket": [0.2, 2.0], "tol": 0.1}}"#,
    );
    assert_eq!(run("delta-c", &spectral, &dir, &[]).status.code(), Some(2));

    let strict = TWO_STATE.replace("\"caps\": [2, 1],", "\"caps\": [2, 1], \"tolerances\": {\"residual\": 1e-300},");
    let strict = write_config(&dir, &strict);
    let out = run("check", &strict, &dir, &[]);
    assert_eq!(out.status.code(), Some(3));
    let doc = read_json(&dir.join("check.json"));
    assert_eq!(doc["results"]["all_passed"], false);
}

#[test]
fn generator_export() {
    let dir = scratch("export");
    let json = TWO_STATE.replace("\"delta\": 1.0,", "\"delta\": 1.0, \"export_generator\": true,");
    let cfg = write_config(&dir, &json);
    assert!(run("spectrum", &cfg, &dir, &[]).status.success());
    let text = std::fs::read_to_string(dir.join("generator_forward.txt")).unwrap();
    let entries: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(entries.contains(&"0 0 -3e0"), "{text}");
    assert!(entries.contains(&"0 1 2e0"));
    assert!(entries.contains(&"1 0 2e0"));
    assert!(entries.contains(&"1 1 -4e0"));
}
