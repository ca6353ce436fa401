use std::path::PathBuf;
use std::process::{Command, Output};

use deformed_wigner::bk::bk_support;

fn dwig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwig")).args(args).output().expect("dwig runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dwig-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn parse_csv(text: &str) -> Vec<(f64, f64)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,rho"));
    lines
        .map(|l| {
            let (x, r) = l.split_once(',').unwrap();
            (x.parse().unwrap(), r.parse().unwrap())
        })
        .collect()
}

#[test]
fn solve_density_emits_a_normalized_curve() {
    let out = dwig(&["solve-density", "--atoms", "-2:0.5,2:0.5", "--grid", "-4:4:2001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 2001);
    let h = rows[1].0 - rows[0].0;
    let mass: f64 = rows.windows(2).map(|w| 0.5 * h * (w[0].1 + w[1].1)).sum();
    assert!((mass - 1.0).abs() < 2e-3, "{mass}");
    assert!(rows.iter().all(|r| r.1 >= 0.0));
}

#[test]
fn bk_density_matches_solver_in_the_interior() {
    let solved = parse_csv(&String::from_utf8(dwig(&["solve-density", "--atoms", "-2:0.5,2:0.5", "--grid", "-4:4:2001"]).stdout).unwrap());
    let out = dwig(&["bk-density", "--a", "2", "--grid", "-4:4:2001"]);
    assert!(out.status.success());
    let closed = parse_csv(&String::from_utf8(out.stdout).unwrap());
    let p = bk_support(2.0).unwrap();
    let edges = [-p.alpha, -p.beta, p.beta, p.alpha];
    let mut checked = 0;
    for (s, c) in solved.iter().zip(&closed) {
        assert_eq!(s.0, c.0);
        if edges.iter().all(|e| (s.0 - e).abs() >= 0.02) {
            assert!((s.1 - c.1).abs() <= 1e-6, "x = {}: {} vs {}", s.0, s.1, c.1);
            checked += 1;
        }
    }
    assert!(checked > 1900);
}

#[test]
fn malformed_input_exits_nonzero() {
    let out = dwig(&["solve-density", "--atoms", "2:"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert_eq!(dwig(&["solve-density", "--atoms", "0:1", "--grid", "4:-4:10"]).status.code(), Some(2));
    assert_eq!(dwig(&["bk-density", "--a", "0.5"]).status.code(), Some(2));
    assert_eq!(dwig(&["solve-density", "--atoms", "0:1", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(dwig(&["simulate", "--atoms", "0:1"]).status.code(), Some(2));
}

#[test]
fn minimal_report_run() {
    let dir = scratch("report");
    let cfg = dir.join("minimal.toml");
    std::fs::write(
        &cfg,
        "atoms = \"0:1\"\nlaw = \"gaussian-complex\"\nn = [200]\ntrials = 5\nseed = 3\n\n[tests]\nconcentration = true\n",
    )
    .unwrap();
    let started = std::time::Instant::now();
    let out = dwig(&["report", cfg.to_str().unwrap(), "--output", dir.join("out").to_str().unwrap(), "--workers", "1"]);
    assert!(started.elapsed().as_secs() < 30);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    let records = report["payload"]["report"]["records"].as_array().unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0]["test"], "concentration");
    assert!(dir.join("out/density.csv").exists() && dir.join("out/support.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn simulate_then_stats() {
    let dir = scratch("simulate");
    let out = dwig(&[
        "simulate", "--atoms", "-2:0.5,2:0.5", "--n", "300", "--trials", "3", "--seed", "11", "--vectors", "--output",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<String> = (0..3).map(|t| dir.join(format!("n300_trial{t}.csv")).to_str().unwrap().to_string()).collect();
    let mut args = vec!["stats", "--atoms", "-2:0.5,2:0.5"];
    args.extend(files.iter().map(String::as_str));
    let out = dwig(&args);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let tests: Vec<&str> = report["records"].as_array().unwrap().iter().map(|r| r["test"].as_str().unwrap()).collect();
    assert_eq!(tests, ["concentration", "gaps", "delocalization"]);
    assert_eq!(report["records"][0]["provenance"][0]["trials"], serde_json::json!([0, 1, 2]));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn universality_emits_json() {
    let out = dwig(&[
        "universality", "--law-a", "gaussian-complex", "--law-b", "matched4-complex", "--atoms", "-2:0.5,2:0.5", "--n",
        "60", "--trials", "100", "--seed", "7", "--shuffles", "1000",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = v["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert!(v["ks"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["match_order"], 5);
    assert_eq!(out.status.code(), Some(if v["pass"].as_bool().unwrap() { 0 } else { 1 }));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = deformed_wigner::experiment::ExperimentConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(deformed_wigner::experiment::ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        seen += 1;
    }
    assert!(seen >= 2);
}
