use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pce_shaper_cli::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pce-shaper"))
}

fn run(dir: &Path, config: &str, verb: &str) -> Output {
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    bin()
        .args([verb, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

const DETERMINISTIC: &str = r#"
[schedule]
halfwidth1_pi = 0.0
halfwidth2_pi = 0.0
t1 = 5.0
t2 = 10.0
"#;

#[test]
fn shipped_configs_are_valid() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn mc_convergence_single_rung_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "seed = 5\n[schedule]\nt1 = 10.0\nt2 = 20.0\n[mc]\nsample_sizes = [10]\n";
    let out = run(dir.path(), cfg, "mc-convergence");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("out/mc_convergence.csv");
    let first = std::fs::read(&csv).unwrap();
    let (header, rows) = read_csv(&csv);
    assert_eq!(header, ["sample_size", "mean", "variance", "stderr_mean", "stderr_variance"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 10.0);

    assert!(run(dir.path(), cfg, "mc-convergence").status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), first);

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/mc-convergence.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["schedule"]["t1"], 10.0);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o == "mc_convergence.csv"));
}

#[test]
fn pce_convergence_collapses_to_the_deterministic_response() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{DETERMINISTIC}[pce]\ndegrees = [0]\n[mc]\nreference_samples = 10\nstate_samples = 10\n");
    let out = run(dir.path(), &cfg, "pce-convergence");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/pce_degree_000.csv"));
    let (t, mx, vx) = (column(&header, "t"), column(&header, "mean_x"), column(&header, "var_x"));
    assert!(rows.len() > 20);
    for r in &rows {
        assert!((r[mx] - (1.0 - (PI * r[t]).cos())).abs() < 1e-9, "t={}", r[t]);
        assert!(r[vx].abs() < 1e-9);
    }
    let (_, reference) = read_csv(&dir.path().join("out/mc_reference.csv"));
    assert_eq!(reference.len(), rows.len());
}

#[test]
fn shaped_residual_vanishes_without_uncertainty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{DETERMINISTIC}[pce]\ndegree = 2\n[mc]\nreference_samples = 20\n[optimizer]\nmax_evals = 30\n");
    let out = run(dir.path(), &cfg, "compare-shapers");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/residual_energy.csv")).unwrap();
    let mut shaped = 0;
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let (pce, mc): (f64, f64) = (cells[1].parse().unwrap(), cells[3].parse().unwrap());
        if cells[0] != "unshaped" {
            assert!(pce.abs() < 1e-9 && mc.abs() < 1e-9, "{line}");
            shaped += 1;
        }
    }
    assert_eq!(shaped, 4);
    let params = std::fs::read_to_string(dir.path().join("out/shaper_parameters.csv")).unwrap();
    assert!(params.lines().any(|l| l.starts_with("gsa_xi1,2,")));
    assert!(params.lines().any(|l| l.starts_with("gsa_xi2,2,")));
}

#[test]
fn heatmap_single_point_at_the_nominal_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[schedule]
t1 = 10.0
t2 = 20.0
[heatmap]
points_n = 1
points_m = 1
[heatmap.gsa_xi1]
amplitudes = [0.2617, 0.4745, 0.2638]
delays = [1.0, 2.0]
[heatmap.gsa_xi2]
amplitudes = [0.2673, 0.4673, 0.2654]
delays = [1.0, 2.0]
"#;
    let out = run(dir.path(), cfg, "heatmap");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/heatmap.csv"));
    assert_eq!(rows.len(), 1);
    assert!((rows[0][column(&header, "omega_n")] - PI).abs() < 1e-15);
    assert!((rows[0][column(&header, "omega_m")] - PI).abs() < 1e-15);
    assert!(rows[0][column(&header, "v_robust")] < 1e-20);
}

#[test]
fn timing_reports_a_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[schedule]\nt1 = 10.0\nt2 = 20.0\n[timing]\ndegrees = [1, 2]\nmc_samples = 5\nrepeats = 1\n";
    let out = run(dir.path(), cfg, "timing");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/timing.json")).unwrap()).unwrap();
    assert!(v["mc_over_pce"].as_f64().unwrap() > 0.0);
    assert_eq!(v["pce"].as_array().unwrap().len(), 2);
}

#[test]
fn failures_emit_json_and_nonzero_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "[schedule]\nt1 = 30.0\nt2 = 20.0\n", "mc-convergence");
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");

    let out = run(dir.path(), "[pce]\nbogus = 1\n", "timing");
    assert_eq!(out.status.code(), Some(2));
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stderr).is_ok());

    let out = bin().arg("no-such-verb").output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");

    let out = bin().args(["heatmap", "--config", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(5));
}
