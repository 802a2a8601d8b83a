use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pettis_cli::config::{ExperimentConfig, RSetting};
use pettis_cli::CliError;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

fn small(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(DEFAULT_CONFIG).unwrap();
    cfg.mc.paths = 2000;
    cfg.grid.steps = 16;
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn write_cfg(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    write(dir, "config.toml", &toml::to_string(cfg).unwrap())
}

fn pettis(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pettis"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env_remove("PETTIS_OUTPUT_DIR")
        .output()
        .unwrap()
}

#[test]
fn single_step_single_path_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("out"));
    cfg.grid.steps = 1;
    cfg.mc.paths = 1;
    cfg.bridge = pettis_cli::config::BridgeConfig { s: 0.0, t: 1.0 };
    let out = pettis(&["simulate"], &write_cfg(dir.path(), &cfg));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/paths.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "path_id,t,w");
    assert!(lines[1].starts_with("0,0.0000000000000000e0,0.0000000000000000e0"));
    let process = std::fs::read_to_string(dir.path().join("out/process.csv")).unwrap();
    assert_eq!(
        process.lines().next(),
        Some("path_id,t,coord_0,coord_1,coord_2")
    );
    assert_eq!(process.lines().count(), 3);
}

#[test]
fn csv_values_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("out"));
    assert_eq!(
        pettis(&["simulate"], &write_cfg(dir.path(), &cfg))
            .status
            .code(),
        Some(0)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/process.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2000 * 17);
    for field in rows[5].split(',').skip(1) {
        let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{field}");
        let x: f64 = field.parse().unwrap();
        assert_eq!(pettis_core::paths::fmt_f64(x), field);
    }
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("configured"));
    let config = write_cfg(dir.path(), &cfg);
    let elsewhere = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_pettis"))
        .args(["validate", "--config"])
        .arg(&config)
        .env("PETTIS_OUTPUT_DIR", &elsewhere)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(elsewhere.join("validate_report.json").exists());
    assert!(!dir.path().join("configured").exists());
}

#[test]
fn auto_r_without_proportional_fields_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("out"));
    cfg.process.psi = vec![vec![1.0], vec![1.0], vec![0.0]];
    let config = write_cfg(dir.path(), &cfg);
    for cmd in ["girsanov", "bridge", "validate", "simulate"] {
        let out = pettis(&[cmd], &config);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("no valid drift link r"), "{err}");
    }
}

#[test]
fn explicit_wrong_r_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("out"));
    cfg.girsanov.r = RSetting::Constant(2.0);
    let config = write_cfg(dir.path(), &cfg);
    assert_eq!(pettis(&["girsanov"], &config).status.code(), Some(1));
    assert_eq!(pettis(&["validate"], &config).status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("out/girsanov_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["pass"], false);
    assert!(report["drift_residual"].as_f64().unwrap() > 1.0);
    assert_eq!(report["r"]["mode"], "explicit");
}

#[test]
fn bad_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let typo = DEFAULT_CONFIG.replace("steps = 256", "step = 256");
    let unknown = format!("{DEFAULT_CONFIG}\n[extra]\nx = 1\n");
    let bad_r = DEFAULT_CONFIG.replace("r = \"auto\"", "r = \"guess\"");
    let bad_bridge = DEFAULT_CONFIG.replace("s = 0.25", "s = 0.75");
    let bad_dim = DEFAULT_CONFIG.replace("dim = 3", "dim = 2");
    let zero_t = DEFAULT_CONFIG.replace("T = 1.0", "T = 0.0");
    let off_grid = DEFAULT_CONFIG.replace("s = 0.25", "s = 0.2");
    for (i, text) in [typo, unknown, bad_r, bad_bridge, bad_dim, zero_t, off_grid]
        .iter()
        .enumerate()
    {
        let p = write(dir.path(), &format!("bad{i}.toml"), text);
        assert_eq!(pettis(&["validate"], &p).status.code(), Some(2), "case {i}");
        assert!(matches!(ExperimentConfig::from_toml(text), Err(e) if e.exit_code() == 2));
    }
    assert_eq!(
        pettis(&["validate"], &dir.path().join("missing.toml"))
            .status
            .code(),
        Some(2)
    );
    let no_sub = Command::new(env!("CARGO_BIN_EXE_pettis")).output().unwrap();
    assert_eq!(no_sub.status.code(), Some(2));
}

#[test]
fn unwritable_output_dir_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "not a directory");
    let cfg = small(&blocker.join("out"));
    let out = pettis(&["simulate"], &write_cfg(dir.path(), &cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(matches!(
        pettis_cli::run(pettis_cli::Command::Simulate, &cfg),
        Err(CliError::Io { .. })
    ));
}

#[test]
fn girsanov_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("out"));
    let out = pettis(&["girsanov"], &write_cfg(dir.path(), &cfg));
    assert!(matches!(out.status.code(), Some(0 | 1)));
    let v: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("out/girsanov_report.json")).unwrap(),
    )
    .unwrap();
    for key in [
        "weight_mean",
        "ess",
        "drift_residual",
        "z_scores",
        "pass",
        "seed",
        "config",
        "negative_control",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let z = &v["z_scores"][0];
    for key in ["functional", "s", "t", "statistic", "z"] {
        assert!(z.get(key).is_some(), "{key}");
    }
    assert_eq!(v["seed"], cfg.mc.seed);
    assert_eq!(v["config"]["grid"]["T"], 1.0);
    assert_eq!(v["r"]["coefficients"][0], 0.5);
    let back: ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn bridge_sweep_passes_only_at_t_over_t() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("out"));
    cfg.mc.paths = 100_000;
    let (outcome, rep) = pettis_cli::commands::bridge(&cfg).unwrap();
    assert!(outcome.pass);
    let passing: Vec<f64> = rep
        .alpha_sweep
        .iter()
        .filter(|r| r.report.verdict == pettis_core::conditioning::Verdict::Pass)
        .map(|r| r.alpha)
        .collect();
    assert_eq!(passing, vec![2.0]);
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/bridge_report.json")).unwrap())
            .unwrap();
    for key in ["slope", "slope_se", "intercept", "intercept_se", "verdict"] {
        assert!(v["n_kernel"].get(key).is_some(), "{key}");
    }
    assert_eq!(v["alpha_sweep"][2]["report"]["verdict"], "PASS");
}

#[test]
fn default_config_validates() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "default.toml",
        &DEFAULT_CONFIG.replace(
            "dir = \"out\"",
            &format!("dir = {:?}", dir.path().join("o")),
        ),
    );
    let out = pettis(&["validate"], &p);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn test_pairs_cover_quarters() {
    let cfg = ExperimentConfig::from_toml(DEFAULT_CONFIG).unwrap();
    assert_eq!(
        cfg.test_pairs().unwrap(),
        vec![(0.25, 0.5), (0.5, 0.75), (0.25, 1.0)]
    );
    let mut coarse = cfg.clone();
    coarse.grid.steps = 1;
    coarse.bridge = pettis_cli::config::BridgeConfig { s: 0.0, t: 1.0 };
    assert_eq!(coarse.test_pairs().unwrap(), vec![(0.0, 1.0)]);
}
