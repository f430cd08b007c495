use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_viscohom"))
        .current_dir(dir)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const CONSTANT: &str = r#"
[env]
kind = "constant"
seed = 3
window = [-20.0, 20.0]
dx_env = 0.05
a0 = 0.5
v0 = 0.25

[problem]
beta = 1.0

[output]
dir = "out"
"#;

#[test]
fn constant_env_file_has_constant_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), CONSTANT, &["gen-env"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("out/env.csv"));
    assert_eq!(rows.len(), 801);
    for r in &rows {
        assert_eq!(r[1], "0.5");
        assert_eq!(r[2], "0.25");
    }
    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/gen-env.json")).unwrap())
            .unwrap();
    assert_eq!(side["command"], "gen-env");
    assert_eq!(side["config"]["env"]["seed"], 3);
    assert!(side["wall_time_s"].is_number());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT
        .replace("\"constant\"", "\"iid-interp\"")
        .replace("a0 = 0.5", "a0 = 1.0");
    let a = run(dir.path(), &cfg, &["gen-env", "--out", "a", "--workers", "1"]);
    let b = run(dir.path(), &cfg, &["gen-env", "--out", "b", "--workers", "3"]);
    assert!(a.status.success() && b.status.success());
    let fa = fs::read(dir.path().join("a/env.csv")).unwrap();
    let fb = fs::read(dir.path().join("b/env.csv")).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn seed_override_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.replace("\"constant\"", "\"iid-interp\"").replace("a0 = 0.5", "a0 = 1.0");
    run(dir.path(), &cfg, &["gen-env", "--out", "a"]);
    run(dir.path(), &cfg, &["gen-env", "--out", "b", "--seed-override", "4"]);
    let fa = fs::read(dir.path().join("a/env.csv")).unwrap();
    let fb = fs::read(dir.path().join("b/env.csv")).unwrap();
    assert_ne!(fa, fb);
}

#[test]
fn missing_seed_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.replace("seed = 3\n", "");
    let out = run(dir.path(), &cfg, &["gen-env"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let out = run(dir.path(), &cfg, &["gen-env", "--seed-override", "9"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_key_and_bad_beta_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &CONSTANT.replace("a0 = 0.5", "a0 = 0.5\nalpha = 1"), &["gen-env"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &CONSTANT.replace("beta = 1.0", "beta = -1.0"), &["gen-env"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theta_curve_on_flat_potential_is_the_branch_inverse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.replace("v0 = 0.25", "v0 = 0.0").replace("[-20.0, 20.0]", "[-300.0, 300.0]")
        + r#"
[theta]
lambdas = [0.5, 1.0, 2.0, 4.0]
x_len = 100.0
n_batches = 10
"#;
    let out = run(dir.path(), &cfg, &["theta-curve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("out/theta_curve.csv"));
    assert_eq!(rows.len(), 8);
    assert!(rows[..4].iter().all(|r| r[1] == "left"));
    for r in &rows {
        let theta: f64 = r[2].parse().unwrap();
        let ginv: f64 = r[6].parse().unwrap();
        let lambda: f64 = r[0].parse().unwrap();
        assert!((theta - ginv).abs() <= 1e-12, "{r:?}");
        assert!((ginv.abs() - lambda.sqrt()).abs() <= 1e-12);
    }
}

#[test]
fn homogenize_on_the_flat_piece_uses_the_base_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[env]
kind = "iid-interp"
seed = 11
window = [-1600.0, 1600.0]
dx_env = 0.01

[problem]
beta = 1.0

[output]
dir = "out"

[theta]
x_len = 200.0
n_batches = 10
tol = 1e-3

[effective]
thetas = [-3.0, 0.0, 3.0]
max_ci = 0.2

[homogenize]
thetas = [0.0]
epsilons = [0.5, 0.25]
half_width = 2.0
effective_table = "out/effective.csv"
"#;
    let out = run(dir.path(), cfg, &["effective"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eff = csv_rows(&dir.path().join("out/effective.csv"));
    assert_eq!(eff[1][4], "flat");
    let out = run(dir.path(), cfg, &["homogenize"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("out/homogenize.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[3].parse::<f64>().unwrap(), 1.0);
    }
    assert_eq!(rows[0][1], "0.5");
}

#[test]
fn homogenize_requires_a_growth_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.to_string()
        + r#"
[hamiltonian]
family = "log"

[homogenize]
thetas = [1.0]
epsilons = [0.5]
"#;
    let out = run(dir.path(), &cfg, &["homogenize"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("growth"));
}

#[test]
fn periodic_env_has_no_long_hill() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[env]
kind = "periodic"
seed = 5
window = [-200.0, 200.0]

[problem]
beta = 1.0

[output]
dir = "out"

[hill]
h = 0.9
c = 1.0
"#;
    let out = run(dir.path(), cfg, &["hill-check"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "none");
    let rows = csv_rows(&dir.path().join("out/hill.csv"));
    assert_eq!(rows[0][2], "none");
}

#[test]
fn corrector_probes_pass_on_a_flat_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.to_string()
        + r#"
[probe]
target = "corrector"
lambda = 2.0
region = [-5.0, 5.0]
delta = 0.1
"#;
    let out = run(dir.path(), &cfg, &["probe"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("out/probe.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "sub");
    assert!(rows.iter().all(|r| r[3] == "true"));
}
