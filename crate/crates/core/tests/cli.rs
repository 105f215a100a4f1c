use std::path::{Path, PathBuf};
use std::process::Command;

use sparsemix::cli::run;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn invoke(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["sparsemix"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    Outcome { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn boundary_idj_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"spec": {"family": "idj", "r": 0.25}}"#);
    let o = invoke(&["--no-timestamp", "boundary", path(&cfg)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert!((v["beta_star"].as_f64().unwrap() - 0.75).abs() < 1e-6);
    assert!((v["closed_form"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    let c = &v["conditions"];
    for key in ["convex", "right_continuous_at_0", "endpoint_continuity", "t0_t1_finite", "tail_condition_checked", "hc_optimal"] {
        assert_eq!(c[key], true, "{key}");
    }
    assert!(o.stderr.is_empty());
}

#[test]
fn tailcheck_sparse_exponential_diverges_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.json", r#"{"spec": {"family": "sparse_exponential", "r": 0.5}, "gamma": 1.5}"#);
    let o = invoke(&["--no-timestamp", "tailcheck", path(&cfg)]);
    assert_eq!(o.code, 0);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "diverging");
    assert_eq!(o.stderr.lines().count(), 1);
    assert!(o.stderr.starts_with("warning: "));
}

fn sweep_config(betas: &str) -> String {
    format!(
        r#"{{"spec": {{"family": "idj", "r": 0.6}}, "n_values": [200], "beta_grid": {betas},
            "test_kind": "np_oracle", "replications": 8, "master_seed": 3}}"#
    )
}

#[test]
fn empty_beta_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", &sweep_config("[]"));
    let o = invoke(&["sweep", path(&cfg)]);
    assert_eq!(o.code, 1);
    assert_eq!(o.stderr.trim_end(), "error: beta_grid: must be nonempty");
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", r#"{"spec": {"family": "gaussian_blob", "r": 0.3}}"#);
    let o = invoke(&["--no-timestamp", "boundary", path(&unknown)]);
    assert_eq!(o.code, 1);
    assert_eq!(o.stderr.lines().count(), 1);
    assert!(o.stderr.contains("spec") && o.stderr.contains("gaussian_blob"), "{}", o.stderr);

    let malformed = write(dir.path(), "m.json", r#"{"spec": "#);
    let o = invoke(&["--no-timestamp", "boundary", path(&malformed)]);
    assert_eq!(o.code, 1);
    assert_eq!(o.stderr.lines().count(), 1);

    let o = invoke(&["--no-timestamp", "boundary", path(&dir.path().join("missing.json"))]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.starts_with("error: config: cannot read"));

    let bad_value = write(dir.path(), "v.json", r#"{"spec": {"family": "idj", "r": -1}}"#);
    let o = invoke(&["--no-timestamp", "boundary", path(&bad_value)]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.starts_with("error: r: "), "{}", o.stderr);

    let bad_matrix = write(
        dir.path(),
        "q.json",
        r#"{"spec": {"family": "low_rank", "r": 0.5, "k": 1, "q": [[1, 0.1], [0, 1]]}}"#,
    );
    let o = invoke(&["--no-timestamp", "boundary", path(&bad_matrix)]);
    assert_eq!(o.code, 1, "{}", o.stderr);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"spec": {"family": "idj", "r": 0.25}}"#);
    let unwritable = dir.path().join("no/such/dir/out.json");
    let o = invoke(&["--no-timestamp", "--out", path(&unwritable), "boundary", path(&cfg)]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.starts_with("error: output: "), "{}", o.stderr);
    assert_eq!(o.stderr.lines().count(), 1);
}

#[test]
fn invalid_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.json", r#"{"spec": {"family": "idj", "r": 0.3}, "gamma": 1.5, "n_list": [100, 10, 1000]}"#);
    assert_eq!(invoke(&["--no-timestamp", "tailcheck", path(&cfg)]).code, 1);
    let cfg = write(dir.path(), "h.json", r#"{"spec": {"family": "idj", "r": 0.3}, "beta": 1.5, "n_list": [1e3, 1e4, 1e5, 1e6]}"#);
    assert_eq!(invoke(&["--no-timestamp", "hellinger", path(&cfg)]).code, 1);
}

#[test]
fn hellinger_reports_trend() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "hel.json",
        r#"{"spec": {"family": "idj", "r": 0.25}, "beta": 0.5, "n_list": [1000, 10000, 100000, 1000000]}"#,
    );
    let o = invoke(&["--no-timestamp", "hellinger", path(&cfg)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "supercritical");
    assert_eq!(v["estimates"].as_array().unwrap().len(), 4);
}

#[test]
fn rate_prints_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.json", r#"{"spec": {"family": "idj", "r": 0.25}, "grid": {"lo": -1, "hi": 1, "points": 5}}"#);
    let o = invoke(&["--no-timestamp", "rate", path(&cfg)]);
    assert_eq!(o.code, 0);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines[0], "t,rate");
    assert_eq!(lines.len(), 6);
    let mid: Vec<f64> = lines[3].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(mid[0], 0.0);
    assert!((mid[1] - 0.0625).abs() < 1e-12);
}

#[test]
fn simulate_then_hc_matches_between_variants() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(dir.path(), "sim.json", r#"{"spec": {"family": "idj", "r": 0.4}, "n": 500, "beta": 0.5, "seed": 9}"#);
    let data = dir.path().join("data.csv");
    let o = invoke(&["--quiet", "--out", path(&data), "simulate", path(&sim)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.is_empty() && o.stderr.is_empty());

    let star = write(dir.path(), "star.json", r#"{"spec": {"family": "idj", "r": 0.4}, "data": "data.csv"}"#);
    let classical = write(
        dir.path(),
        "classical.json",
        r#"{"spec": {"family": "idj", "r": 0.4}, "data": "data.csv", "variant": "classical"}"#,
    );
    let a = invoke(&["--no-timestamp", "hc", path(&star)]);
    let b = invoke(&["--no-timestamp", "hc", path(&classical)]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(b.code, 0, "{}", b.stderr);
    let va: serde_json::Value = serde_json::from_str(&a.stdout).unwrap();
    let vb: serde_json::Value = serde_json::from_str(&b.stdout).unwrap();
    let (sa, sb) = (va["outcome"]["statistic"].as_f64().unwrap(), vb["outcome"]["statistic"].as_f64().unwrap());
    assert!((sa - sb).abs() <= 1e-12 * sa.abs().max(1.0), "{sa} vs {sb}");
    assert_eq!(va["outcome"]["decision"], vb["outcome"]["decision"]);

    let missing = write(dir.path(), "x.json", r#"{"spec": {"family": "heteroscedastic", "r": 0.4, "sigma2": 2}, "data": "nope.csv"}"#);
    assert_eq!(invoke(&["--no-timestamp", "hc", path(&missing)]).code, 1);
}

#[test]
fn seed_override_and_stable_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(dir.path(), "sim.json", r#"{"spec": {"family": "heteroscedastic", "r": 0.4, "sigma2": 2}, "n": 50}"#);
    let a = invoke(&["--no-timestamp", "simulate", path(&sim)]);
    let b = invoke(&["simulate", path(&sim)]);
    assert_eq!(a.stdout, b.stdout);
    assert!(b.stderr.lines().last().unwrap().starts_with("# finished at unix time"));
    let c = invoke(&["--no-timestamp", "--seed", "1", "simulate", path(&sim)]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn sweep_writes_csv_and_summary_that_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", &sweep_config("[0.5, 0.9]"));
    let csv_path = dir.path().join("out.csv");
    let o = invoke(&["--quiet", "--out", path(&csv_path), "sweep", path(&cfg)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.json")).unwrap()).unwrap();
    let echoed = write(dir.path(), "echo.json", &summary["config"].to_string());
    let again = dir.path().join("again.csv");
    let o = invoke(&["--quiet", "--out", path(&again), "sweep", path(&echoed)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(std::fs::read(&csv_path).unwrap(), std::fs::read(&again).unwrap());

    let stdout_run = invoke(&["--no-timestamp", "sweep", path(&cfg)]);
    assert_eq!(stdout_run.stdout.as_bytes(), std::fs::read(&csv_path).unwrap().as_slice());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(invoke(&["frobnicate"]).code, 1);
    assert_eq!(invoke(&["--help"]).code, 0);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"spec": {"family": "idj", "r": 0.25}}"#);
    let bin = env!("CARGO_BIN_EXE_sparsemix");
    let ok = Command::new(bin).args(["--no-timestamp", "boundary", path(&cfg)]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = write(dir.path(), "s.json", &sweep_config("[]"));
    let fail = Command::new(bin).args(["sweep", path(&bad)]).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&fail.stderr).trim_end(), "error: beta_grid: must be nonempty");
}
