use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oumse::simulator::SimulationStats;
use oumse::OptimalPolicy;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join(name)
}

fn oumse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oumse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn config(dir: &Path, name: &str, eps: f64, f_max: f64) -> PathBuf {
    let p = dir.join(name);
    let text = format!(
        r#"{{"K": 2, "theta": [0.1, 0.5], "sigma_sq": [1, 2], "mu": 1, "eps": {eps}, "f_max": {f_max}}}"#
    );
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn solve_reports_the_active_branch() {
    let dir = tempfile::tempdir().unwrap();
    for (f_max, binding) in [(1.5, false), (0.5, true)] {
        let p = config(dir.path(), "c.json", 0.2, f_max);
        let o = oumse(&["solve", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["binding"], binding);
        assert!(v["manifest"]["config_sha256"].as_str().unwrap().len() == 64);
        let policy: OptimalPolicy = serde_json::from_value(v).unwrap();
        assert_eq!(
            policy.tau_star,
            policy.tau_unconstrained.max(policy.tau_constrained)
        );
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"K\": 2,\n  \"theta\": [0.1, 0.5,\n}").unwrap();
    let o = oumse(&["solve", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.json:4:"), "{}", stderr(&o));

    let p = config(dir.path(), "eps.json", 1.0, 0.5);
    let o = oumse(&["solve", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("erasure probability must be < 1"));

    let o = oumse(&["solve", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(
        &p,
        r#"{"K": 2, "theta": [0.1, 0.5], "sigma_sq": [1, 2], "mu": 1, "eps": 0.3, "f_max": 1.5,
            "solver": {"max_iter": 3}}"#,
    )
    .unwrap();
    let o = oumse(&["solve", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("iterations"));
}

#[test]
fn simulate_zero_epochs_is_a_domain_error() {
    let o = oumse(&[
        "simulate",
        data("data/two_process.json").to_str().unwrap(),
        "--epochs",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_modes_share_service_draws() {
    let cfg = data("data/two_process.json");
    let run = |mode: &str| {
        let o = oumse(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--epochs",
            "20000",
            "--seed",
            "4",
            "--mode",
            mode,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["analytic_mse"], v["beta_star"]);
        assert!(v["z_score"].is_number());
        let stats: SimulationStats = serde_json::from_value(v).unwrap();
        stats
    };
    let (g, s) = (run("grouped"), run("split"));
    assert_eq!(g.mean_epoch_service, s.mean_epoch_service);
    assert_eq!(g.sampling_freq, s.sampling_freq);
    assert!((g.total_time - s.total_time).abs() < 1e-9 * g.total_time);
}

#[test]
fn simulate_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = oumse(&[
        "simulate",
        data("data/two_process.json").to_str().unwrap(),
        "--epochs",
        "50",
        "--tau",
        "2",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,wait,service_total,length,attempts_1,attempts_2,mse_contrib_1,mse_contrib_2"
    );
    assert_eq!(lines.count(), 50);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["tau"], 2.0);
    assert_ne!(v["analytic_mse"], v["beta_star"]);
}

#[test]
fn sweep_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    for _ in 0..2 {
        let o = oumse(&[
            "sweep",
            data("data/erasure_sweep.json").to_str().unwrap(),
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let got = std::fs::read_to_string(&out).unwrap();
        let want = std::fs::read_to_string(data("golden/erasure_sweep.csv")).unwrap();
        assert_eq!(got, want);
    }
    let manifest: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("sweep.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "sweep");
    // the binding flag flips once, between 0.65 and 0.7
    let text = std::fs::read_to_string(&out).unwrap();
    let flags: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(flags.iter().position(|&f| f == "true"), Some(14));
    assert!(flags[14..].iter().all(|&f| f == "true"));
}

#[test]
fn sweep_rejects_unsorted_values() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.json");
    std::fs::write(
        &spec,
        r#"{"base": {"K": 2, "theta": [0.1, 0.5], "sigma_sq": [1, 2], "mu": 1, "eps": 0, "f_max": 0.5},
            "parameter": "theta_2", "values": [0.3, 0.2, 0.4]}"#,
    )
    .unwrap();
    let o = oumse(&[
        "sweep",
        spec.to_str().unwrap(),
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("monotone"));
}

#[test]
fn verify_passes_on_the_two_process_config() {
    let o = oumse(&[
        "verify",
        data("data/two_process.json").to_str().unwrap(),
        "--draws",
        "10000000",
    ]);
    let out = stdout(&o);
    assert!(o.status.success(), "{out}");
    assert!(out.lines().any(|l| l.starts_with("PASS  h_fn")));
    assert!(out.lines().any(|l| l.starts_with("PASS  ou_variance(k=2)")));
    assert!(!out.contains("FAIL"));
}

#[test]
fn verify_warns_on_low_power_but_runs() {
    let o = oumse(&[
        "verify",
        data("data/two_process.json").to_str().unwrap(),
        "--draws",
        "100",
        "--json",
    ]);
    assert!(stderr(&o).contains("low statistical power"));
    assert!(matches!(o.status.code(), Some(0) | Some(4)));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["low_power"], true);
    assert!(!v["checks"].as_array().unwrap().is_empty());
}

#[test]
fn verify_on_an_error_free_channel() {
    let dir = tempfile::tempdir().unwrap();
    let p = config(dir.path(), "c.json", 0.0, 1.5);
    let o = oumse(&["verify", p.to_str().unwrap(), "--draws", "100000", "--json"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let bins: Vec<&Value> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"].as_str().unwrap().starts_with("negbin"))
        .collect();
    assert_eq!(bins.len(), 1);
    assert_eq!(bins[0]["empirical"], 1.0);
    assert_eq!(bins[0]["analytic"], 1.0);
}
