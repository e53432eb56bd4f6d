use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ratact(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratact"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RATACT_OUT_DIR")
        .output()
        .unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_init_writes_six_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratact(
        &["fit-init", "--target", "leaky-relu", "--range", "-5", "5", "--degrees", "3", "2", "--variant", "original"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("fit_init.json"));
    assert_eq!(report["coefficients"].as_array().unwrap().len(), 6);
    assert!(report["mse"].as_f64().unwrap() < 1e-2);
    let residuals = std::fs::read_to_string(dir.path().join("fit_residuals.csv")).unwrap();
    assert_eq!(residuals.lines().count(), 1002);
}

#[test]
fn fit_init_identity_recovers_slope() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratact(&["fit-init", "--target", "identity", "--degrees", "1", "0"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c: Vec<f64> = json(&dir.path().join("fit_init.json"))["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((c[0] - 1.0).abs() < 1e-8, "{c:?}");
    assert!(c[1].abs() < 1e-8, "{c:?}");
}

#[test]
fn usage_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratact(&["fit-init", "--range", "5", "-5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("LO < HI"));

    let o = ratact(&["train-continual", "does/not/exist.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let typo = config(
        dir.path(),
        "typo.json",
        r#"{"experiment": "td_probe", "model": {"kind": "tabular"}, "env_steps": 10, "gama": 0.5}"#,
    );
    let o = ratact(&["td-probe", typo.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));

    let o = ratact(&["no-such-command"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn continual_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c.json",
        r#"{"experiment": "continual",
            "network": {"hidden": [32, 32], "activation": {"kind": "rational", "init": "constrained_low"}},
            "stream": {"kind": "label_reshuffle", "n_tasks": 3, "epochs_per_task": 2},
            "run": {"coeff_decay": 0.1, "diag_every": 20}}"#,
    );
    let start = std::time::Instant::now();
    let o = ratact(&["train-continual", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs() < 60);
    for f in ["epochs_seed0.csv", "diagnostics_seed0.csv", "plasticity.csv", "summary.json", "plasticity.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let plasticity = std::fs::read_to_string(dir.path().join("plasticity.csv")).unwrap();
    assert_eq!(plasticity.lines().count(), 4);
}

#[test]
fn diverged_continual_seed_is_marked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c.json",
        r#"{"experiment": "continual",
            "dataset": {"kind": "gaussian_mixture", "classes": 4, "dim": 8, "per_class": 30},
            "network": {"hidden": [16], "activation": {"kind": "rational",
                "init": {"variant": {"kind": "original"}, "numerator": [1e300, 0, 0, 0], "denominator": [0, 0]}}},
            "stream": {"kind": "label_reshuffle", "n_tasks": 2, "epochs_per_task": 2}}"#,
    );
    let o = ratact(&["train-continual", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plasticity = std::fs::read_to_string(dir.path().join("plasticity.csv")).unwrap();
    let header: Vec<&str> = plasticity.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "diverged").unwrap();
    let row: Vec<&str> = plasticity.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[col], "1", "{plasticity}");
}

#[test]
fn sweep_grid_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "s.json",
        r#"{"experiment": "degree_sweep",
            "dataset": {"kind": "gaussian_mixture", "classes": 4, "dim": 8, "per_class": 30},
            "hidden": [16], "stream": {"kind": "label_reshuffle", "n_tasks": 2, "epochs_per_task": 2},
            "grid": {"num_count": [2, 4], "den_degree": [0, 2]}}"#,
    );
    let o = ratact(&["degree-sweep", cfg.to_str().unwrap(), "--jobs", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 10);
    let svg = std::fs::read_to_string(dir.path().join("sweep_heatmap.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn ntk_self_test_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratact(&["ntk", "--self-test", "8"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["rank"], 8);

    let cfg = config(
        dir.path(),
        "n.json",
        r#"{"experiment": "ntk",
            "network": {"hidden": [16, 16], "activation": {"kind": "rational", "init": "constrained_low"}},
            "batch_size": 16, "snapshots": 3, "every": 5}"#,
    );
    let o = ratact(&["ntk", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        assert!(dir.path().join(format!("ntk_seed0_snap{k}.csv")).exists());
    }
    assert!(dir.path().join("ntk_spectrum.svg").exists());
}

#[test]
fn ntk_non_finite_jacobian_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "n.json",
        r#"{"experiment": "ntk",
            "dataset": {"kind": "gaussian_mixture", "classes": 4, "dim": 8, "per_class": 30},
            "network": {"hidden": [16], "activation": {"kind": "rational",
                "init": {"variant": {"kind": "original"}, "numerator": [1e308, 0, 0, 0], "denominator": [0, 0]}}},
            "batch_size": 8, "snapshots": 2, "every": 1}"#,
    );
    let o = ratact(&["ntk", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("ntk_explosion.json").exists());
}

#[test]
fn td_probe_myopic_run_has_no_overestimation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "t.json",
        r#"{"experiment": "td_probe", "mdp": {"gamma": 1e-12},
            "model": {"kind": "tabular", "adam": {"lr": 0.05, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}},
            "env_steps": 5000, "tau": 0.05, "checkpoint_every": 1000}"#,
    );
    let o = ratact(&["td-probe", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&dir.path().join("td_summary.json"));
    let peak = summary["by_utd"][0]["median_peak_overestimation"].as_f64().unwrap();
    let last = std::fs::read_to_string(dir.path().join("td_utd1_seed0.csv")).unwrap();
    let final_over: f64 = last.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(final_over.abs() < 1e-3, "final overestimation {final_over}, peak {peak}");
}

#[test]
fn td_probe_utd_sweep_emits_one_curve_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "t.json",
        r#"{"experiment": "td_probe", "mdp": {"reward_scale": 10},
            "model": {"kind": "net", "network": {"hidden": [8, 8], "activation": {"kind": "rational", "init": "original_low"}}},
            "utd": [1, 4, 16], "env_steps": 100, "buffer_size": 100, "checkpoint_every": 25}"#,
    );
    let o = ratact(&["td-probe", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for u in [1, 4, 16] {
        assert!(dir.path().join(format!("td_curve_utd{u}.csv")).exists());
    }
}

#[test]
fn td_probe_divergence_is_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "t.json",
        r#"{"experiment": "td_probe", "mdp": {"reward_scale": 100},
            "model": {"kind": "net", "network": {"hidden": [8], "activation": {"kind": "rational",
                "init": {"variant": {"kind": "original"}, "numerator": [1e300, 0, 0, 0], "denominator": [0, 0]}}}},
            "env_steps": 50, "buffer_size": 100, "checkpoint_every": 10}"#,
    );
    let o = ratact(&["td-probe", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("td_summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "1", "{summary}");
}

#[test]
fn plot_line_heatmap_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let line = config(dir.path(), "line.csv", "x,y\n0,1\n1,2\n2,1.5\n");
    let o = Command::new(env!("CARGO_BIN_EXE_ratact")).args(["plot", line.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(dir.path().join("line.svg")).unwrap().contains("<polyline"));

    let heat = config(dir.path(), "heat.csv", "p,m,v\n2,0,1.0\n3,0,0.9\n2,1,nan\n3,1,1.1\n");
    let out = dir.path().join("h.svg");
    let o = Command::new(env!("CARGO_BIN_EXE_ratact"))
        .args(["plot", heat.to_str().unwrap(), "--kind", "heatmap", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&out).unwrap().contains("hatch"));

    let bad = config(dir.path(), "bad.csv", "x,y\n0,1\n1\n");
    let o = Command::new(env!("CARGO_BIN_EXE_ratact")).args(["plot", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("bad.svg").exists());
}
