use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[domain]
delta = 0.2
resolution = 256

[model]
eps = 0.05
eps_ladder = [0.03, 0.04, 0.05]

[grid]
n_theta = 96
n_q = 32
focus_ratio = 4.0

[time]
dt = 0.05
t_end = 1.0
stride = 5
checkpoint_every = 2

[noise]
n_modes = 8
amplitude = 0.0

[initial]
xi0 = 1.0
"#;

fn dropsim(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_dropsim"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .env_remove("DROPSIM_SEEDS__BASE")
        .output()
        .unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn assert_run_dir(dir: &Path) {
    for name in ["config.toml", "seeds.csv", "meta.json"] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("meta.json")).unwrap()).unwrap();
    for key in ["grid_hash", "version", "residual", "residual_budget", "eps_bound"] {
        assert!(meta.get(key).is_some(), "meta.json lacks {key}");
    }
}

#[test]
fn scalings_write_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scalings");
    let res = dropsim(tmp.path(), SMALL, &["scalings", "--out", out.to_str().unwrap()]);
    assert_ok(&res);
    assert_run_dir(&out);
    let values = fs::read_to_string(out.join("scaling_values.csv")).unwrap();
    assert!(values.starts_with("name,eps,value"));
    // Eight norms at three eps values.
    assert_eq!(values.lines().count(), 1 + 8 * 3);
    assert!(out.join("scaling_slopes.csv").is_file());
    assert!(out.join("scalings.json").is_file());
}

#[test]
fn deterministic_simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_ok(&dropsim(tmp.path(), SMALL, &["simulate", "--out", dir.to_str().unwrap()]));
    }
    assert_run_dir(&a);
    for name in ["path.csv", "meta.json", "seeds.csv", "summary.json", "checkpoints/w_00000.bin"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    // 20 steps recorded every 5.
    assert_eq!(fs::read_to_string(a.join("path.csv")).unwrap().lines().count(), 1 + 5);
}

#[test]
fn noisy_simulate_depends_on_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let noisy = SMALL.replace("amplitude = 0.0", "amplitude = 0.05");
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        assert_ok(&dropsim(tmp.path(), &noisy, &["simulate", "--seed", seed, "--out", dir.to_str().unwrap()]));
        fs::read(dir.join("path.csv")).unwrap()
    };
    let (first, again, other) = (run("a", "3"), run("b", "3"), run("c", "4"));
    assert_eq!(first, again);
    assert_ne!(first, other);
}

#[test]
fn invalid_config_reports_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("eps = 0.05", "eps = 0.08");
    let res = dropsim(tmp.path(), &bad, &["simulate", "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!res.status.success());
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "ValidationError");
    assert!(err["message"].as_str().unwrap().contains("upbound"));

    let res = dropsim(tmp.path(), &SMALL.replace("dt = 0.05\n", ""), &["simulate"]);
    assert!(!res.status.success());
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "ParseError");
    assert!(err["message"].as_str().unwrap().contains("dt"));
}

#[test]
fn environment_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    fs::write(&path, SMALL).unwrap();
    let out = tmp.path().join("env");
    let res = Command::new(env!("CARGO_BIN_EXE_dropsim"))
        .args(["droplet-dump", "--config"])
        .arg(&path)
        .env("DROPSIM_OUTPUT__DIR", &out)
        .env("DROPSIM_INITIAL__XI0", "2.0")
        .output()
        .unwrap();
    assert_ok(&res);
    let config = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(config.contains("xi0 = 2.0"));
    let drop: serde_json::Value = serde_json::from_slice(&fs::read(out.join("droplet.json")).unwrap()).unwrap();
    assert!((drop["xi"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((drop["mass"].as_f64().unwrap() - drop["target_mass"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn exit_times_report_a_wilson_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let config = format!("{SMALL}\n[experiment]\nreplicas = 30\namplitude_ladder = [0.0, 2.0]\n");
    let out = tmp.path().join("exit");
    assert_ok(&dropsim(tmp.path(), &config, &["exit-times", "--workers", "2", "--out", out.to_str().unwrap()]));
    assert_run_dir(&out);
    for k in 0..2 {
        let stats: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join(format!("exit_{k}.json"))).unwrap()).unwrap();
        assert_eq!(stats["replicas"], 30);
        let (lo, hi) = (stats["wilson_low"].as_f64().unwrap(), stats["wilson_high"].as_f64().unwrap());
        let p = stats["probability"].as_f64().unwrap();
        assert!(lo <= p && p <= hi);
        assert!(out.join(format!("exit_{k}_histogram.csv")).is_file());
    }
    let silent: serde_json::Value = serde_json::from_slice(&fs::read(out.join("exit_0.json")).unwrap()).unwrap();
    assert_eq!(silent["exits"], 0);
    // One header, the base seed, and a row per replica and rung.
    assert_eq!(fs::read_to_string(out.join("seeds.csv")).unwrap().lines().count(), 2 + 60);
}
