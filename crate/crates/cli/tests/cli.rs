use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_memwalk"));
    c.env_remove("MEMWALK_OUT");
    c
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_config_is_the_reference_walker() {
    let tmp = TempDir::new().unwrap();
    let cfg = shipped("fig1_alpha1.json");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    // alpha = 1 violates the steepness condition
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL singular_steepness"));
    assert!(stdout.contains("coulomb_alpha >= 3"));

    let eff = json(&tmp.path().join("effective_config.json"));
    assert_eq!(eff["sim"]["dt"], 1.0 / 64.0);
    assert_eq!(eff["model"]["mass"], 1.0);
    assert_eq!(eff["model"]["sigma"], 1.0);
    assert_eq!(eff["model"]["smooth"]["kind"], "harmonic");
    assert_eq!(eff["model"]["singular"]["kind"], "coulomb-log");
    assert_eq!(eff["model"]["singular"]["coulomb_alpha"], 1.0);
    assert_eq!(eff["model"]["pilot"]["kind"], "bessel-j1");
    assert_eq!(eff["model"]["kernel"]["kind"], "exponential");
    let two_pi = serde_json::json!([2.0 * std::f64::consts::PI, 0.0]);
    assert_eq!(eff["sim"]["x0"], two_pi);
    assert_eq!(eff["sim"]["initial_past"], two_pi);
}

#[test]
fn validate_passes_for_alpha_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = shipped("fig1_alpha3.json");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = json(&tmp.path().join("validation.json"));
    assert!(report["verdicts"].as_array().unwrap().len() > 5);
}

#[test]
fn simulate_writes_outputs_deterministically() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"sim": {"t_max": 60, "burn_in": 10}}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["simulate", "--config", cfg.to_str().unwrap()], dir);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["trajectory.csv", "histogram.csv", "summary.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let traj = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x1,x2,v1,v2\n"));
    assert!(!traj.contains('\r'));
    // t = 0 .. 60 every 8 steps of 1/64
    assert_eq!(traj.lines().count(), 1 + 60 * 8 + 1);
    let hist = fs::read_to_string(a.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("r,p\n"));

    // a different seed changes the path
    let c = tmp.path().join("c");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3"], &c);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(c.join("trajectory.csv")).unwrap());
}

#[test]
fn effective_config_round_trip() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), r#"{"sim": {"t_max": 20, "burn_in": 5, "seed": 11}}"#);
    let o = run(&["variational", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = fs::read_to_string(out.join("effective_config.json")).unwrap();
    let echoed = tmp.path().join("echoed.json");
    fs::write(&echoed, &first).unwrap();
    let o = run(&["variational", "--config", echoed.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("effective_config.json")).unwrap(), first);
}

#[test]
fn omitted_seed_defaults_to_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "{}");
    let o = run(&["variational", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&tmp.path().join("effective_config.json"))["sim"]["seed"], 0);
}

#[test]
fn range_error_names_key_and_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"sim\": {\n    \"dt\": -1\n  }\n}\n");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("sim.dt") && e.contains("line 3"), "{e}");
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"model\": {\"colour\": 1}\n}\n");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("colour") && e.contains("line 2"), "{e}");
}

#[test]
fn usage_errors_exit_64() {
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(64));
    let o = bin().args(["simulate", "--seed", "minus-one"]).output().unwrap();
    assert_eq!(o.status.code(), Some(64));
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn runaway_run_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"smooth": {"kind": "polynomial", "params": [1.0, 4.0]}},
            "sim": {"dt": 0.1, "t_max": 50, "burn_in": 0, "x0": [100.0, 0.0]}}"#,
    );
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let o = bin()
        .args(["control-path"])
        .env("MEMWALK_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&tmp.path().join("summary.json"));
    assert!(s["gamma_residual"].as_f64().unwrap() <= 1e-6);
    assert!(s["grid_integral"].as_f64().unwrap() < 0.1);
    let csv = fs::read_to_string(tmp.path().join("control_path.csv")).unwrap();
    assert!(csv.starts_with("s,x1,x2,v1,v2,gamma1,gamma2\n"));
}

#[test]
fn variational_matches_closed_form() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["variational"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let s = json(&tmp.path().join("summary.json"));
    assert!(s["sup_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn mixing_summary_has_rate_fields() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"sim": {"t_max": 6, "burn_in": 0, "n_members": 32, "record_stride": 16}}"#,
    );
    let o = run(&["mixing", "--config", cfg.to_str().unwrap(), "--threads", "2"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = json(&tmp.path().join("mixing.json"));
    for key in ["c", "C", "r2", "verdict"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    let csv = fs::read_to_string(tmp.path().join("mixing.csv")).unwrap();
    assert!(csv.starts_with("t,d,stderr\n"));
}

#[test]
fn ensemble_of_psi_is_thread_independent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"singular": {"coulomb_alpha": 3.0}},
            "sim": {"t_max": 2, "burn_in": 0, "n_members": 8},
            "analysis": {"observable": "psi"}}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["ensemble", "--config", cfg.to_str().unwrap(), "--threads", threads], dir);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("ensemble.csv")).unwrap(), fs::read(b.join("ensemble.csv")).unwrap());
    assert_eq!(json(&a.join("summary.json"))["observable"], "psi");
}

#[test]
fn reproduce_fig1_alpha_five() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["reproduce-fig1", "--alpha", "5", "--t-max", "2000"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&tmp.path().join("summary.json"));
    let r = s["peak"]["radius"].as_f64().unwrap();
    let root = 5f64.sqrt();
    assert!((0.8 * root..=1.2 * root).contains(&r), "peak {r}");
    let eff = json(&tmp.path().join("effective_config.json"));
    assert_eq!(eff["sim"]["t_max"], 2000.0);
    assert_eq!(eff["sim"]["burn_in"], 500.0);
}
