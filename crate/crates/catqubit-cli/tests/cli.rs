use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn catqubit(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("scenario.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_catqubit"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn record(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/record.json")).unwrap()).unwrap()
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

const KAPPA1: &str = "[rates]\nkappa_1_kHz = 14\n[run]\nhorizon_us = 40\nn_points = 30\nnoise = 1e-3\nseed = 11\np_1 = 0.8\n";

#[test]
fn repeated_runs_are_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(catqubit(a.path(), &["run", "kappa1"], KAPPA1).status.success());
    assert!(catqubit(b.path(), &["run", "kappa1"], KAPPA1).status.success());
    assert_eq!(without_timing(record(a.path())), without_timing(record(b.path())));
    let csv = |d: &Path| fs::read(d.join("out/fock_decay.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    let k = record(a.path())["summary"]["kappa_1_kHz"].as_f64().unwrap();
    assert!((k - 14.0).abs() < 0.02 * 14.0, "{k}");
}

#[test]
fn seed_changes_noise() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    catqubit(a.path(), &["run", "kappa1"], KAPPA1);
    catqubit(b.path(), &["run", "kappa1", "--seed", "12"], KAPPA1);
    assert_ne!(record(a.path())["summary"], record(b.path())["summary"]);
    assert_eq!(record(b.path())["seed"], 12);
}

#[test]
fn effective_config_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    assert!(catqubit(a.path(), &["run", "kappa1"], KAPPA1).status.success());
    let eff = fs::read_to_string(a.path().join("out/effective_config.toml")).unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(catqubit(b.path(), &["run", "kappa1"], &eff).status.success());
    assert_eq!(without_timing(record(a.path())), without_timing(record(b.path())));
}

#[test]
fn zgate_operating_point() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[modes]\ng2_MHz = 6.0\n[rates]\nkappa_1_kHz = 14\nkappa_b_MHz = 40\n[drive]\nalpha_re = 3.04959\nepsilon_z_MHz = 1.625\n";
    assert!(catqubit(d.path(), &["run", "zgate"], cfg).status.success());
    let om = record(d.path())["summary"]["Omega_Z_MHz"].as_f64().unwrap();
    assert!((om - 19.8).abs() < 0.06, "{om}");
}

#[test]
fn circuit_table_matches_solver() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[circuit]\nE_J_GHz = 250\nE_W_GHz = 115\nE_C_GHz = 0.2\nsweep_start_phi0 = 0.0\nsweep_stop_phi0 = 0.5\nsweep_points = 1001\nzpf_m = 0.0305\nzpf_b = 0.0648\n";
    let o = catqubit(d.path(), &["circuit"], cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(d.path().join("out/sweep.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("0.311000,")).expect("phi_QEC row");
    let f: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
    let eq = catqubit::circuit::solve_equilibrium(&catqubit::circuit::RingParams::new(250.0, 115.0, 0.2, 0.311).unwrap()).unwrap();
    assert!((f[1] - eq.phi_j).abs() < 1e-9 && (f[2] - eq.phi_w).abs() < 1e-9);
    assert!((f[3] - eq.e_j_eff).abs() < 1e-6 && (f[4] - eq.e_w_eff).abs() < 1e-6);
    assert!((f[1] - 0.42).abs() < 0.01 && (f[3] - 228.0).abs() < 1.0);
}

#[test]
fn multivalued_ring_lists_branches() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[circuit]\nE_J_GHz = 100\nE_W_GHz = 60\nE_C_GHz = 0.2\nsweep_start_phi0 = 0.4\nsweep_stop_phi0 = 0.5\nsweep_points = 3\n";
    assert!(catqubit(d.path(), &["circuit"], cfg).status.success());
    let csv = fs::read_to_string(d.path().join("out/branches.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",stable"));
    assert!(csv.contains(",false"));
}

#[test]
fn empty_sweep_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = catqubit(d.path(), &["circuit"], "[circuit]\nE_J_GHz = 250\nE_W_GHz = 115\nE_C_GHz = 0.2\nsweep_points = 0\n");
    assert_eq!(o.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(e["error"]["kind"], "usage");
}

#[test]
fn unknown_key_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(catqubit(d.path(), &["run", "zgate"], "[rates]\nkappa_b = 40\n").status.code(), Some(2));
}

#[test]
fn physics_error_exit_code_and_json() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[modes]\ng2_MHz = 6\n[rates]\nkappa_b_MHz = 40\n[drive]\nalpha_re = 2.0\n[run]\ndim_m = 5\n";
    let o = catqubit(d.path(), &["run", "phaseflip"], cfg);
    assert_eq!(o.status.code(), Some(3));
    let e: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(e["error"]["kind"], "physics");
    assert_eq!(e["error"]["variant"], "Truncation");
}

#[test]
fn ideal_bitflip_is_lower_bound() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[modes]\ng2_MHz = 6\n[rates]\nkappa_b_MHz = 40\n[drive]\nalpha_re = 1.5\n";
    let o = catqubit(d.path(), &["run", "bitflip"], cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let r = record(d.path());
    assert_eq!(r["summary"]["lower_bound"], true);
    assert_eq!(r["fit"]["lower_bound"], true);
}

#[test]
fn kappa2_closed_loop() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[modes]\ng2_MHz = 2.0\n[rates]\nkappa_b_MHz = 8\n[drive]\nalpha_re = 2.0\n[run]\nhorizon_us = 0.08\nn_points = 4\ngrid_points = 31\n";
    let o = catqubit(d.path(), &["run", "kappa2"], cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let s = &record(d.path())["summary"];
    let (got, want) = (s["kappa_2_MHz"].as_f64().unwrap(), s["kappa_2_generator_MHz"].as_f64().unwrap());
    assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
}

#[test]
fn semiclassical_and_wigner_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[modes]\ng2_MHz = 6\n[rates]\nkappa_b_MHz = 40\n[drive]\nalpha_re = 3.0\ndelta_m_MHz = 30\n";
    assert!(catqubit(d.path(), &["run", "semiclassical"], cfg).status.success());
    let lam = record(d.path())["summary"]["lambda_abs"].as_f64().unwrap();
    assert!((lam - 2.5).abs() < 1e-9, "{lam}");
    let w = tempfile::tempdir().unwrap();
    let cfg = "[wigner]\nstate = \"cat_even\"\nalpha_re = 2.0\ndim = 30\npoints = 61\n";
    assert!(catqubit(w.path(), &["run", "wigner"], cfg).status.success());
    let r = record(w.path());
    assert!((r["summary"]["photon_number"].as_f64().unwrap() - 4.0).abs() < 0.1);
    assert_eq!(r["outputs"][0]["file"], "wigner.csv");
}
