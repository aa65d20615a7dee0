use std::f64::consts::{FRAC_2_PI, PI};

use catqubit::dynamics::*;
use catqubit::fock::{cat_state, fock_state, CMatrix};
use catqubit::protocols::*;
use catqubit::wigner::{axis, wigner_numeric};
use catqubit::{khz, mhz, Error, Exec, ModeSpace, QuantumState, C64};
use proptest::prelude::*;

fn parity_decay(kappa_1: f64, p_1: f64, times: &[f64]) -> Vec<f64> {
    let dim = 6;
    let ms = ModeSpace::new(dim).unwrap();
    let rho = CMatrix::from_fn(dim, dim, |i, j| match (i, j) {
        (0, 0) => C64::new(1.0 - p_1, 0.0),
        (1, 1) => C64::new(p_1, 0.0),
        _ => C64::new(0.0, 0.0),
    });
    let st = QuantumState::mixed(ms, rho).unwrap();
    let model = cat_model(&CatModelSpec { kappa_1, ..CatModelSpec::new(dim, C64::new(0.0, 0.0), 0.0) }).unwrap();
    let (w, _) = evolve_with(&model, &st, times, &EvolveOptions::default(), |_, _, s| wigner_numeric(s, &[0.0], &[0.0], Exec::Sequential).unwrap().values[(0, 0)]).unwrap();
    w
}

#[test]
fn kappa1_recovered_from_simulated_fock_decay() {
    let k1 = khz(14.0);
    let times: Vec<f64> = (0..25).map(|k| k as f64 * 2e-6).collect();
    let w = parity_decay(k1, 0.8, &times);
    let f = kappa1_from_fock_decay(&times, &w).unwrap();
    assert!((f.value("kappa_1").unwrap() / k1 - 1.0).abs() < 1e-4);
    assert!((f.value("p_1").unwrap() - 0.8).abs() < 1e-4);
}

#[test]
fn vacuum_gives_no_kappa1() {
    let times = [0.0, 1e-5, 2e-5, 3e-5];
    let w = parity_decay(khz(14.0), 0.0, &times);
    assert!(matches!(kappa1_from_fock_decay(&times, &w), Err(Error::IllConditioned(_))));
}

#[test]
fn kappa1_fit_on_flat_samples_is_rejected() {
    let w = [FRAC_2_PI; 5];
    assert!(kappa1_from_fock_decay(&[0.0, 1.0, 2.0, 3.0, 4.0], &w).is_err());
}

fn kappa2_snapshots(kappa_2: f64, dim: usize) -> Vec<(f64, catqubit::wigner::WignerGrid)> {
    let model = cat_model(&CatModelSpec::new(dim, C64::new(0.0, 0.0), kappa_2)).unwrap();
    let times: Vec<f64> = (0..4).map(|k| 0.3 * k as f64 / kappa_2).collect();
    let ax = axis(5.0, 35);
    let rho0 = cat_state(ModeSpace::new(dim).unwrap(), C64::new(2.0, 0.0), 0.0).unwrap();
    let (g, _) = evolve_with(&model, &rho0, &times, &EvolveOptions::default(), |_, _, st| wigner_numeric(st, &ax, &ax, Exec::default()).unwrap()).unwrap();
    times.into_iter().zip(g).collect()
}

#[test]
fn kappa2_fit_tracks_a_doubled_generator() {
    let dim = 26;
    let k = mhz(1.0);
    let one = extract_kappa2(&kappa2_snapshots(k, dim), &Kappa2Template::new(dim, 0.0, 0.0, 1.5 * k)).unwrap();
    let two = extract_kappa2(&kappa2_snapshots(2.0 * k, dim), &Kappa2Template::new(dim, 0.0, 0.0, 1.5 * k)).unwrap();
    let (a, b) = (one.value("kappa_2").unwrap(), two.value("kappa_2").unwrap());
    assert!((a / k - 1.0).abs() < 1e-3, "{a}");
    assert!((b / a - 2.0).abs() < 2e-3, "{b} vs {a}");
}

#[test]
fn kappa2_needs_two_snapshots() {
    let data = kappa2_snapshots(mhz(1.0), 26);
    assert!(extract_kappa2(&data[..1], &Kappa2Template::new(26, 0.0, 0.0, mhz(1.0))).is_err());
}

#[test]
fn exponential_fit_through_small_noise() {
    let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.05).collect();
    // fixed ±1e-4 jitter, alternating so it has no trend
    let y: Vec<f64> = times.iter().enumerate().map(|(k, t)| 0.9 * (-1.3 * t).exp() + if k % 2 == 0 { 1e-4 } else { -1e-4 }).collect();
    let f = fit_exponential(&times, &y).unwrap();
    assert!((f.value("rate").unwrap() - 1.3).abs() < 2e-3);
    assert!((f.value("amplitude").unwrap() - 0.9).abs() < 1e-3);
    assert!(f.stderr("rate").unwrap() > 0.0);
}

#[test]
fn bias_scan_reference_matches_direct_bitflip() {
    let alpha = C64::new(2.0f64.sqrt(), 0.0);
    let dim = catqubit::fock::adequate_dim(alpha.re) + 6;
    let build = |eps: f64| {
        let spec = CatModelSpec {
            kappa_phi: khz(160.0),
            epsilon_z: C64::new(eps, 0.0),
            theta_z: std::f64::consts::FRAC_PI_2,
            ..CatModelSpec::new(dim, alpha, kappa2_adiabatic(mhz(6.0), mhz(40.0))?)
        };
        cat_model(&spec)
    };
    let opts = BitflipOptions { method: BitflipMethod::FiniteHorizon, horizon: 2e-4, n_points: 20, ..Default::default() };
    let scan = bias_preservation_scan(build, &[0.0, mhz(0.2)], alpha, &opts, Exec::Sequential).unwrap();
    assert_eq!(scan.rows.len(), 2);
    let direct = bitflip_time(&build(0.0).unwrap(), alpha, &opts).unwrap();
    assert_eq!(scan.rows[0].fit.value("t_x"), direct.value("t_x"));
    assert!(scan.rows.iter().all(|r| r.fit.value("t_x").unwrap() > 0.0));
    assert!(bias_preservation_scan(build, &[], alpha, &opts, Exec::Sequential).is_err());
}

#[test]
fn z_process_from_bloch_trajectories() {
    let times: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
    let shrink = |t: f64| (-0.2 * t).exp();
    let x: Vec<[f64; 3]> = times.iter().map(|&t| [shrink(t) * (3.0 * t).cos(), shrink(t) * (3.0 * t).sin(), 0.0]).collect();
    let y: Vec<[f64; 3]> = times.iter().map(|&t| [-shrink(t) * (3.0 * t).sin(), shrink(t) * (3.0 * t).cos(), 0.0]).collect();
    let z: Vec<[f64; 3]> = times.iter().map(|&t| [0.0, 0.0, 1.0 - 0.01 * t]).collect();
    let p = process_matrix_z(&times, &x, &y, &z).unwrap();
    let c = shrink(1.0);
    assert!((p.epsilon - 0.5 * (1.0 - c)).abs() < 1e-12);
    assert!((p.z_slope + 0.01).abs() < 1e-12);

    let mut y_bad = y.clone();
    let end = y_bad.last_mut().unwrap();
    *end = [0.5 * end[0], 0.5 * end[1], 0.0];
    assert!(matches!(process_matrix_z(&times, &x, &y_bad, &z), Err(Error::InconsistentContraction { .. })));
    assert!(process_matrix_z(&times[..3], &x, &y, &z).is_err());
}

#[test]
fn cnot_loss_shrinks_the_target() {
    // pure loss keeps a coherent state coherent, α → αe^{−κ₁T/2}, and commutes
    // with the rotation, so the fidelity is exp(−|α − α'|²)
    let (alpha, g) = (C64::new(2.0, 0.0), mhz(1.0));
    let k1 = mhz(0.2);
    let t = CnotTarget { alpha, dim: 20, kappa_1: k1, kappa_2: 0.0, restabilize: 0.0 };
    let o = cnot_sequence(C64::new(1.5, 0.0), &t, g, None).unwrap();
    let shrunk = alpha.re * (-k1 * o.gate_time / 2.0).exp();
    let want = (-(alpha.re - shrunk).powi(2)).exp();
    assert!((o.rotation_fidelity - want).abs() < 1e-6, "{} vs {want}", o.rotation_fidelity);
    let lossless = cnot_sequence(C64::new(1.5, 0.0), &CnotTarget { kappa_1: 0.0, ..t }, g, None).unwrap();
    assert!(lossless.rotation_fidelity > o.rotation_fidelity);
    assert!((o.gate_time - PI / (4.0 * 1.5 * g)).abs() < 1e-18);
}

#[test]
fn cnot_rejects_foreign_initial_state() {
    let t = CnotTarget { alpha: C64::new(2.0, 0.0), dim: 20, kappa_1: 0.0, kappa_2: 0.0, restabilize: 0.0 };
    let wrong = fock_state(ModeSpace::new(10).unwrap(), 1).unwrap();
    assert!(cnot_sequence(C64::new(1.0, 0.0), &t, mhz(1.0), Some(&wrong)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kappa1_estimates_are_positive(k in 1e3f64..1e6, p in 0.05f64..1.0) {
        let times: Vec<f64> = (0..12).map(|j| j as f64 * 0.3 / k).collect();
        let w: Vec<f64> = times.iter().map(|t| FRAC_2_PI * (1.0 - 2.0 * p * (-k * t).exp())).collect();
        let f = kappa1_from_fock_decay(&times, &w).unwrap();
        prop_assert!(f.value("kappa_1").unwrap() > 0.0);
        prop_assert!((f.value("kappa_1").unwrap() / k - 1.0).abs() < 1e-6);
    }

    #[test]
    fn z_frequency_is_linear_in_drive(a in 0.5f64..4.0, e in 0.01f64..2.0, s in 0.1f64..5.0) {
        let alpha = C64::new(a, 0.0);
        let (om1, _) = ideal_z_rates(alpha, C64::new(mhz(e), 0.0), khz(14.0), mhz(40.0), mhz(6.0)).unwrap();
        let (om2, _) = ideal_z_rates(alpha, C64::new(mhz(s * e), 0.0), khz(14.0), mhz(40.0), mhz(6.0)).unwrap();
        prop_assert!((om2 / om1 - s).abs() < 1e-9 * s);
    }

    #[test]
    fn leak_flags_agree(a2 in 0.5f64..12.0, d in -30.0f64..30.0, g in 1.0f64..10.0, kb in 5.0f64..80.0) {
        let (delta, g2, kappa_b) = (mhz(d), mhz(g), mhz(kb));
        let boundary = 4.0 * g2 * g2 * a2 / kappa_b;
        prop_assume!((delta.abs() - boundary).abs() > 1e-6 * boundary);
        let lambda = C64::new(delta / (2.0 * g2), 0.0);
        prop_assert_eq!(detuning_leaks(a2, delta, kappa_b, g2).unwrap(), buffer_leaks(lambda, a2, kappa_b, g2).unwrap());
    }
}
