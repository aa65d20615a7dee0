//! Protocol dispatch: each runner turns a scenario into a summary map, an
//! optional fit record and CSV tables.

use std::collections::BTreeMap;

use catqubit::circuit::{self, ModeOverrides, ModeParams, RingParams};
use catqubit::dynamics::{
    build_two_mode_model, cat_model, evolve_with, kappa2_adiabatic, CatModelSpec, DriveSpec, Envelope, EvolveOptions,
    LindbladModel, RateSet,
};
use catqubit::fock::{adequate_dim, cat_state, coherent_state, fock_state, thermal_state};
use catqubit::protocols::*;
use catqubit::transmon::{coupled_spectrum, shift_table, write_shift_csv, CoupledSpec, TransmonParams};
use catqubit::wigner::{self, axis, wigner_numeric, WignerGrid};
use catqubit::{fock, ghz, khz, mhz, to_mhz, CMatrix, Exec, ModeSpace, QuantumState, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use crate::config::{ConfigError, EnvelopeKind, ModelKind, ScenarioConfig, StateKind};

pub const PROTOCOLS: &[&str] =
    &["kappa2", "kappa1", "bitflip", "phaseflip", "zgate", "bias_scan", "semiclassical", "transmon_bound", "cnot", "wigner"];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Physics(#[from] catqubit::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: BTreeMap<String, Value>,
    pub fit: Option<FitResult>,
    /// (file name, contents)
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }

    fn table(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), RunError> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.tables.push((name.to_string(), String::from_utf8(buf).expect("ascii csv")));
        Ok(())
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    ConfigError::Invalid(msg.into()).into()
}

/// Mode rates from `[modes]`, or from the circuit at its operating flux.
fn modes(cfg: &ScenarioConfig) -> Result<ModeParams, RunError> {
    if let Some(m) = &cfg.modes {
        return Ok(ModeParams {
            omega_m: 0.0,
            omega_b: 0.0,
            zpf_m: 0.0,
            zpf_b: 0.0,
            g2: mhz(m.g2_mhz),
            chi_mm: khz(m.chi_mm_khz),
            chi_bb: mhz(m.chi_bb_mhz),
            chi_mb: mhz(m.chi_mb_mhz),
        });
    }
    let c = cfg.circuit.as_ref().ok_or_else(|| invalid("need a [modes] or [circuit] section"))?;
    let ring = RingParams::new(c.e_j_ghz, c.e_w_ghz, c.e_c_ghz, c.phi_ext_phi0)?;
    let eq = circuit::solve_equilibrium(&ring)?;
    Ok(circuit::mode_params(&eq, c.e_c_ghz, &overrides(c)))
}

fn overrides(c: &crate::config::CircuitSection) -> ModeOverrides {
    ModeOverrides { omega_m: c.omega_m_ghz.map(ghz), omega_b: c.omega_b_ghz.map(ghz), zpf_m: c.zpf_m, zpf_b: c.zpf_b }
}

fn rates(cfg: &ScenarioConfig) -> RateSet {
    let r = cfg.rates.clone().unwrap_or_default();
    let mut set = RateSet::new(khz(r.kappa_1_khz), mhz(r.kappa_b_mhz), khz(r.kappa_phi_m_khz));
    if let Some(b) = r.kappa_phi_b_khz {
        set.kappa_phi_b = khz(b);
    }
    set
}

fn alpha(cfg: &ScenarioConfig) -> C64 {
    cfg.drive.as_ref().map_or(C64::new(0.0, 0.0), |d| C64::new(d.alpha_re, d.alpha_im))
}

fn eps_z(cfg: &ScenarioConfig) -> C64 {
    cfg.drive.as_ref().map_or(C64::new(0.0, 0.0), |d| C64::from_polar(mhz(d.epsilon_z_mhz), d.epsilon_z_phase_rad))
}

fn envelope(cfg: &ScenarioConfig) -> Envelope {
    match cfg.drive.as_ref() {
        Some(d) if d.envelope == EnvelopeKind::Square => Envelope::Square { duration: d.duration_ns * 1e-9 },
        Some(d) if d.envelope == EnvelopeKind::Gaussian => Envelope::Gaussian { duration: d.duration_ns * 1e-9 },
        _ => Envelope::Constant,
    }
}

/// Six levels above the truncation floor: the floor alone leaves enough
/// population at the top to show up in Wigner snapshots and fake a bit-flip
/// rate in loss-free models.
fn memory_dim(cfg: &ScenarioConfig, a: C64) -> usize {
    if cfg.run.dim_m > 0 { cfg.run.dim_m } else { adequate_dim(a.norm()) + 6 }
}

/// Stabilised model with memory drive `eps`, in the configured kind.
fn model_with(cfg: &ScenarioConfig, eps: C64) -> Result<LindbladModel, RunError> {
    let mp = modes(cfg)?;
    let r = rates(cfg);
    let a = alpha(cfg);
    let d = cfg.drive.clone().unwrap_or_default();
    let dim_m = memory_dim(cfg, a);
    Ok(match cfg.run.model {
        ModelKind::Adiabatic => {
            let spec = CatModelSpec {
                kappa_1: r.kappa_1,
                kappa_phi: r.kappa_phi_m,
                chi_mm: mp.chi_mm,
                delta_m: mhz(d.delta_m_mhz),
                epsilon_z: eps,
                theta_z: d.theta_z_rad,
                envelope: envelope(cfg),
                ..CatModelSpec::new(dim_m, a, kappa2_adiabatic(mp.g2, r.kappa_b)?)
            };
            cat_model(&spec)?
        }
        ModelKind::TwoMode => {
            let drive = DriveSpec {
                epsilon_z: eps,
                theta_z: d.theta_z_rad,
                envelope: envelope(cfg),
                delta_m: mhz(d.delta_m_mhz),
                delta_b: mhz(d.delta_b_mhz),
                ..DriveSpec::stabilizing(a, mp.g2)
            };
            build_two_mode_model(&mp, &r, &drive, (dim_m, cfg.run.dim_b))?
        }
    })
}

fn horizon(cfg: &ScenarioConfig) -> f64 {
    cfg.run.horizon_us * 1e-6
}

fn linspace(t1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t1 * k as f64 / (n.max(2) - 1) as f64).collect()
}

fn noise(cfg: &ScenarioConfig) -> Result<Option<(ChaCha8Rng, Normal<f64>)>, RunError> {
    if cfg.run.noise == 0.0 {
        return Ok(None);
    }
    let n = Normal::new(0.0, cfg.run.noise).map_err(|e| invalid(format!("noise: {e}")))?;
    Ok(Some((ChaCha8Rng::seed_from_u64(cfg.run.seed), n)))
}

fn bitflip_options(cfg: &ScenarioConfig) -> Result<BitflipOptions, RunError> {
    let method = match cfg.run.bitflip_method.as_str() {
        "auto" => BitflipMethod::Auto,
        "spectral" => BitflipMethod::Spectral,
        "finite_horizon" => BitflipMethod::FiniteHorizon,
        "both" => BitflipMethod::Both,
        other => return Err(invalid(format!("unknown bitflip_method {other:?}"))),
    };
    Ok(BitflipOptions { method, horizon: horizon(cfg), n_points: cfg.run.n_points, ..Default::default() })
}

pub fn run(cfg: &ScenarioConfig, protocol: &str) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    match protocol {
        "kappa2" => kappa2(cfg, &mut out)?,
        "kappa1" => kappa1(cfg, &mut out)?,
        "bitflip" => {
            let a = alpha(cfg);
            let f = bitflip_time(&model_with(cfg, eps_z(cfg))?, a, &bitflip_options(cfg)?)?;
            out.put("T_X_s", f.value("t_x").expect("t_x"));
            out.put("lower_bound", f.lower_bound);
            out.fit = Some(f);
        }
        "phaseflip" => {
            let a = alpha(cfg);
            let f = phaseflip_rate(&model_with(cfg, eps_z(cfg))?, a, &TrajectoryOptions::new(horizon(cfg), cfg.run.n_points))?;
            out.put("Gamma_Z_kHz", f.value("gamma_z").expect("gamma_z") / catqubit::TAU / 1e3);
            out.put("Gamma_Z_over_2nk1", f.value("gamma_z").expect("gamma_z") / (2.0 * a.norm_sqr() * rates(cfg).kappa_1));
            out.fit = Some(f);
        }
        "zgate" => zgate(cfg, &mut out)?,
        "bias_scan" => bias_scan(cfg, &mut out)?,
        "semiclassical" => semiclassical(cfg, &mut out)?,
        "transmon_bound" => transmon_bound(cfg, &mut out)?,
        "cnot" => cnot(cfg, &mut out)?,
        "wigner" => wigner_run(cfg, &mut out)?,
        other => return Err(invalid(format!("unknown protocol {other:?}; expected one of {}", PROTOCOLS.join(", ")))),
    }
    Ok(out)
}

fn kappa2(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    let mp = modes(cfg)?;
    let r = rates(cfg);
    let a = alpha(cfg);
    let k2 = kappa2_adiabatic(mp.g2, r.kappa_b)?;
    let dim = memory_dim(cfg, a);
    let ms = ModeSpace::new(dim)?;
    let gen = cat_model(&CatModelSpec { kappa_1: r.kappa_1, chi_mm: mp.chi_mm, ..CatModelSpec::new(dim, C64::new(0.0, 0.0), k2) })?;
    let times = linspace(horizon(cfg), cfg.run.n_points);
    let ax = axis(a.norm() + 3.0, cfg.run.grid_points);
    let (mut grids, _) = evolve_with(&gen, &cat_state(ms, a, 0.0)?, &times, &EvolveOptions::default(), |_, _, st| {
        wigner_numeric(st, &ax, &ax, Exec::default())
    })?;
    let mut data = Vec::with_capacity(times.len());
    let mut rng = noise(cfg)?;
    for (t, g) in times.iter().zip(grids.drain(..)) {
        let mut g = g?;
        if let Some((rng, n)) = rng.as_mut() {
            g.values.iter_mut().for_each(|v| *v += n.sample(rng));
        }
        data.push((*t, g));
    }
    let guess = if cfg.run.kappa_2_guess_mhz > 0.0 { mhz(cfg.run.kappa_2_guess_mhz) } else { 1.5 * k2 };
    let f = extract_kappa2(&data, &Kappa2Template::new(dim, r.kappa_1, mp.chi_mm, guess))?;
    out.put("kappa_2_generator_MHz", to_mhz(k2));
    out.put("kappa_2_MHz", to_mhz(f.value("kappa_2").expect("kappa_2")));
    out.put("kappa_2_stderr_MHz", to_mhz(f.stderr("kappa_2").expect("kappa_2")));
    out.fit = Some(f);
    out.table("wigner_snapshots.csv", |w| {
        use std::io::Write;
        writeln!(w, "t[s],re,im,W")?;
        for (t, g) in &data {
            for (i, x) in g.re.iter().enumerate() {
                for (j, y) in g.im.iter().enumerate() {
                    writeln!(w, "{t:.9e},{x:.6},{y:.6},{:.9e}", g.values[(i, j)])?;
                }
            }
        }
        Ok(())
    })
}

fn kappa1(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    let r = rates(cfg);
    let p = cfg.run.p_1;
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p_1 must lie in [0, 1]"));
    }
    let dim = cfg.run.dim_m.max(adequate_dim(0.0));
    let ms = ModeSpace::new(dim)?;
    let rho = CMatrix::from_fn(dim, dim, |i, j| match (i, j) {
        (0, 0) => C64::new(1.0 - p, 0.0),
        (1, 1) => C64::new(p, 0.0),
        _ => C64::new(0.0, 0.0),
    });
    let model = cat_model(&CatModelSpec { kappa_1: r.kappa_1, ..CatModelSpec::new(dim, C64::new(0.0, 0.0), 0.0) })?;
    let times = linspace(horizon(cfg), cfg.run.n_points);
    let (w0, _) = evolve_with(&model, &QuantumState::mixed(ms, rho)?, &times, &EvolveOptions::default(), |_, _, st| wigner::parity_point(st))?;
    let mut w0 = w0.into_iter().collect::<catqubit::Result<Vec<f64>>>()?;
    if let Some((mut rng, n)) = noise(cfg)? {
        w0.iter_mut().for_each(|v| *v += n.sample(&mut rng));
    }
    let f = kappa1_from_fock_decay(&times, &w0)?;
    out.put("kappa_1_kHz", f.value("kappa_1").expect("kappa_1") / catqubit::TAU / 1e3);
    out.put("p_1", f.value("p_1").expect("p_1"));
    out.fit = Some(f);
    out.table("fock_decay.csv", |w| {
        use std::io::Write;
        writeln!(w, "t[s],W0")?;
        times.iter().zip(&w0).try_for_each(|(t, v)| writeln!(w, "{t:.9e},{v:.12e}"))
    })
}

fn zgate(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    let mp = modes(cfg)?;
    let r = rates(cfg);
    let a = alpha(cfg);
    let eta = effective_z_amplitude(eps_z(cfg), cfg.drive.clone().unwrap_or_default().theta_z_rad);
    let (om, ka) = ideal_z_rates(a, eta, r.kappa_1, r.kappa_b, mp.g2)?;
    out.put("Omega_Z_MHz", to_mhz(om));
    out.put("kappa_Z_MHz", to_mhz(ka));
    out.put("fidelity_pi", gate_fidelity(ka, om));
    out.put("fidelity_half_pi", half_pi_fidelity(ka, om));
    if cfg.run.simulate {
        let z = z_rotation(&model_with(cfg, eps_z(cfg))?, a, &TrajectoryOptions::new(horizon(cfg), cfg.run.n_points))?;
        out.put("Omega_Z_sim_MHz", to_mhz(z.fit.value("omega").expect("omega")));
        out.put("kappa_Z_sim_MHz", to_mhz(z.fit.value("kappa").expect("kappa")));
        out.put("fidelity_pi_sim", z.fidelity_pi);
        out.table("parity.csv", |w| {
            use std::io::Write;
            writeln!(w, "t[s],parity")?;
            z.times.iter().zip(&z.parity).try_for_each(|(t, p)| writeln!(w, "{t:.9e},{p:.12e}"))
        })?;
        out.fit = Some(z.fit);
    }
    Ok(())
}

fn bias_scan(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    if cfg.run.epsilon_z_list_mhz.is_empty() {
        return Err(invalid("bias_scan needs run.epsilon_z_list_MHz"));
    }
    let eps: Vec<f64> = cfg.run.epsilon_z_list_mhz.iter().map(|&e| mhz(e)).collect();
    // validate once outside the worker closure so config errors stay config errors
    model_with(cfg, C64::new(eps[0], 0.0))?;
    let build = |e: f64| -> catqubit::Result<LindbladModel> {
        model_with(cfg, C64::new(e, 0.0)).map_err(|err| match err {
            RunError::Physics(p) => p,
            other => catqubit::Error::InvalidArgument(other.to_string()),
        })
    };
    let scan = bias_preservation_scan(build, &eps, alpha(cfg), &bitflip_options(cfg)?, Exec::default())?;
    out.put("knee_MHz", scan.knee.map(to_mhz));
    out.table("bias_scan.csv", |w| {
        use std::io::Write;
        writeln!(w, "epsilon_z[MHz],T_X[s],stderr[s],lower_bound")?;
        scan.rows.iter().try_for_each(|r| {
            let p = r.fit.get("t_x").expect("t_x");
            writeln!(w, "{:.6},{:.9e},{:.3e},{}", to_mhz(r.epsilon_z), p.value, p.stderr, r.fit.lower_bound)
        })
    })
}

fn semiclassical(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    let mp = modes(cfg)?;
    let r = rates(cfg);
    let a = alpha(cfg);
    let dm = cfg.drive.as_ref().map_or(0.0, |d| mhz(d.delta_m_mhz));
    let a2 = a.norm_sqr();
    let b = semiclassical_buffer(dm, mp.chi_mm, mp.chi_mb, mp.g2, a, r.kappa_1, r.kappa_phi_m)?;
    out.put("lambda_abs", b.lambda.norm());
    out.put("lambda_re", b.lambda.re);
    out.put("lambda_im", b.lambda.im);
    out.put("validity_ratio", b.validity_ratio);
    out.put("lossy", b.lossy);
    out.put("warning", b.warning.clone());
    if r.kappa_b > 0.0 {
        out.put("threshold_MHz", to_mhz(stabilization_threshold(a2, r.kappa_b, mp.g2)?));
        out.put("min_photon_number", if dm == 0.0 { 0.0 } else { minimum_photon_number(dm, r.kappa_b, mp.g2)? });
        out.put("detuning_leaks", detuning_leaks(a2, dm, r.kappa_b, mp.g2)?);
        out.put("buffer_leaks", buffer_leaks(b.lambda, a2, r.kappa_b, mp.g2)?);
        out.put(
            "detuned_photon_number",
            match detuned_photon_number(a2, dm, r.kappa_b, mp.g2) {
                Ok(n) => json!(n),
                Err(catqubit::Error::NoStabilization { .. }) => Value::Null,
                Err(e) => return Err(e.into()),
            },
        );
        out.put("n_th_b", buffer_thermal_occupation(r.kappa_phi_b, r.kappa_b, b.lambda)?);
    }
    Ok(())
}

fn transmon_bound(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    let s = ScenarioConfig::require(&cfg.transmon_bound, "transmon_bound")?;
    let table = TransmonPopulationTable::new(s.photon_axis.clone(), s.populations.clone(), s.hybridized_mass.clone())?;
    let bound = transmon_bitflip_bound(&table, khz(s.gamma_10_khz), None)?;
    out.put("T_X_bound_s", bound.iter().map(|&b| if b.is_finite() { json!(b) } else { Value::Null }).collect::<Vec<_>>());
    out.table("transmon_bound.csv", |w| {
        use std::io::Write;
        writeln!(w, "alpha_sq,T_X_bound[s]")?;
        table.photon_axis.iter().zip(&bound).try_for_each(|(n, b)| writeln!(w, "{n:.6},{b:.9e}"))
    })?;
    if let Some(t) = &cfg.transmon {
        let tp = TransmonParams { n_g: t.n_g, ..TransmonParams::new(t.e_c_ghz, t.e_j_ghz) };
        let spec = CoupledSpec::new(tp, ghz(t.omega_m_ghz), ghz(t.omega_c_ghz), mhz(t.g_mt_mhz), mhz(t.g_ct_mhz), (t.dim_m, t.dim_c));
        let sp = coupled_spectrum(&spec)?;
        out.put("chi_MHz", to_mhz(sp.dispersive_shift()?));
        let rows = shift_table(&sp, t.levels, t.dim_m.saturating_sub(2));
        out.table("shifts.csv", |w| write_shift_csv(w, &rows))?;
    }
    Ok(())
}

fn cnot(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    let c = ScenarioConfig::require(&cfg.cnot, "cnot")?;
    let ac = C64::new(c.alpha_c_re, c.alpha_c_im);
    let g = match (c.g_cnot_mhz, c.g4_mhz) {
        (Some(g), None) => mhz(g),
        (None, Some(g4)) => {
            let cc = cnot_coupling(mhz(g4), c.phi_c, c.phi_t, C64::new(c.xi0_re, c.xi0_im), ac)?;
            out.put("phase_error_rad", cc.phase_error);
            cc.g_cnot
        }
        _ => return Err(invalid("give exactly one of cnot.g_cnot_MHz and cnot.g4_MHz")),
    };
    let a = alpha(cfg);
    let target = CnotTarget {
        alpha: a,
        dim: memory_dim(cfg, a),
        kappa_1: rates(cfg).kappa_1,
        kappa_2: mhz(c.kappa_2_mhz),
        restabilize: c.restabilize_us * 1e-6,
    };
    let o = cnot_sequence(ac, &target, g, None)?;
    let mean = o.rotated.expectation(&fock::annihilation(ModeSpace::new(target.dim)?))?;
    out.put("g_cnot_MHz", to_mhz(g));
    out.put("gate_time_ns", o.gate_time * 1e9);
    out.put("control_sign", o.control_sign);
    out.put("target_phase_rad", (mean / a).arg());
    out.put("rotation_fidelity", o.rotation_fidelity);
    out.put("fidelity", o.fidelity);
    Ok(())
}

fn wigner_run(cfg: &ScenarioConfig, out: &mut Outcome) -> Result<(), RunError> {
    let s = ScenarioConfig::require(&cfg.wigner, "wigner")?;
    let ms = ModeSpace::new(s.dim)?;
    let a = C64::new(s.alpha_re, s.alpha_im);
    let st = match s.state {
        StateKind::Coherent => coherent_state(ms, a)?,
        StateKind::CatEven => cat_state(ms, a, 0.0)?,
        StateKind::CatOdd => cat_state(ms, a, std::f64::consts::PI)?,
        StateKind::Fock => fock_state(ms, s.fock_n)?,
        StateKind::Thermal => thermal_state(ms, s.n_th)?,
    };
    let hw = if s.half_width > 0.0 { s.half_width } else { a.norm() + 3.0 };
    let ax = axis(hw, s.points);
    let g: WignerGrid = wigner_numeric(&st, &ax, &ax, Exec::default())?;
    let n = wigner::photon_number_from_grid(&g);
    out.put("photon_number", n.value);
    out.put("coverage_warning", n.coverage_warning);
    out.put("W_origin", wigner::parity_point(&st)?);
    if matches!(s.state, StateKind::CatEven | StateKind::CatOdd) && a.im == 0.0 {
        out.put("fringe_period", wigner::fringe_period(&g).ok());
    }
    out.table("wigner.csv", |w| g.write_csv(w))
}
