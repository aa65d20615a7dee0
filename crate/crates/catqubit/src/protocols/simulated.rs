//! Protocols that run the dynamics: κ₂ and κ₁ extraction, bit-flip and
//! phase-flip times, Zeno Z rotations, the bias-preservation scan and the
//! CNOT sequence with a classical control.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};

use serde::{Deserialize, Serialize};

use crate::dynamics::{cat_model, decay_modes, evolve_with, CatModelSpec, DecayOptions, EvolveOptions, LindbladModel, Symmetry};
use crate::error::{Error, Result};
use crate::fock::{cat_state, coherent_state, CMatrix, ModeSpace, QuantumState, C64};
use crate::optimize::golden_section;
use crate::par::Exec;
use crate::wigner::{second_moment, wigner_numeric, WignerGrid};

use super::closed_form::{gate_fidelity, half_pi_fidelity};
use super::fit::{fit_decaying_sinusoid, fit_exponential, fit_exponential_offset, linear_slope, FitResult, Method, Param};
use super::logical::{lift_memory_projected, lift_memory_state, logical_paulis, memory_parity, memory_space, reduce_to_memory, trace_with, wigner_difference_observable};

/// ρ = p|C⁺_α⟩⟨C⁺_α| + (1 − p)|C⁻_α⟩⟨C⁻_α|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedCatModel {
    pub alpha: C64,
    pub p_plus: f64,
}

impl MixedCatModel {
    pub fn new(alpha: C64, p_plus: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_plus) {
            return Err(Error::InvalidArgument(format!("p_plus = {p_plus} outside [0, 1]")));
        }
        Ok(Self { alpha, p_plus })
    }

    /// α from the second moment ⟨m²⟩ = α² (root with Re α ≥ 0), p from the
    /// parity πW(0)/2 = 2p − 1.
    pub fn from_grid(grid: &WignerGrid) -> Result<Self> {
        let mut alpha = second_moment(grid).sqrt();
        if alpha.re < 0.0 {
            alpha = -alpha;
        }
        let parity = grid.value_near(C64::new(0.0, 0.0)) / FRAC_2_PI;
        Self::new(alpha, ((1.0 + parity) / 2.0).clamp(0.0, 1.0))
    }

    pub fn state(&self, ms: ModeSpace) -> Result<QuantumState> {
        let plus = cat_state(ms, self.alpha, 0.0)?.density();
        let minus = cat_state(ms, self.alpha, std::f64::consts::PI)?.density();
        let rho = plus * C64::new(self.p_plus, 0.0) + minus * C64::new(1.0 - self.p_plus, 0.0);
        QuantumState::mixed(ms, rho)
    }
}

/// ‖L‖∞·horizon above which explicit stepping is considered too stiff.
const STIFFNESS_LIMIT: f64 = 1e5;

/// Rational stepping with step `h` for stiff time-independent models over
/// `horizon`, DOPRI5 otherwise.
fn default_evolve(model: &LindbladModel, horizon: f64, h: f64) -> EvolveOptions {
    if model.is_time_independent() && model.liouvillian().norm_inf() * horizon > STIFFNESS_LIMIT {
        EvolveOptions::rational(h)
    } else {
        EvolveOptions::default()
    }
}

/// Template for the κ₂ fit: H = −(χ_mm/2)m†²m², L₁ = √κ₁ m, L₂ = √κ₂ m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa2Template {
    pub dim: usize,
    pub kappa_1: f64,
    pub chi_mm: f64,
    /// Centre of the search bracket [guess/10, 10 guess].
    pub guess: f64,
    /// Relative objective tolerance entering Δκ₂ = √(tol·scale/H).
    pub tol: f64,
    /// Golden-section tolerance on ln κ₂.
    pub search_tol: f64,
    pub exec: Exec,
}

impl Kappa2Template {
    pub fn new(dim: usize, kappa_1: f64, chi_mm: f64, guess: f64) -> Self {
        Self { dim, kappa_1, chi_mm, guess, tol: 1e-3, search_tol: 1e-4, exec: Exec::default() }
    }
}

/// Fit κ₂ by minimising Σ_t ∫|W_data − W_sim| d²β. The first grid fixes the
/// initial mixed cat and the time origin.
pub fn extract_kappa2(data: &[(f64, WignerGrid)], template: &Kappa2Template) -> Result<FitResult> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument("need at least two Wigner snapshots".into()));
    }
    if !(template.guess > 0.0) {
        return Err(Error::InvalidArgument("kappa_2 guess must be positive".into()));
    }
    let t0 = data[0].0;
    let times: Vec<f64> = data.iter().map(|(t, _)| t - t0).collect();
    let ms = ModeSpace::new(template.dim)?;
    let init = MixedCatModel::from_grid(&data[0].1)?;
    let rho0 = init.state(ms)?;
    let scale: f64 = data.iter().map(|(_, g)| g.values.iter().map(|v| v.abs()).sum::<f64>() * g.cell_area()).sum();

    let objective = |kappa_2: f64| -> Result<f64> {
        let spec = CatModelSpec { kappa_1: template.kappa_1, chi_mm: template.chi_mm, ..CatModelSpec::new(template.dim, C64::new(0.0, 0.0), kappa_2) };
        let model = cat_model(&spec)?;
        let (d, _) = evolve_with(&model, &rho0, &times, &EvolveOptions::default(), |k, _, st| {
            let g = &data[k].1;
            wigner_numeric(st, &g.re, &g.im, template.exec).map(|w| w.l1_distance(g))
        })?;
        d.into_iter().sum()
    };

    let mut failure: Option<Error> = None;
    let (lo, hi) = ((template.guess / 10.0).ln(), (template.guess * 10.0).ln());
    let (x, f_min) = golden_section(
        |x| match objective(x.exp()) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        lo,
        hi,
        template.search_tol,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if x - lo < 2.0 * template.search_tol || hi - x < 2.0 * template.search_tol {
        return Err(Error::Convergence(format!("kappa_2 minimum at the bracket edge ({:.4e} rad/s)", x.exp())));
    }
    let k = x.exp();
    let h = 0.02 * k;
    let curv = (objective(k + h)? - 2.0 * f_min + objective(k - h)?) / (h * h);
    if !(curv > 0.0) {
        return Err(Error::IllConditioned("objective has no positive curvature at the minimum".into()));
    }
    let err = (template.tol * scale / curv).sqrt();
    Ok(FitResult {
        params: vec![
            Param::new("kappa_2", k, err),
            Param::new("alpha_re", init.alpha.re, 0.0),
            Param::new("alpha_im", init.alpha.im, 0.0),
            Param::new("p_plus", init.p_plus, 0.0),
        ],
        residual_norm: f_min,
        n_points: data.len(),
        method: Method::GoldenSection,
        lower_bound: false,
        diagnostics: Vec::new(),
    })
}

/// κ₁ from W(0, t) = (2/π)(1 − 2p₁e^{−κ₁t}). Parameters `kappa_1`, `p_1`.
pub fn kappa1_from_fock_decay(times: &[f64], w0: &[f64]) -> Result<FitResult> {
    // u = p₁e^{−κ₁t} is an affine image of the data, so the fit is the same
    let u: Vec<f64> = w0.iter().map(|w| 0.5 * (1.0 - w / FRAC_2_PI)).collect();
    if u.iter().all(|v| v.abs() < 1e-9) {
        return Err(Error::IllConditioned("W(0) is flat at 2/pi: no odd population, kappa_1 indeterminate".into()));
    }
    let f = fit_exponential(times, &u)?;
    let (a, r) = (f.get("amplitude").expect("fit param"), f.get("rate").expect("fit param"));
    Ok(FitResult { params: vec![Param::new("kappa_1", r.value, r.stderr), Param::new("p_1", a.value, a.stderr)], residual_norm: 2.0 * FRAC_2_PI * f.residual_norm, ..f })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitflipMethod {
    /// Spectral when the Liouvillian has at most `cap` rows, else the fit.
    Auto,
    Spectral,
    FiniteHorizon,
    /// Both, reporting the spectral value and flagging disagreement.
    Both,
}

#[derive(Debug, Clone, Copy)]
pub struct BitflipOptions {
    pub method: BitflipMethod,
    /// Fit horizon in s.
    pub horizon: f64,
    pub n_points: usize,
    /// Largest Liouvillian row count for the spectral route.
    pub cap: usize,
    /// Time stepping for the fit; when `None`, rational stepping with
    /// h = horizon/(4n) for stiff time-independent models, else DOPRI5.
    pub evolve: Option<EvolveOptions>,
    pub decay: DecayOptions,
}

impl Default for BitflipOptions {
    fn default() -> Self {
        Self { method: BitflipMethod::Auto, horizon: 1e-3, n_points: 40, cap: 40_000, evolve: None, decay: DecayOptions::default() }
    }
}

/// Rates below this fraction of ‖L‖∞ are not resolved by the eigen solver.
const SPECTRAL_RESOLUTION: f64 = 1e-10;

/// Agreement required between the spectral and fitted T_X.
const METHOD_AGREEMENT: f64 = 0.10;

/// T_X such that W(α) − W(−α) ∝ e^{−t/T_X} from |α⟩. Parameter `t_x`
/// (plus `t_x_fit` for [`BitflipMethod::Both`]).
pub fn bitflip_time(model: &LindbladModel, alpha: C64, opts: &BitflipOptions) -> Result<FitResult> {
    let rows = model.space().total().pow(2);
    match opts.method {
        BitflipMethod::Spectral => bitflip_spectral(model, alpha, opts),
        BitflipMethod::FiniteHorizon => bitflip_fit(model, alpha, opts),
        BitflipMethod::Auto if rows <= opts.cap => bitflip_spectral(model, alpha, opts),
        BitflipMethod::Auto => {
            let mut f = bitflip_fit(model, alpha, opts)?;
            f.diagnostics.push(format!("{rows} Liouvillian rows exceed the spectral cap {}; used the finite-horizon fit", opts.cap));
            Ok(f)
        }
        BitflipMethod::Both => {
            let mut s = bitflip_spectral(model, alpha, opts)?;
            let f = bitflip_fit(model, alpha, opts)?;
            let (ts, tf) = (s.value("t_x").expect("t_x"), f.value("t_x").expect("t_x"));
            let fit_param = f.get("t_x").expect("t_x").clone();
            s.params.push(Param { name: "t_x_fit".into(), ..fit_param });
            if s.lower_bound || f.lower_bound {
                s.diagnostics.push("a lower bound is involved; the two methods are not compared".into());
            } else if ((ts - tf) / ts).abs() > METHOD_AGREEMENT {
                s.diagnostics.push(format!("spectral T_X {ts:.4e} s and fitted T_X {tf:.4e} s differ by more than {:.0}%", METHOD_AGREEMENT * 100.0));
            }
            Ok(s)
        }
    }
}

fn bitflip_spectral(model: &LindbladModel, alpha: C64, opts: &BitflipOptions) -> Result<FitResult> {
    let space = model.space();
    let ms = memory_space(space)?;
    let [_, _, z] = logical_paulis(ms, alpha)?;
    let target = lift_memory_projected(space, &z);
    let mut diagnostics = Vec::new();
    let modes = match decay_modes(model, Symmetry::ParityOdd, &opts.decay) {
        Err(Error::InvalidArgument(_)) => {
            diagnostics.push("memory parity not conserved; searched the joined sector".into());
            decay_modes(model, Symmetry::Joined, &opts.decay)?
        }
        r => r?,
    };
    let best = modes
        .iter()
        .max_by(|a, b| a.overlap(&target).total_cmp(&b.overlap(&target)))
        .ok_or_else(|| Error::EigenFailure("no modes returned".into()))?;
    let resolution = SPECTRAL_RESOLUTION * model.liouvillian().norm_inf();
    let rate = best.rate();
    let overlap = best.overlap(&target);
    let (t_x, se, lower) = if rate <= resolution { (1.0 / resolution, 0.0, true) } else { (1.0 / rate, best.residual / (rate * rate), false) };
    if lower {
        diagnostics.push(format!("bit-flip rate {rate:.3e} s^-1 below the spectral resolution {resolution:.3e} s^-1"));
    }
    Ok(FitResult {
        params: vec![Param::new("t_x", t_x, se), Param::new("rate", rate.max(0.0), best.residual), Param::new("overlap", overlap, 0.0)],
        residual_norm: best.residual,
        n_points: modes.len(),
        method: Method::Spectral,
        lower_bound: lower,
        diagnostics,
    })
}

fn bitflip_fit(model: &LindbladModel, alpha: C64, opts: &BitflipOptions) -> Result<FitResult> {
    if !(opts.horizon > 0.0) || opts.n_points < 4 {
        return Err(Error::InvalidArgument("fit needs a positive horizon and at least 4 points".into()));
    }
    let space = model.space();
    let ms = memory_space(space)?;
    let rho0 = lift_memory_state(space, &coherent_state(ms, alpha)?)?;
    let obs = wigner_difference_observable(ms.dim(), alpha);
    let n = opts.n_points;
    let times: Vec<f64> = (1..=n).map(|k| opts.horizon * k as f64 / n as f64).collect();
    let eo = opts.evolve.unwrap_or_else(|| default_evolve(model, opts.horizon, opts.horizon / (4 * n) as f64));
    let (ys, _) = evolve_with(model, &rho0, &times, &eo, |_, _, st| reduce_to_memory(st).map(|r| trace_with(&r.density(), &obs).re))?;
    let ys = ys.into_iter().collect::<Result<Vec<f64>>>()?;
    let f = fit_exponential(&times, &ys)?;
    let r = f.get("rate").expect("rate").clone();
    let lower = r.value * opts.horizon < 1e-3 || r.value <= 2.0 * r.stderr;
    let (t_x, se) = if lower { (opts.horizon, 0.0) } else { (1.0 / r.value, r.stderr / (r.value * r.value)) };
    let mut diagnostics = Vec::new();
    if lower {
        diagnostics.push(format!("no resolvable decay within {:.3e} s; T_X reported as a lower bound", opts.horizon));
    }
    Ok(FitResult { params: vec![Param::new("t_x", t_x, se), r], method: Method::FiniteHorizon, lower_bound: lower, diagnostics, ..f })
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    pub horizon: f64,
    pub n_points: usize,
    pub evolve: Option<EvolveOptions>,
}

impl TrajectoryOptions {
    pub fn new(horizon: f64, n_points: usize) -> Self {
        Self { horizon, n_points, evolve: None }
    }

    fn times(&self, include_zero: bool) -> Vec<f64> {
        let n = self.n_points;
        if include_zero {
            (0..n).map(|k| self.horizon * k as f64 / (n - 1) as f64).collect()
        } else {
            (1..=n).map(|k| self.horizon * k as f64 / n as f64).collect()
        }
    }

    fn evolve_for(&self, model: &LindbladModel) -> EvolveOptions {
        self.evolve.unwrap_or_else(|| default_evolve(model, self.horizon, self.horizon / (4 * self.n_points) as f64))
    }
}

fn parity_trajectory(model: &LindbladModel, rho0: &QuantumState, times: &[f64], eo: &EvolveOptions) -> Result<Vec<f64>> {
    Ok(evolve_with(model, rho0, times, eo, |_, _, st| memory_parity(st))?.0)
}

/// Γ_Z from the parity decay of |C⁺_α⟩. Parameters `gamma_z`, `amplitude`
/// and `offset`.
pub fn phaseflip_rate(model: &LindbladModel, alpha: C64, opts: &TrajectoryOptions) -> Result<FitResult> {
    if opts.n_points < 4 {
        return Err(Error::InvalidArgument("need at least 4 points".into()));
    }
    let space = model.space();
    let rho0 = lift_memory_state(space, &cat_state(memory_space(space)?, alpha, 0.0)?)?;
    let times = opts.times(true);
    let p = parity_trajectory(model, &rho0, &times, &opts.evolve_for(model))?;
    // the parity relaxes to 1/cosh(2|α|²), not to zero, hence the offset
    let spread = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - p.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut f = if spread < 1e-9 {
        let mut f = fit_exponential(&times, &p)?;
        f.diagnostics.push("parity is flat; fitted without offset".into());
        f
    } else {
        fit_exponential_offset(&times, &p, None)?
    };
    f.params[1].name = "gamma_z".into();
    f.params.swap(0, 1);
    Ok(f)
}

/// Parity record of a Zeno rotation and its fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZRotation {
    pub times: Vec<f64>,
    pub parity: Vec<f64>,
    pub fit: FitResult,
    /// 1/2 + e^{−πκ_Z/Ω_Z}/2.
    pub fidelity_pi: f64,
    /// 1/2 + e^{−πκ_Z/2Ω_Z}/2.
    pub fidelity_half_pi: f64,
}

/// Drive the memory from |C⁺_α⟩ and fit the parity to a decaying cosine.
pub fn z_rotation(model: &LindbladModel, alpha: C64, opts: &TrajectoryOptions) -> Result<ZRotation> {
    let space = model.space();
    let rho0 = lift_memory_state(space, &cat_state(memory_space(space)?, alpha, 0.0)?)?;
    let times = opts.times(true);
    let parity = parity_trajectory(model, &rho0, &times, &opts.evolve_for(model))?;
    let fit = fit_decaying_sinusoid(&times, &parity)?;
    let (om, ka) = (fit.value("omega").expect("omega"), fit.value("kappa").expect("kappa").max(0.0));
    Ok(ZRotation { fidelity_pi: gate_fidelity(ka, om), fidelity_half_pi: half_pi_fidelity(ka, om), times, parity, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseGate {
    pub final_parity: f64,
    /// (1 + |⟨P⟩|)/2 after the pulse.
    pub fidelity: f64,
}

/// Apply a finite pulse (the model's envelope) to |C⁺_α⟩ and score the
/// parity contraction at t = `duration`.
pub fn pulse_gate(model: &LindbladModel, alpha: C64, duration: f64, evolve: Option<EvolveOptions>) -> Result<PulseGate> {
    let space = model.space();
    let rho0 = lift_memory_state(space, &cat_state(memory_space(space)?, alpha, 0.0)?)?;
    let eo = evolve.unwrap_or_default();
    let p = parity_trajectory(model, &rho0, &[duration], &eo)?[0];
    Ok(PulseGate { final_parity: p, fidelity: 0.5 * (1.0 + p.abs()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub epsilon_z: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScan {
    pub rows: Vec<BiasRow>,
    /// First ε_Z (in scan order) where T_X falls below half the reference
    /// taken at the smallest |ε_Z|.
    pub knee: Option<f64>,
}

/// T_X against memory drive amplitude. `build` returns the stabilised model
/// for a given ε_Z (rad/s).
pub fn bias_preservation_scan<F>(build: F, eps_z: &[f64], alpha: C64, opts: &BitflipOptions, exec: Exec) -> Result<BiasScan>
where
    F: Fn(f64) -> Result<LindbladModel> + Sync + Send,
{
    if eps_z.is_empty() {
        return Err(Error::InvalidArgument("empty drive list".into()));
    }
    let fits = exec.map(eps_z, |&e| build(e).and_then(|m| bitflip_time(&m, alpha, opts)));
    let rows = eps_z.iter().zip(fits).map(|(&e, f)| f.map(|fit| BiasRow { epsilon_z: e, fit })).collect::<Result<Vec<_>>>()?;
    let reference = rows.iter().min_by(|a, b| a.epsilon_z.abs().total_cmp(&b.epsilon_z.abs())).expect("non-empty");
    let t_ref = reference.fit.value("t_x").expect("t_x");
    let knee = rows.iter().find(|r| r.fit.value("t_x").expect("t_x") < 0.5 * t_ref).map(|r| r.epsilon_z);
    Ok(BiasScan { rows, knee })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZProcess {
    pub epsilon: f64,
    pub fidelity: f64,
    pub contraction_x: f64,
    pub contraction_y: f64,
    /// d⟨σ_z⟩/dt of the σ_z-prepared run, s⁻¹.
    pub z_slope: f64,
}

/// Allowed relative mismatch between x and y contractions.
const CONTRACTION_MISMATCH: f64 = 0.05;

/// Z-error probability from the equatorial contraction 1 − 2ε of Bloch
/// trajectories prepared along +x, +y and +z.
pub fn process_matrix_z(times: &[f64], x_run: &[[f64; 3]], y_run: &[[f64; 3]], z_run: &[[f64; 3]]) -> Result<ZProcess> {
    let n = times.len();
    if n < 2 || x_run.len() != n || y_run.len() != n || z_run.len() != n {
        return Err(Error::InvalidArgument("trajectories need at least two samples matching the time axis".into()));
    }
    let contraction = |run: &[[f64; 3]]| -> Result<f64> {
        let r0 = run[0][0].hypot(run[0][1]);
        if r0 < 1e-9 {
            return Err(Error::InvalidArgument("initial Bloch vector has no equatorial component".into()));
        }
        Ok(run[n - 1][0].hypot(run[n - 1][1]) / r0)
    };
    let (cx, cy) = (contraction(x_run)?, contraction(y_run)?);
    if (cx - cy).abs() > CONTRACTION_MISMATCH * cx.max(cy) {
        return Err(Error::InconsistentContraction { cx, cy });
    }
    let c = 0.5 * (cx + cy);
    let epsilon = 0.5 * (1.0 - c);
    let zs: Vec<f64> = z_run.iter().map(|r| r[2]).collect();
    Ok(ZProcess { epsilon, fidelity: 1.0 - epsilon, contraction_x: cx, contraction_y: cy, z_slope: linear_slope(times, &zs) })
}

/// Target cat for the CNOT with a classical control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnotTarget {
    pub alpha: C64,
    pub dim: usize,
    pub kappa_1: f64,
    /// Two-photon rate used to re-stabilise onto {|±iα⟩}; 0 skips step 3.
    pub kappa_2: f64,
    pub restabilize: f64,
}

#[derive(Debug, Clone)]
pub struct CnotOutcome {
    pub control_sign: f64,
    pub gate_time: f64,
    pub rotated: QuantumState,
    pub final_state: QuantumState,
    /// Tr(ρ_ideal ρ) after the conditional rotation.
    pub rotation_fidelity: f64,
    /// Tr(ρ_ideal ρ) after re-stabilisation.
    pub fidelity: f64,
}

/// Conditional rotation e^{isπ/2 a†a} on the target for control sign s,
/// generated by H = −s g_CNOT 2|α_c| a†a over T_g = π/(4|α_c|g_CNOT), then
/// re-stabilisation by two-photon dissipation towards α² → −α².
pub fn cnot_sequence(control_alpha: C64, target: &CnotTarget, g_cnot: f64, initial: Option<&QuantumState>) -> Result<CnotOutcome> {
    let ms = ModeSpace::new(target.dim)?;
    let s = if control_alpha.re >= 0.0 { 1.0 } else { -1.0 };
    let t_g = super::closed_form::cnot_gate_time(control_alpha.norm(), g_cnot)?;
    let rho0 = match initial {
        Some(st) => st.clone(),
        None => coherent_state(ms, target.alpha)?,
    };
    if rho0.space().dims() != [target.dim] {
        return Err(Error::SpaceMismatch("initial state must live on the target mode".into()));
    }
    let rotate = |rho: &CMatrix, phi: f64| -> CMatrix {
        CMatrix::from_fn(target.dim, target.dim, |m, n| rho[(m, n)] * C64::from_polar(1.0, phi * (m as f64 - n as f64)))
    };
    let ideal = rotate(&rho0.density(), s * FRAC_PI_2);
    let rotated = if target.kappa_1 == 0.0 {
        QuantumState::mixed(ms, rotate(&rho0.density(), s * 2.0 * g_cnot * control_alpha.norm() * t_g))?
    } else {
        let spec = CatModelSpec { kappa_1: target.kappa_1, delta_m: -s * 2.0 * g_cnot * control_alpha.norm(), ..CatModelSpec::new(target.dim, C64::new(0.0, 0.0), 0.0) };
        let model = cat_model(&spec)?;
        evolve_with(&model, &rho0, &[t_g], &EvolveOptions::default(), |_, _, st| st.clone())?.0.remove(0)
    };
    let rotation_fidelity = trace_with(&rotated.density(), &ideal).re;
    let final_state = if target.kappa_2 > 0.0 && target.restabilize > 0.0 {
        let spec = CatModelSpec { kappa_1: target.kappa_1, ..CatModelSpec::new(target.dim, target.alpha * C64::i(), target.kappa_2) };
        let model = cat_model(&spec)?;
        let eo = default_evolve(&model, target.restabilize, target.restabilize / 200.0);
        evolve_with(&model, &rotated, &[target.restabilize], &eo, |_, _, st| st.clone())?.0.remove(0)
    } else {
        rotated.clone()
    };
    let fidelity = trace_with(&final_state.density(), &ideal).re;
    Ok(CnotOutcome { control_sign: s, gate_time: t_g, rotated, final_state, rotation_fidelity, fidelity })
}
