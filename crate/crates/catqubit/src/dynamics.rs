//! Lindblad dynamics of the memory–buffer pair and of the single-mode
//! adiabatic cat model: superoperator assembly, time integration, steady
//! states and slow Liouvillian eigenvalues.
//!
//! Density matrices are vectorised by column stacking, so element (i, j) of
//! an N×N matrix sits at index i + jN.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::circuit::ModeParams;
use crate::error::{Error, Result};
use crate::fock::{annihilation, check_truncation, CMatrix, ModeSpace, Operator, QuantumState, Space, C64};
use crate::io::{write_array, BinaryArray, Payload};
use crate::ode::{dopri5_with, OdeOptions, OdeStats};
use crate::sparse::{shift_invert_eigs, Csr, SparseLu};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Buffer dephasing relative to memory dephasing when not given explicitly.
pub const BUFFER_DEPHASING_RATIO: f64 = 60.0;

/// Time dependence of the memory drive. Durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Constant,
    /// (6/√2π)·exp(−(t − T/2)²/2w²) with w = T/6: unit mean over the
    /// whole line, erf(3/√2) ≈ 0.9973 of it inside [0, T].
    Gaussian { duration: f64 },
    Square { duration: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::Square { duration } => {
                if (0.0..=duration).contains(&t) { 1.0 } else { 0.0 }
            }
            Envelope::Gaussian { duration } => {
                let w = duration / 6.0;
                let x = t - duration / 2.0;
                6.0 / (std::f64::consts::TAU).sqrt() * (-x * x / (2.0 * w * w)).exp()
            }
        }
    }

    pub fn duration(&self) -> Option<f64> {
        match *self {
            Envelope::Constant => None,
            Envelope::Gaussian { duration } | Envelope::Square { duration } => Some(duration),
        }
    }

    fn validate(&self) -> Result<()> {
        match self.duration() {
            Some(d) if !(d > 0.0) => Err(Error::InvalidArgument(format!("envelope duration {d} must be positive"))),
            _ => Ok(()),
        }
    }
}

/// Drives and detunings, all in rad/s. The buffer drive follows ε_d = α²g₂.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub epsilon_d: C64,
    pub epsilon_z: C64,
    pub theta_z: f64,
    pub envelope: Envelope,
    pub delta_m: f64,
    pub delta_b: f64,
}

impl Default for DriveSpec {
    fn default() -> Self {
        Self { epsilon_d: ZERO, epsilon_z: ZERO, theta_z: 0.0, envelope: Envelope::Constant, delta_m: 0.0, delta_b: 0.0 }
    }
}

impl DriveSpec {
    /// Buffer drive that stabilises cats of amplitude α.
    pub fn stabilizing(alpha: C64, g2: f64) -> Self {
        Self { epsilon_d: alpha * alpha * g2, ..Self::default() }
    }

    /// α = √(ε_d/g₂) on the principal branch; zero without exchange.
    pub fn alpha(&self, g2: f64) -> C64 {
        if g2 == 0.0 { ZERO } else { (self.epsilon_d / g2).sqrt() }
    }
}

/// Loss and dephasing rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSet {
    pub kappa_1: f64,
    pub kappa_b: f64,
    pub kappa_phi_m: f64,
    pub kappa_phi_b: f64,
}

impl RateSet {
    /// Buffer dephasing set to [`BUFFER_DEPHASING_RATIO`] × κ_φ^m.
    pub fn new(kappa_1: f64, kappa_b: f64, kappa_phi_m: f64) -> Self {
        Self { kappa_1, kappa_b, kappa_phi_m, kappa_phi_b: BUFFER_DEPHASING_RATIO * kappa_phi_m }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa_1", self.kappa_1), ("kappa_b", self.kappa_b), ("kappa_phi_m", self.kappa_phi_m), ("kappa_phi_b", self.kappa_phi_b)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be a finite non-negative rate")));
            }
        }
        Ok(())
    }
}

pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct LindbladModel {
    space: Space,
    h_static: Operator,
    h_time: Vec<(Operator, Coefficient)>,
    collapse_ops: Vec<Operator>,
    alpha_target: C64,
    warnings: Vec<String>,
}

impl fmt::Debug for LindbladModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LindbladModel")
            .field("dims", &self.space.dims())
            .field("time_terms", &self.h_time.len())
            .field("collapse_ops", &self.collapse_ops.len())
            .field("alpha_target", &self.alpha_target)
            .field("warnings", &self.warnings)
            .finish()
    }
}

impl LindbladModel {
    pub fn new(h_static: Operator, collapse_ops: Vec<Operator>, alpha_target: C64) -> Result<Self> {
        let space = h_static.space().clone();
        let err = h_static.hermiticity_error();
        if err > 1e-9 * h_static.matrix().camax().max(1.0) {
            return Err(Error::NotHermitian(err));
        }
        for c in &collapse_ops {
            if c.space() != &space {
                return Err(Error::SpaceMismatch("collapse operator on a different space".into()));
            }
        }
        Ok(Self { space, h_static, h_time: Vec::new(), collapse_ops, alpha_target, warnings: Vec::new() })
    }

    /// Adds H_k f(t) to the Hamiltonian.
    pub fn with_time_term(mut self, h: Operator, f: Coefficient) -> Result<Self> {
        if h.space() != &self.space {
            return Err(Error::SpaceMismatch("time-dependent term on a different space".into()));
        }
        let err = h.hermiticity_error();
        if err > 1e-9 * h.matrix().camax().max(1.0) {
            return Err(Error::NotHermitian(err));
        }
        self.h_time.push((h, f));
        Ok(self)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn h_static(&self) -> &Operator {
        &self.h_static
    }

    pub fn h_time(&self) -> &[(Operator, Coefficient)] {
        &self.h_time
    }

    pub fn collapse_ops(&self) -> &[Operator] {
        &self.collapse_ops
    }

    pub fn alpha_target(&self) -> C64 {
        self.alpha_target
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_time_independent(&self) -> bool {
        self.h_time.is_empty()
    }

    /// Generator of the time-independent part.
    pub fn liouvillian(&self) -> Csr {
        let collapse: Vec<&CMatrix> = self.collapse_ops.iter().map(|c| c.matrix()).collect();
        liouvillian(self.h_static.matrix(), &collapse)
    }

    /// −i[H_k, ·] for each time-dependent term.
    pub fn time_generators(&self) -> Vec<(Csr, Coefficient)> {
        self.h_time.iter().map(|(h, f)| (hamiltonian_superop(h.matrix()), f.clone())).collect()
    }

    /// ‖L(ρ)‖_∞ / ‖L‖_∞ for the time-independent part.
    pub fn residual(&self, state: &QuantumState) -> f64 {
        let l = self.liouvillian();
        let x = vectorize(&state.density());
        let mut y = vec![ZERO; x.len()];
        l.matvec(&x, &mut y);
        y.iter().map(|z| z.norm()).fold(0.0, f64::max) / l.norm_inf().max(1e-300)
    }

    /// True when every term commutes with the parity of mode 0.
    pub fn conserves_memory_parity_strongly(&self) -> bool {
        let ops = std::iter::once(&self.h_static).chain(self.h_time.iter().map(|(h, _)| h)).chain(self.collapse_ops.iter());
        let par = memory_parities(&self.space);
        ops.into_iter().all(|o| block_diagonal(o.matrix(), &par))
    }
}

fn memory_parities(space: &Space) -> Vec<bool> {
    (0..space.total()).map(|i| space.occupation(i, 0) % 2 == 1).collect()
}

fn block_diagonal(m: &CMatrix, odd: &[bool]) -> bool {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if odd[i] != odd[j] && m[(i, j)] != ZERO {
                return false;
            }
        }
    }
    true
}

pub fn vectorize(m: &CMatrix) -> Vec<C64> {
    m.as_slice().to_vec()
}

pub fn unvectorize(v: &[C64]) -> CMatrix {
    let n = (v.len() as f64).sqrt().round() as usize;
    CMatrix::from_column_slice(n, n, v)
}

fn nonzeros(m: &CMatrix) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

fn identity_nz(n: usize) -> Vec<(usize, usize, C64)> {
    (0..n).map(|i| (i, i, ONE)).collect()
}

/// Triplets of c·vec(A X B) = c(Bᵀ ⊗ A) vec X.
fn push_two_sided(t: &mut Vec<(usize, usize, C64)>, n: usize, c: C64, a: &[(usize, usize, C64)], b: &[(usize, usize, C64)]) {
    for &(l, j, bv) in b {
        for &(i, k, av) in a {
            t.push((i + j * n, k + l * n, c * av * bv));
        }
    }
}

/// −i(H ⊗ 1 − 1 ⊗ H) acting on column-stacked ρ.
pub fn hamiltonian_superop(h: &CMatrix) -> Csr {
    let n = h.nrows();
    let hz = nonzeros(h);
    let id = identity_nz(n);
    let mut t = Vec::new();
    push_two_sided(&mut t, n, -I, &hz, &id);
    push_two_sided(&mut t, n, I, &id, &hz);
    Csr::from_triplets(n * n, n * n, t)
}

/// Full Liouvillian: −i[H, ρ] + Σ (LρL† − ½{L†L, ρ}).
pub fn liouvillian(h: &CMatrix, collapse: &[&CMatrix]) -> Csr {
    let n = h.nrows();
    let id = identity_nz(n);
    let mut t = Vec::new();
    let hz = nonzeros(h);
    push_two_sided(&mut t, n, -I, &hz, &id);
    push_two_sided(&mut t, n, I, &id, &hz);
    for l in collapse {
        let lz = nonzeros(l);
        let ld = nonzeros(&l.adjoint());
        let ll = nonzeros(&(l.adjoint() * *l));
        push_two_sided(&mut t, n, ONE, &lz, &ld);
        push_two_sided(&mut t, n, C64::new(-0.5, 0.0), &ll, &id);
        push_two_sided(&mut t, n, C64::new(-0.5, 0.0), &id, &ll);
    }
    Csr::from_triplets(n * n, n * n, t)
}

/// Memory–buffer model in the frame of the drive:
/// H = Δ_m m†m + Δ_b b†b − (χ_mm/2)m†²m² − (χ_bb/2)b†²b² − χ_mb m†m b†b
///     + g₂(m² − α²)b† + h.c. + iε_Z e^{−iθ_z}m† − iε_Z* e^{iθ_z}m,
/// with collapse operators √κ₁ m, √κ_φ^m m†m, √κ_b b, √κ_φ^b b†b.
pub fn build_two_mode_model(modes: &ModeParams, rates: &RateSet, drive: &DriveSpec, dims: (usize, usize)) -> Result<LindbladModel> {
    rates.validate()?;
    drive.envelope.validate()?;
    let (nm, nb) = dims;
    let alpha = drive.alpha(modes.g2);
    check_truncation(nm, alpha.norm())?;
    if nb < 6 {
        return Err(Error::Truncation { needed: 6, dim: nb });
    }
    let space = Space::new(&[nm, nb])?;
    let am = annihilation(ModeSpace::new(nm)?);
    let ab = annihilation(ModeSpace::new(nb)?);
    let m = am.on_mode(&space, 0)?;
    let b = ab.on_mode(&space, 1)?;
    let md = m.dag();
    let bd = b.dag();
    let nm_op = &md * &m;
    let nb_op = &bd * &b;
    let c = |x: f64| C64::new(x, 0.0);

    let mut h = nm_op.scale(c(drive.delta_m));
    h = &h + &nb_op.scale(c(drive.delta_b));
    h = &h - &(&(&md * &md) * &(&m * &m)).scale(c(modes.chi_mm / 2.0));
    h = &h - &(&(&bd * &bd) * &(&b * &b)).scale(c(modes.chi_bb / 2.0));
    h = &h - &(&nm_op * &nb_op).scale(c(modes.chi_mb));
    let exchange = &(&(&m * &m) * &bd).scale(c(modes.g2)) - &bd.scale(drive.epsilon_d);
    h = &h + &(&exchange + &exchange.dag());
    let z_term = memory_drive(&m, drive.epsilon_z, drive.theta_z);
    let constant = matches!(drive.envelope, Envelope::Constant);
    if constant {
        h = &h + &z_term;
    }
    let h = Operator::hermitian(space.clone(), h.into_matrix())?;

    let mut collapse = Vec::new();
    for (rate, op) in [(rates.kappa_1, &m), (rates.kappa_phi_m, &nm_op), (rates.kappa_b, &b), (rates.kappa_phi_b, &nb_op)] {
        if rate > 0.0 {
            collapse.push(op.scale(c(rate.sqrt())));
        }
    }
    let mut model = LindbladModel::new(h, collapse, alpha)?;
    if !constant && drive.epsilon_z != ZERO {
        let env = drive.envelope;
        model = model.with_time_term(z_term, Arc::new(move |t| env.value(t)))?;
    }
    Ok(model)
}

/// iε e^{−iθ} m† − iε* e^{iθ} m.
fn memory_drive(m: &Operator, eps: C64, theta: f64) -> Operator {
    let a = I * eps * C64::from_polar(1.0, -theta);
    let t = m.dag().scale(a);
    &t + &t.dag()
}

/// κ₂ = 4g₂²/κ_b.
pub fn kappa2_adiabatic(g2: f64, kappa_b: f64) -> Result<f64> {
    if g2 == 0.0 {
        return Ok(0.0);
    }
    if kappa_b <= 0.0 {
        return Err(Error::DivByZero("kappa_b"));
    }
    Ok(4.0 * g2 * g2 / kappa_b)
}

/// Single-mode cat model after elimination of the buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatModelSpec {
    pub dim: usize,
    pub alpha: C64,
    pub kappa_2: f64,
    pub kappa_1: f64,
    pub kappa_phi: f64,
    pub chi_mm: f64,
    pub delta_m: f64,
    pub epsilon_z: C64,
    pub theta_z: f64,
    pub envelope: Envelope,
}

impl CatModelSpec {
    pub fn new(dim: usize, alpha: C64, kappa_2: f64) -> Self {
        Self {
            dim,
            alpha,
            kappa_2,
            kappa_1: 0.0,
            kappa_phi: 0.0,
            chi_mm: 0.0,
            delta_m: 0.0,
            epsilon_z: ZERO,
            theta_z: 0.0,
            envelope: Envelope::Constant,
        }
    }
}

/// H = Δ_m m†m − (χ_mm/2)m†²m² + memory drive; collapse √κ₂(m² − α²), √κ₁ m,
/// √κ_φ m†m.
pub fn cat_model(spec: &CatModelSpec) -> Result<LindbladModel> {
    for (name, v) in [("kappa_2", spec.kappa_2), ("kappa_1", spec.kappa_1), ("kappa_phi", spec.kappa_phi)] {
        if !(v >= 0.0) {
            return Err(Error::InvalidArgument(format!("{name} = {v} must be non-negative")));
        }
    }
    spec.envelope.validate()?;
    let ms = ModeSpace::new(spec.dim)?;
    check_truncation(spec.dim, spec.alpha.norm())?;
    let space: Space = ms.into();
    let m = annihilation(ms);
    let md = m.dag();
    let n = &md * &m;
    let c = |x: f64| C64::new(x, 0.0);
    let mut h = n.scale(c(spec.delta_m));
    h = &h - &(&(&md * &md) * &(&m * &m)).scale(c(spec.chi_mm / 2.0));
    let z = memory_drive(&m, spec.epsilon_z, spec.theta_z);
    let constant = matches!(spec.envelope, Envelope::Constant);
    if constant {
        h = &h + &z;
    }
    let h = Operator::hermitian(space.clone(), h.into_matrix())?;
    let mut collapse = Vec::new();
    if spec.kappa_2 > 0.0 {
        let l2 = &(&m * &m) - &Operator::identity(space.clone()).scale(spec.alpha * spec.alpha);
        collapse.push(l2.scale(c(spec.kappa_2.sqrt())));
    }
    if spec.kappa_1 > 0.0 {
        collapse.push(m.scale(c(spec.kappa_1.sqrt())));
    }
    if spec.kappa_phi > 0.0 {
        collapse.push(n.scale(c(spec.kappa_phi.sqrt())));
    }
    let mut model = LindbladModel::new(h, collapse, spec.alpha)?;
    if !constant && spec.epsilon_z != ZERO {
        let env = spec.envelope;
        model = model.with_time_term(z, Arc::new(move |t| env.value(t)))?;
    }
    Ok(model)
}

/// Adiabatically eliminated model with κ₂ = 4g₂²/κ_b. The elimination needs
/// 8g₂|α| < κ_b; when that fails the model is still built and a warning
/// recorded.
pub fn adiabatic_model(g2: f64, kappa_b: f64, alpha: C64, extras: &RateSet, chi_mm: f64, dim: usize) -> Result<LindbladModel> {
    extras.validate()?;
    let kappa_2 = kappa2_adiabatic(g2, kappa_b)?;
    let spec = CatModelSpec { kappa_1: extras.kappa_1, kappa_phi: extras.kappa_phi_m, chi_mm, ..CatModelSpec::new(dim, alpha, kappa_2) };
    let mut model = cat_model(&spec)?;
    if let Some(w) = adiabaticity_warning(g2, kappa_b, alpha) {
        model.warnings.push(w);
    }
    Ok(model)
}

pub fn adiabaticity_warning(g2: f64, kappa_b: f64, alpha: C64) -> Option<String> {
    let lhs = 8.0 * g2.abs() * alpha.norm();
    (lhs >= kappa_b && g2 != 0.0).then(|| format!("adiabatic elimination invalid: 8 g2 |alpha| = {lhs:.4e} rad/s >= kappa_b = {kappa_b:.4e} rad/s"))
}

/// Time stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepper {
    /// Adaptive Dormand–Prince 5(4); handles time-dependent terms.
    Dopri5,
    /// Fixed-step L-stable rational approximation of exp(hL) of order 5
    /// (subdiagonal Padé (2,3)), for stiff time-independent models. Steps
    /// are shortened to land on output times.
    Rational { h: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub ode: OdeOptions,
    pub stepper: Stepper,
    /// Rescale each reported state to unit trace. Off by default so that
    /// drift stays visible.
    pub renormalize: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), stepper: Stepper::Dopri5, renormalize: false }
    }
}

impl EvolveOptions {
    pub fn rational(h: f64) -> Self {
        Self { stepper: Stepper::Rational { h }, ..Self::default() }
    }
}

/// Poles r_k and residues a_k with R(z) = Σ a_k/(z − r_k), the (2,3) Padé
/// approximant of e^z.
fn pade23_partial_fractions() -> [(C64, C64); 3] {
    // denominator ∝ z³ − 9z² + 36z − 60, numerator −3(z² + 8z + 20)
    let comp = nalgebra::Matrix3::new(9.0, -36.0, 60.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let ev = comp.complex_eigenvalues();
    let r = [ev[0], ev[1], ev[2]];
    let mut out = [(ZERO, ZERO); 3];
    for k in 0..3 {
        let num = (r[k] * r[k] + r[k] * 8.0 + 20.0) * -3.0;
        let mut den = ONE;
        for j in 0..3 {
            if j != k {
                den *= r[k] - r[j];
            }
        }
        out[k] = (r[k], num / den);
    }
    out
}

struct RationalStep {
    h: f64,
    terms: Vec<(C64, SparseLu)>,
}

impl RationalStep {
    fn new(l: &Csr, h: f64) -> Result<Self> {
        let hl = Csr::combine(C64::new(h, 0.0), l, ZERO, l);
        let terms = pade23_partial_fractions()
            .iter()
            .map(|&(r, a)| SparseLu::new(&hl, r).map(|lu| (a, lu)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h, terms })
    }

    fn apply(&self, y: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; y.len()];
        for (a, lu) in &self.terms {
            let x = lu.solve(y);
            for (o, xi) in out.iter_mut().zip(&x) {
                *o += a * xi;
            }
        }
        out
    }
}

fn rational_propagate(
    l: &Csr,
    y0: &[C64],
    times: &[f64],
    h: f64,
    mut sink: impl FnMut(usize, &[C64]),
) -> Result<OdeStats> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("rational step {h} must be positive")));
    }
    let mut stats = OdeStats::default();
    let full = RationalStep::new(l, h)?;
    let mut short: Option<RationalStep> = None;
    let mut y = y0.to_vec();
    let mut t = 0.0;
    for (k, &target) in times.iter().enumerate() {
        let span = target - t;
        let n_full = (span / h * (1.0 + 1e-12)).floor() as usize;
        for _ in 0..n_full {
            y = full.apply(&y);
            stats.accepted += 1;
        }
        let rest = span - n_full as f64 * h;
        if rest > 1e-12 * h {
            let reuse = short.as_ref().is_some_and(|s| (s.h - rest).abs() <= 1e-12 * h);
            if !reuse {
                short = Some(RationalStep::new(l, rest)?);
            }
            y = short.as_ref().expect("built above").apply(&y);
            stats.accepted += 1;
        }
        t = target;
        sink(k, &y);
    }
    Ok(stats)
}

/// Integrate from t = 0 and call `observe(k, t_k, ρ(t_k))` at each output time.
pub fn evolve_with<R>(
    model: &LindbladModel,
    rho0: &QuantumState,
    times: &[f64],
    opts: &EvolveOptions,
    mut observe: impl FnMut(usize, f64, &QuantumState) -> R,
) -> Result<(Vec<R>, OdeStats)> {
    if rho0.space() != model.space() {
        return Err(Error::SpaceMismatch(format!("state on {:?}, model on {:?}", rho0.space().dims(), model.space().dims())));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("output times must be non-negative and non-decreasing".into()));
    }
    let l0 = model.liouvillian();
    let lt = model.time_generators();
    let y0 = vectorize(&rho0.density());
    let space = model.space().clone();
    let mut out = Vec::with_capacity(times.len());
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        l0.matvec(y, dy);
        for (g, f) in &lt {
            let s = f(t);
            if s != 0.0 {
                g.matvec_add(C64::new(s, 0.0), y, dy);
            }
        }
    };
    let sink = |k: usize, y: &[C64]| {
        let mut m = unvectorize(y);
        if opts.renormalize {
            let tr = m.trace();
            m /= tr;
        }
        let st = QuantumState::mixed_unchecked(space.clone(), m);
        out.push(observe(k, times[k], &st));
    };
    let stats = match opts.stepper {
        Stepper::Dopri5 => dopri5_with(rhs, 0.0, &y0, times, &opts.ode, sink)?,
        Stepper::Rational { h } => {
            if !model.is_time_independent() {
                return Err(Error::InvalidArgument("rational stepping needs a time-independent model".into()));
            }
            rational_propagate(&l0, &y0, times, h, sink)?
        }
    };
    Ok((out, stats))
}

/// States at each of `times`, integrating from t = 0.
pub fn evolve(model: &LindbladModel, rho0: &QuantumState, times: &[f64]) -> Result<Vec<QuantumState>> {
    Ok(evolve_with(model, rho0, times, &EvolveOptions::default(), |_, _, s| s.clone())?.0)
}

/// Tr(ρ op).
pub fn expectation(state: &QuantumState, op: &Operator) -> Result<C64> {
    state.expectation(op)
}

const STEADY_RESIDUAL_TOL: f64 = 1e-9;

fn trace_indices(keep: &[usize], n: usize) -> Vec<(usize, usize)> {
    // (position in `keep`, diagonal element index i)
    keep.iter().enumerate().filter(|(_, &v)| v % n == v / n).map(|(p, &v)| (p, v % n)).collect()
}

/// Steady state of L restricted to the vec indices `keep`.
fn sector_steady(l: &Csr, keep: &[usize], n: usize) -> Result<Vec<C64>> {
    let a = l.principal(keep);
    let tr = trace_indices(keep, n);
    if tr.is_empty() {
        return Err(Error::DegenerateNull("sector carries no trace".into()));
    }
    let row: Vec<(usize, C64)> = tr.iter().map(|&(p, _)| (p, ONE)).collect();
    let pivot = tr[0].0;
    let lu = SparseLu::with_rows(&a, ZERO, Some((pivot, &row))).map_err(|e| Error::DegenerateNull(format!("steady-state LU failed: {e}")))?;
    let mut b = vec![ZERO; keep.len()];
    b[pivot] = ONE;
    let x = lu.solve(&b);
    if x.iter().any(|z| !z.is_finite()) {
        return Err(Error::DegenerateNull("non-finite steady-state solution".into()));
    }
    let mut full = vec![ZERO; n * n];
    for (p, &v) in keep.iter().enumerate() {
        full[v] = x[p];
    }
    Ok(full)
}

fn finish_steady(l: &Csr, v: Vec<C64>, space: &Space) -> Result<QuantumState> {
    let mut m = unvectorize(&v);
    let tr = m.trace();
    m /= tr;
    let herm = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let x = vectorize(&herm);
    let mut y = vec![ZERO; x.len()];
    l.matvec(&x, &mut y);
    let res = y.iter().map(|z| z.norm()).fold(0.0, f64::max) / l.norm_inf().max(1e-300);
    if !(res < STEADY_RESIDUAL_TOL) {
        return Err(Error::DegenerateNull(format!("steady-state residual {res:.3e}")));
    }
    Ok(QuantumState::mixed_unchecked(space.clone(), herm))
}

/// Null vector of the Liouvillian with unit trace. When every term commutes
/// with memory parity the even and odd population blocks each carry a
/// steady state; the even one is returned.
pub fn steady_state(model: &LindbladModel) -> Result<QuantumState> {
    if !model.is_time_independent() {
        return Err(Error::InvalidArgument("steady state of a time-dependent model".into()));
    }
    let l = model.liouvillian();
    let n = model.space().total();
    let v = if model.conserves_memory_parity_strongly() {
        let odd = memory_parities(model.space());
        let keep: Vec<usize> = (0..n * n).filter(|&v| !odd[v % n] && !odd[v / n]).collect();
        sector_steady(&l, &keep, n)?
    } else {
        let keep: Vec<usize> = (0..n * n).collect();
        sector_steady(&l, &keep, n)?
    };
    finish_steady(&l, v, model.space())
}

/// Superoperator sectors under memory parity: ρ ↦ PρP = ±ρ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    ParityOdd,
    ParityEven,
    Joined,
}

#[derive(Debug, Clone, Copy)]
pub struct DecayOptions {
    pub n_eig: usize,
    pub krylov: usize,
    /// Positive real shift for shift-invert; default 1e−9‖L‖.
    pub shift: Option<f64>,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { n_eig: 6, krylov: 40, shift: None }
    }
}

/// A Liouvillian eigenpair with its vector expanded to the full vec space.
#[derive(Debug, Clone)]
pub struct DecayMode {
    pub eigenvalue: C64,
    pub vector: Vec<C64>,
    pub residual: f64,
}

impl DecayMode {
    pub fn rate(&self) -> f64 {
        -self.eigenvalue.re
    }

    /// |⟨A, v⟩| / (‖A‖‖v‖) in the Hilbert–Schmidt inner product.
    pub fn overlap(&self, a: &CMatrix) -> f64 {
        let av = vectorize(a);
        let dot: C64 = av.iter().zip(&self.vector).map(|(x, y)| x.conj() * y).sum();
        let na = av.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nv = self.vector.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        dot.norm() / (na * nv).max(1e-300)
    }
}

/// Eigenpairs of L in `symmetry` nearest zero, excluding the steady states,
/// sorted by decay rate.
pub fn decay_modes(model: &LindbladModel, symmetry: Symmetry, opts: &DecayOptions) -> Result<Vec<DecayMode>> {
    if !model.is_time_independent() {
        return Err(Error::InvalidArgument("decay rates of a time-dependent model".into()));
    }
    let l = model.liouvillian();
    let n = model.space().total();
    let odd = memory_parities(model.space());
    let sector_odd = |v: usize| odd[v % n] != odd[v / n];
    let keep: Vec<usize> = match symmetry {
        Symmetry::Joined => (0..n * n).collect(),
        Symmetry::ParityOdd => (0..n * n).filter(|&v| sector_odd(v)).collect(),
        Symmetry::ParityEven => (0..n * n).filter(|&v| !sector_odd(v)).collect(),
    };
    if symmetry != Symmetry::Joined {
        let mask: Vec<bool> = (0..n * n).map(sector_odd).collect();
        if l.couples_across(&mask) {
            return Err(Error::InvalidArgument("memory parity is not conserved; use the joined sector".into()));
        }
    }
    let a = l.principal(&keep);

    // steady states living in this sector, paired with the trace functional
    // they are normalised against
    let mut deflate: Vec<(Vec<(usize, C64)>, Vec<C64>)> = Vec::new();
    if symmetry != Symmetry::ParityOdd {
        let pos: std::collections::HashMap<usize, usize> = keep.iter().enumerate().map(|(p, &v)| (v, p)).collect();
        let restrict = |full: &[C64]| -> Vec<C64> { keep.iter().map(|&v| full[v]).collect() };
        let diag = |want_odd: Option<bool>| -> Vec<(usize, C64)> {
            (0..n).filter(|&i| want_odd.is_none_or(|o| odd[i] == o)).filter_map(|i| pos.get(&(i + i * n)).map(|&p| (p, ONE))).collect()
        };
        if model.conserves_memory_parity_strongly() {
            for block_odd in [false, true] {
                let bk: Vec<usize> = (0..n * n).filter(|&v| odd[v % n] == block_odd && odd[v / n] == block_odd).collect();
                let ss = sector_steady(&l, &bk, n)?;
                deflate.push((diag(Some(block_odd)), restrict(&ss)));
            }
        } else {
            let all: Vec<usize> = (0..n * n).collect();
            let ss = sector_steady(&l, &all, n)?;
            deflate.push((diag(None), restrict(&ss)));
        }
        // normalise each against its own functional
        for (f, v) in deflate.iter_mut() {
            let t: C64 = f.iter().map(|&(p, w)| w * v[p]).sum();
            for z in v.iter_mut() {
                *z /= t;
            }
        }
    }
    let project = |x: &mut [C64]| {
        for (f, v) in &deflate {
            let t: C64 = f.iter().map(|&(p, w)| w * x[p]).sum();
            if t != ZERO {
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi -= t * vi;
                }
            }
        }
    };
    let shift = opts.shift.unwrap_or(1e-9 * a.norm_inf());
    let start: Vec<C64> = (0..keep.len()).map(|k| C64::new(1.0 + 0.5 * ((k as f64) * 0.7548776662).sin(), 0.3 * ((k as f64) * 0.5698402910).cos())).collect();
    let pairs = shift_invert_eigs(&a, C64::new(shift, 0.0), opts.n_eig, opts.krylov, &start, &project)?;
    let mut modes: Vec<DecayMode> = pairs
        .into_iter()
        .map(|p| {
            let mut full = vec![ZERO; n * n];
            for (q, &v) in keep.iter().enumerate() {
                full[v] = p.vector[q];
            }
            DecayMode { eigenvalue: p.value, vector: full, residual: p.residual }
        })
        .collect();
    modes.sort_by(|x, y| x.rate().partial_cmp(&y.rate()).unwrap_or(std::cmp::Ordering::Equal));
    if modes.is_empty() {
        return Err(Error::EigenFailure("no eigenvalues returned".into()));
    }
    Ok(modes)
}

/// Smallest nonzero decay rate −Re λ in the sector, in 1/s.
pub fn slowest_decay(model: &LindbladModel, symmetry: Symmetry) -> Result<f64> {
    let modes = decay_modes(model, symmetry, &DecayOptions::default())?;
    modes
        .iter()
        .find(|m| m.rate() > 0.0)
        .map(|m| m.rate())
        .ok_or_else(|| Error::EigenFailure("no decaying mode found".into()))
}

/// Decay rate of the mode with the largest overlap with `target`.
pub fn decay_along(model: &LindbladModel, symmetry: Symmetry, target: &CMatrix, opts: &DecayOptions) -> Result<f64> {
    let modes = decay_modes(model, symmetry, opts)?;
    modes
        .iter()
        .filter(|m| m.rate() > 0.0)
        .max_by(|a, b| a.overlap(target).partial_cmp(&b.overlap(target)).unwrap_or(std::cmp::Ordering::Equal))
        .map(|m| m.rate())
        .ok_or_else(|| Error::EigenFailure("no decaying mode found".into()))
}

pub const TRAJECTORY_HEADER: &str = "t[ns],tr,n_m,n_b,parity_m";

/// One trajectory row: time, trace, ⟨n_m⟩, ⟨n_b⟩ and ⟨P_m⟩.
pub fn trajectory_row(t: f64, state: &QuantumState) -> [f64; 5] {
    let space = state.space();
    let rho = state.density();
    let n = space.total();
    let (mut nm, mut nb, mut pm) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = rho[(i, i)].re;
        let km = space.occupation(i, 0);
        nm += km as f64 * p;
        if space.n_modes() > 1 {
            nb += space.occupation(i, 1) as f64 * p;
        }
        pm += if km % 2 == 0 { p } else { -p };
    }
    [t * 1e9, rho.trace().re, nm, nb, pm]
}

pub fn write_trajectory_csv(w: &mut impl Write, rows: &[[f64; 5]]) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        writeln!(w, "{:.6},{:.12e},{:.12e},{:.12e},{:.12e}", r[0], r[1], r[2], r[3], r[4])?;
    }
    Ok(())
}

/// Dense density matrix with extents (mode dims …, mode dims …), row-major.
pub fn write_state_binary(w: &mut impl Write, state: &QuantumState) -> std::io::Result<()> {
    let rho = state.density();
    let n = rho.nrows();
    let mut dims = state.space().dims().to_vec();
    dims.extend_from_slice(state.space().dims());
    let payload: Vec<C64> = (0..n * n).map(|k| rho[(k / n, k % n)]).collect();
    write_array(w, &BinaryArray { dims, payload: Payload::Complex(payload) })
}

pub fn read_state_binary(r: &mut impl std::io::Read) -> Result<QuantumState> {
    let a = crate::io::read_array(r).map_err(|e| Error::InvalidArgument(format!("state dump: {e}")))?;
    let Payload::Complex(v) = a.payload else {
        return Err(Error::InvalidArgument("state dump holds real data".into()));
    };
    if a.dims.len() % 2 != 0 || a.dims.is_empty() {
        return Err(Error::InvalidArgument("state dump rank must be even".into()));
    }
    let space = Space::new(&a.dims[..a.dims.len() / 2])?;
    let n = space.total();
    let m = CMatrix::from_fn(n, n, |i, j| v[i * n + j]);
    QuantumState::mixed_with_tolerance(space, m, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{cat_state, coherent_state, fock_state, number, parity, tensor_states};
    use crate::{khz, mhz};

    fn lossy(dim: usize, k1: f64) -> LindbladModel {
        let spec = CatModelSpec { kappa_1: k1, ..CatModelSpec::new(dim, ZERO, 0.0) };
        cat_model(&spec).unwrap()
    }

    #[test]
    fn envelope_areas() {
        let t = 25e-9;
        let g = Envelope::Gaussian { duration: t };
        let n = 4000;
        let area: f64 = (0..n).map(|k| g.value((k as f64 + 0.5) * t / n as f64)).sum::<f64>() * t / n as f64;
        assert!((area / t - 0.997_300_2).abs() < 1e-6, "{}", area / t);
        assert_eq!(Envelope::Square { duration: t }.value(2.0 * t), 0.0);
        assert!(Envelope::Square { duration: 0.0 }.validate().is_err());
    }

    #[test]
    fn vacuum_stationary_without_rates() {
        let modes = ModeParams { omega_m: 0.0, omega_b: 0.0, zpf_m: 0.0, zpf_b: 0.0, g2: 0.0, chi_mm: 0.0, chi_bb: 0.0, chi_mb: 0.0 };
        let model = build_two_mode_model(&modes, &RateSet::default(), &DriveSpec::default(), (6, 6)).unwrap();
        let s = model.space().clone();
        let vac = tensor_states(&[&fock_state(ModeSpace::new(6).unwrap(), 0).unwrap(), &fock_state(ModeSpace::new(6).unwrap(), 0).unwrap()]);
        assert_eq!(vac.space(), &s);
        let out = evolve(&model, &vac, &[1e-6]).unwrap();
        assert!((out[0].density() - vac.density()).camax() < 1e-12);
    }

    #[test]
    fn nominal_model_accepted() {
        let modes = ModeParams { omega_m: 0.0, omega_b: 0.0, zpf_m: 0.0305, zpf_b: 0.0648, g2: mhz(6.0), chi_mm: khz(200.0), chi_bb: mhz(11.3), chi_mb: mhz(1.8) };
        let rates = RateSet::new(khz(14.0), mhz(40.0), mhz(0.16));
        let model = build_two_mode_model(&modes, &rates, &DriveSpec::stabilizing(C64::new(2.0, 0.0), modes.g2), (18, 6)).unwrap();
        assert!(model.h_static().hermiticity_error() < 1e-6);
        assert_eq!(model.collapse_ops().len(), 4);
        assert!((rates.kappa_phi_b - mhz(9.6)).abs() < 1.0);
        assert!(matches!(
            build_two_mode_model(&modes, &rates, &DriveSpec::stabilizing(C64::new(2.0, 0.0), modes.g2), (10, 6)),
            Err(Error::Truncation { .. })
        ));
        assert!(build_two_mode_model(&modes, &rates, &DriveSpec::default(), (10, 4)).is_err());
    }

    #[test]
    fn energy_decay_of_coherent_state() {
        let k1 = 1e5;
        let model = lossy(25, k1);
        let s = ModeSpace::new(25).unwrap();
        let a0 = C64::new(2.0, 0.0);
        let times: Vec<f64> = (0..=5).map(|k| k as f64 * 5e-6).collect();
        let n = number(s);
        let out = evolve(&model, &coherent_state(s, a0).unwrap(), &times).unwrap();
        for (t, st) in times.iter().zip(&out) {
            let exact = 4.0 * (-k1 * t).exp();
            let got = st.expectation(&n).unwrap().re;
            assert!((got - exact).abs() < 1e-4 * exact.max(1e-3), "t={t} got {got} exact {exact}");
            assert!((st.trace().re - 1.0).abs() < 1e-7);
            assert!(st.min_eigenvalue() > -1e-7);
        }
    }

    #[test]
    fn dephasing_preserves_populations() {
        let kphi = 2e5;
        let spec = CatModelSpec { kappa_phi: kphi, ..CatModelSpec::new(11, ZERO, 0.0) };
        let model = cat_model(&spec).unwrap();
        let s = ModeSpace::new(11).unwrap();
        let psi = coherent_state(s, C64::new(1.0, 0.0)).unwrap();
        let r0 = psi.density();
        let t = 3e-6;
        let out = evolve(&model, &psi, &[t]).unwrap();
        let r = out[0].density();
        for i in 0..11 {
            for j in 0..11 {
                let d = (i as f64 - j as f64).powi(2);
                let exact = r0[(i, j)] * (-kphi * d * t / 2.0).exp();
                assert!((r[(i, j)] - exact).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn undriven_lossy_steady_state_is_vacuum() {
        let model = lossy(6, 1e3);
        let ss = steady_state(&model).unwrap();
        assert!((ss.population(0) - 1.0).abs() < 1e-10);
        assert!(model.residual(&ss) < 1e-9);
    }

    #[test]
    fn single_mode_energy_and_coherence_rates() {
        let k1 = 2.0e4;
        let model = lossy(8, k1);
        let even = slowest_decay(&model, Symmetry::ParityEven).unwrap();
        let odd = slowest_decay(&model, Symmetry::ParityOdd).unwrap();
        assert!((even - k1).abs() < 1e-6 * k1, "{even}");
        assert!((odd - k1 / 2.0).abs() < 1e-6 * k1, "{odd}");
    }

    #[test]
    fn kappa2_closed_form_and_warning() {
        assert!((kappa2_adiabatic(mhz(6.0), mhz(40.0)).unwrap() - mhz(3.6)).abs() < 1e-6);
        assert_eq!(kappa2_adiabatic(0.0, mhz(40.0)).unwrap(), 0.0);
        let m = adiabatic_model(mhz(6.0), mhz(40.0), C64::new(2.0, 0.0), &RateSet::default(), 0.0, 20).unwrap();
        assert_eq!(m.warnings().len(), 1);
        let m = adiabatic_model(mhz(1.0), mhz(40.0), C64::new(1.0, 0.0), &RateSet::default(), 0.0, 20).unwrap();
        assert!(m.warnings().is_empty());
    }

    #[test]
    fn two_photon_loss_keeps_memory_parity() {
        let spec = CatModelSpec::new(15, ZERO, 1e6);
        let model = cat_model(&spec).unwrap();
        assert!(model.conserves_memory_parity_strongly());
        let s = ModeSpace::new(15).unwrap();
        let st = cat_state(s, C64::new(1.5, 0.0), 0.0).unwrap();
        let out = evolve(&model, &st, &[1e-7, 1e-6]).unwrap();
        let p = parity(s);
        for o in &out {
            assert!((o.expectation(&p).unwrap().re - 1.0).abs() < 1e-9);
            let r = o.density();
            assert!((&r - r.adjoint()).camax() < 1e-9);
        }
        // pure two-photon loss from an even cat ends in vacuum
        let late = evolve(&model, &st, &[1e-4]).unwrap();
        assert!(late[0].population(0) > 0.999);
    }

    #[test]
    fn rational_stepper_matches_dopri5() {
        let spec = CatModelSpec { kappa_1: 1e5, chi_mm: 2e5, ..CatModelSpec::new(14, C64::new(1.2, 0.0), 2e6) };
        let model = cat_model(&spec).unwrap();
        let s = ModeSpace::new(14).unwrap();
        let st = coherent_state(s, C64::new(0.0, 1.0)).unwrap();
        let times = [1e-7, 5e-7, 2e-6];
        let a = evolve(&model, &st, &times).unwrap();
        let (b, _) = evolve_with(&model, &st, &times, &EvolveOptions::rational(2e-9), |_, _, q| q.density()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.density() - y).camax() < 1e-7, "{}", (x.density() - y).camax());
            assert!((y.trace().re - 1.0).abs() < 1e-9, "{}", y.trace());
        }
    }

    #[test]
    fn state_dump_roundtrip() {
        let s = ModeSpace::new(8).unwrap();
        let st = coherent_state(s, C64::new(0.3, 0.1)).unwrap();
        let mut buf = Vec::new();
        write_state_binary(&mut buf, &st).unwrap();
        let back = read_state_binary(&mut buf.as_slice()).unwrap();
        assert!((back.density() - st.density()).camax() < 1e-15);
    }
}
