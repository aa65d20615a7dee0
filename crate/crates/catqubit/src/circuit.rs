//! Flux-biased ring of two junctions E_J and one junction E_W: equilibrium
//! phases, effective energies, normal modes and the nonlinear rates they set.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::TAU;

use std::f64::consts::PI;

/// Ring parameters. Energies are E/h in GHz, flux in units of φ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub e_j: f64,
    pub e_w: f64,
    pub e_c: f64,
    pub phi_ext: f64,
}

impl RingParams {
    pub fn new(e_j: f64, e_w: f64, e_c: f64, phi_ext: f64) -> Result<Self> {
        if !(e_j > 0.0 && e_w > 0.0 && e_c > 0.0) {
            return Err(Error::InvalidArgument("E_J, E_W and E_C must be positive".into()));
        }
        Ok(Self { e_j, e_w, e_c, phi_ext })
    }

    pub fn beta_j(&self) -> f64 {
        self.e_w / self.e_j
    }

    pub fn at_flux(&self, phi_ext: f64) -> Self {
        Self { phi_ext, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPhases {
    pub phi_j: f64,
    pub phi_w: f64,
    /// Ē_J = E_J cos φ̄_J (GHz).
    pub e_j_eff: f64,
    /// Ē_W = E_W cos φ̄_W (GHz).
    pub e_w_eff: f64,
}

impl EquilibriumPhases {
    /// Bare E_J recovered from Ē_J and φ̄_J.
    pub fn e_j(&self) -> f64 {
        self.e_j_eff / self.phi_j.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub phases: EquilibriumPhases,
    pub stable: bool,
    /// Ring potential −2E_J cos φ̄_J − E_W cos φ̄_W (GHz).
    pub energy: f64,
}

/// Mode frequencies (rad/s), phase zero-point fluctuations and rates (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub omega_m: f64,
    pub omega_b: f64,
    pub zpf_m: f64,
    pub zpf_b: f64,
    pub g2: f64,
    pub chi_mm: f64,
    pub chi_bb: f64,
    pub chi_mb: f64,
}

/// Externally fitted values replacing the bare-ring ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeOverrides {
    pub omega_m: Option<f64>,
    pub omega_b: Option<f64>,
    pub zpf_m: Option<f64>,
    pub zpf_b: Option<f64>,
}

fn wrap_pi(x: f64) -> f64 {
    // into (−π, π]
    let mut y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y += TAU;
    }
    y
}

fn loop_phase(beta: f64, phi_w: f64) -> f64 {
    phi_w + 2.0 * (beta * phi_w.sin()).asin()
}

fn phases_from_w(p: &RingParams, phi_w: f64) -> EquilibriumPhases {
    let phi_j = (p.beta_j() * phi_w.sin()).asin();
    EquilibriumPhases { phi_j, phi_w, e_j_eff: p.e_j * phi_j.cos(), e_w_eff: p.e_w * phi_w.cos() }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Convergence("bracket does not contain a sign change".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < tol {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unique equilibrium on the monotone branch (β_J < 1/2).
pub fn solve_equilibrium(params: &RingParams) -> Result<EquilibriumPhases> {
    let beta = params.beta_j();
    if beta >= 0.5 {
        return Err(Error::MultiValuedFlux(beta));
    }
    let target = wrap_pi(TAU * params.phi_ext);
    let f = |w: f64| loop_phase(beta, w) - target;
    let w = if target == PI { PI } else { bisect(f, -PI, PI, 1e-15)? };
    let resid = f(w).abs();
    if resid > 1e-12 {
        return Err(Error::Convergence(format!("loop-phase residual {resid:.2e} rad")));
    }
    Ok(phases_from_w(params, w))
}

/// All solutions on φ̄_W ∈ (−π, π], sorted by ring potential energy.
pub fn enumerate_branches(params: &RingParams) -> Vec<Branch> {
    let beta = params.beta_j();
    let target = TAU * params.phi_ext;
    let samples = 20_000;
    let grid: Vec<f64> = (0..=samples).map(|k| -PI + TAU * k as f64 / samples as f64).collect();
    let mut roots: Vec<f64> = Vec::new();
    for k in -3i32..=3 {
        let g = |w: f64| loop_phase(beta, w) - target - TAU * k as f64;
        for pair in grid.windows(2) {
            let (a, b) = (g(pair[0]), g(pair[1]));
            if !(a.is_finite() && b.is_finite()) {
                continue;
            }
            if a == 0.0 {
                roots.push(pair[0]);
            } else if a.signum() != b.signum() {
                if let Ok(r) = bisect(g, pair[0], pair[1], 1e-15) {
                    roots.push(r);
                }
            }
        }
    }
    let mut uniq: Vec<f64> = Vec::new();
    for r in roots {
        let r = if r <= -PI + 1e-12 { PI } else { r };
        if !uniq.iter().any(|u| (u - r).abs() < 1e-9) {
            uniq.push(r);
        }
    }
    let mut out: Vec<Branch> = uniq
        .into_iter()
        .map(|w| {
            let phases = phases_from_w(params, w);
            let s = beta * w.sin();
            let slope = 1.0 + 2.0 * beta * w.cos() / (1.0 - s * s).sqrt();
            let energy = -2.0 * params.e_j * phases.phi_j.cos() - params.e_w * w.cos();
            Branch { phases, stable: slope > 0.0, energy }
        })
        .collect();
    out.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
    out
}

/// Flux of the memory-frequency sweet spot, (π/2 + 2 arcsin β_J)/2π.
pub fn sweet_spot(beta_j: f64) -> Result<f64> {
    if !(beta_j > 0.0) || beta_j >= std::f64::consts::FRAC_1_SQRT_2 {
        return Err(Error::NoSweetSpot(beta_j));
    }
    Ok((PI / 2.0 + 2.0 * beta_j.asin()) / TAU)
}

/// Normal modes for E_L,m = 2Ē_J and E_L,b = 2Ē_J + 4Ē_W, with g₂ from the
/// third-order term and Kerr rates from the fourth-order expansion.
pub fn mode_params(eq: &EquilibriumPhases, e_c: f64, overrides: &ModeOverrides) -> ModeParams {
    let el_m = 2.0 * eq.e_j_eff;
    let el_b = 2.0 * eq.e_j_eff + 4.0 * eq.e_w_eff;
    let omega_m = overrides.omega_m.unwrap_or_else(|| crate::ghz((4.0 * e_c * el_m).sqrt()));
    let omega_b = overrides.omega_b.unwrap_or_else(|| crate::ghz((4.0 * e_c * el_b).sqrt()));
    let zpf_m = overrides.zpf_m.unwrap_or_else(|| (e_c / el_m).powf(0.25));
    let zpf_b = overrides.zpf_b.unwrap_or_else(|| (e_c / el_b).powf(0.25));
    let ej = crate::ghz(eq.e_j());
    let ej_eff = crate::ghz(eq.e_j_eff);
    let ew_eff = crate::ghz(eq.e_w_eff);
    ModeParams {
        omega_m,
        omega_b,
        zpf_m,
        zpf_b,
        g2: ej * eq.phi_j.sin() * zpf_b * zpf_m * zpf_m,
        chi_mm: ej_eff * zpf_m.powi(4),
        chi_bb: (ej_eff + 8.0 * ew_eff) * zpf_b.powi(4),
        chi_mb: 2.0 * ej_eff * zpf_m * zpf_m * zpf_b * zpf_b,
    }
}

/// Near-sweet-spot approximation (E_W/ħ)(1 − δφ²/2) zpf_m² zpf_b, in rad/s.
pub fn g2_sweet_approx(e_w: f64, zpf_m: f64, zpf_b: f64, delta_phi_ext: f64) -> f64 {
    crate::ghz(e_w) * (1.0 - delta_phi_ext * delta_phi_ext / 2.0) * zpf_m * zpf_m * zpf_b
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSurface {
    pub phi_m: Vec<f64>,
    pub phi_b: Vec<f64>,
    /// values[(i, j)] at (phi_m[i], phi_b[j]), GHz, minimum shifted to 0.
    pub values: DMatrix<f64>,
}

pub fn potential_surface(params: &RingParams, phi_m: &[f64], phi_b: &[f64]) -> Result<PotentialSurface> {
    let eq = solve_equilibrium(params).or_else(|_| {
        enumerate_branches(params)
            .into_iter()
            .find(|b| b.stable)
            .map(|b| b.phases)
            .ok_or(Error::NoCrossing)
    })?;
    let mut v = DMatrix::from_fn(phi_m.len(), phi_b.len(), |i, j| {
        -2.0 * params.e_j * phi_m[i].cos() * (phi_b[j] + eq.phi_j).cos() - params.e_w * (2.0 * phi_b[j] - eq.phi_w).cos()
    });
    let min = v.min();
    v.add_scalar_mut(-min);
    Ok(PotentialSurface { phi_m: phi_m.to_vec(), phi_b: phi_b.to_vec(), values: v })
}

impl PotentialSurface {
    fn nearest(&self, (x, y): (f64, f64)) -> (usize, usize) {
        let near = |axis: &[f64], v: f64| {
            axis.iter()
                .enumerate()
                .min_by(|a, b| (a.1 - v).abs().partial_cmp(&(b.1 - v).abs()).unwrap())
                .map(|(k, _)| k)
                .unwrap()
        };
        (near(&self.phi_m, x), near(&self.phi_b, y))
    }

    pub fn value_at(&self, p: (f64, f64)) -> f64 {
        let (i, j) = self.nearest(p);
        self.values[(i, j)]
    }

    /// Lowest energy level at which the two grid points are connected through
    /// the sublevel set (mountain-pass barrier on the grid).
    pub fn barrier(&self, from: (f64, f64), to: (f64, f64)) -> f64 {
        let a = self.nearest(from);
        let b = self.nearest(to);
        let (nr, nc) = self.values.shape();
        let connected = |level: f64| -> bool {
            if self.values[a] > level || self.values[b] > level {
                return false;
            }
            let mut seen = vec![false; nr * nc];
            let mut stack = vec![a];
            seen[a.0 * nc + a.1] = true;
            while let Some((i, j)) = stack.pop() {
                if (i, j) == b {
                    return true;
                }
                let nbrs = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
                for (p, q) in nbrs {
                    if p < nr && q < nc && !seen[p * nc + q] && self.values[(p, q)] <= level {
                        seen[p * nc + q] = true;
                        stack.push((p, q));
                    }
                }
            }
            false
        };
        let (mut lo, mut hi) = (self.values[a].max(self.values[b]), self.values.max());
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if connected(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi - self.values[a]
    }
}

/// Root of ω_b(φ) − 2ω_m(φ) on [lo, hi] to 1e−6 φ₀, from a scan for the
/// first sign change followed by bisection.
pub fn flux_match(dispersion: impl Fn(f64) -> Result<(f64, f64)>, lo: f64, hi: f64) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::InvalidArgument("empty flux interval".into()));
    }
    let mismatch = |phi: f64| -> Result<f64> {
        let (wm, wb) = dispersion(phi)?;
        Ok(wb - 2.0 * wm)
    };
    let n = 400;
    let mut prev = (lo, mismatch(lo)?);
    for k in 1..=n {
        let phi = lo + (hi - lo) * k as f64 / n as f64;
        let cur = (phi, mismatch(phi)?);
        if prev.1 == 0.0 {
            return Ok(prev.0);
        }
        if prev.1.signum() != cur.1.signum() {
            let f = |x: f64| mismatch(x).unwrap_or(f64::NAN);
            return bisect(f, prev.0, cur.0, 1e-7);
        }
        prev = cur;
    }
    Err(Error::NoCrossing)
}

/// Linear interpolation in a tabulated (φ, ω_m, ω_b) dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    rows: Vec<(f64, f64, f64)>,
}

impl DispersionTable {
    pub fn new(mut rows: Vec<(f64, f64, f64)>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("dispersion table needs two rows".into()));
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(Self { rows })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    pub fn eval(&self, phi: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.range();
        if phi < lo || phi > hi {
            return Err(Error::InvalidArgument(format!("flux {phi} outside table")));
        }
        let k = self.rows.partition_point(|r| r.0 <= phi).clamp(1, self.rows.len() - 1);
        let (a, b) = (self.rows[k - 1], self.rows[k]);
        let t = if b.0 == a.0 { 0.0 } else { (phi - a.0) / (b.0 - a.0) };
        Ok((a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2)))
    }

    pub fn flux_match(&self) -> Result<f64> {
        let (lo, hi) = self.range();
        flux_match(|p| self.eval(p), lo, hi)
    }
}

/// Bare-ring dispersion, for flux_match without stub loading.
pub fn ring_dispersion(params: &RingParams, phi_ext: f64) -> Result<(f64, f64)> {
    let eq = solve_equilibrium(&params.at_flux(phi_ext))?;
    let m = mode_params(&eq, params.e_c, &ModeOverrides::default());
    Ok((m.omega_m, m.omega_b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub phi_ext: f64,
    pub phases: EquilibriumPhases,
    pub modes: ModeParams,
}

pub fn sweep(params: &RingParams, fluxes: &[f64], overrides: &ModeOverrides, exec: Exec) -> Result<Vec<SweepRow>> {
    exec.map(fluxes, |&phi| {
        let eq = solve_equilibrium(&params.at_flux(phi))?;
        Ok(SweepRow { phi_ext: phi, phases: eq, modes: mode_params(&eq, params.e_c, overrides) })
    })
    .into_iter()
    .collect()
}

pub const SWEEP_HEADER: &str = "phi_ext[phi0],phi_J_bar[rad],phi_W_bar[rad],EJ_eff[GHz],EW_eff[GHz],omega_m[GHz],omega_b[GHz],g2[MHz],chi_mm[kHz],chi_bb[MHz],chi_mb[MHz]";

/// CSV with frequencies reported as ω/2π.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        let m = &r.modes;
        writeln!(
            w,
            "{:.6},{:.9},{:.9},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.phi_ext,
            r.phases.phi_j,
            r.phases.phi_w,
            r.phases.e_j_eff,
            r.phases.e_w_eff,
            m.omega_m / TAU / 1e9,
            m.omega_b / TAU / 1e9,
            m.g2 / TAU / 1e6,
            m.chi_mm / TAU / 1e3,
            m.chi_bb / TAU / 1e6,
            m.chi_mb / TAU / 1e6,
        )?;
    }
    Ok(())
}
