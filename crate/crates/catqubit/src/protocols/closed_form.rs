//! Closed-form estimators: Ramsey revivals, Z-gate rates and fidelities,
//! semi-classical buffer displacement, detuned cat size, transmon-induced
//! bit-flip bounds and CNOT parameters. Rates and frequencies in rad/s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::C64;

/// Ramsey contrast cos(n̄ sin χt)·exp(n̄(cos χt − 1) − t/T₂) of a qubit
/// dispersively coupled to a coherent field of n̄ photons. `t2` must be
/// positive.
pub fn ramsey_signal(n_bar: f64, chi: f64, t2: f64, t: f64) -> f64 {
    debug_assert!(t2 > 0.0);
    let x = chi * t;
    (n_bar * x.sin()).cos() * (n_bar * (x.cos() - 1.0) - t / t2).exp()
}

/// (Ω_Z, κ_Z) = (4Re(ε_Z α), 2κ₁|α|² + κ_b|ε_Z|²/(2|α|²g₂²)).
pub fn ideal_z_rates(alpha: C64, eps_z: C64, kappa_1: f64, kappa_b: f64, g2: f64) -> Result<(f64, f64)> {
    let a2 = alpha.norm_sqr();
    if a2 == 0.0 {
        return Err(Error::DivByZero("alpha"));
    }
    if g2 == 0.0 {
        return Err(Error::DivByZero("g2"));
    }
    let omega = 4.0 * (eps_z * alpha).re;
    let kappa = 2.0 * kappa_1 * a2 + kappa_b * eps_z.norm_sqr() / (2.0 * a2 * g2 * g2);
    Ok((omega, kappa))
}

/// The amplitude η of η m† + η* m equivalent to iε e^{−iθ} m† − iε* e^{iθ} m,
/// conjugated so that Ω_Z = 4Re(η α) for the simulated drive.
pub fn effective_z_amplitude(eps_z: C64, theta_z: f64) -> C64 {
    (C64::i() * eps_z * C64::from_polar(1.0, -theta_z)).conj()
}

/// F = 1/2 + e^{−πκ/Ω}/2 for a π rotation.
pub fn gate_fidelity(kappa_z: f64, omega_z: f64) -> f64 {
    0.5 + 0.5 * (-PI * kappa_z / omega_z.abs()).exp()
}

/// F = 1/2 + e^{−πκ/2Ω}/2 for a π/2 rotation.
pub fn half_pi_fidelity(kappa_z: f64, omega_z: f64) -> f64 {
    0.5 + 0.5 * (-PI * kappa_z / (2.0 * omega_z.abs())).exp()
}

/// Phase-flip infidelity accumulated while preparing a cat for `t_prep`.
/// Kept apart from the gate fidelity.
pub fn preparation_infidelity(gamma_z: f64, t_prep: f64) -> f64 {
    0.5 * (1.0 - (-gamma_z * t_prep).exp())
}

/// e^{2|α|²}/(|α|²κ_φ): bit-flip time set by memory dephasing under strong
/// two-photon confinement.
pub fn dephasing_bitflip_time(alpha_sq: f64, kappa_phi: f64) -> f64 {
    (2.0 * alpha_sq).exp() / (alpha_sq * kappa_phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferDisplacement {
    pub lambda: C64,
    pub iterations: usize,
    /// (κ_φ^m + κ₁)/|Δ_eff| at the solution; the lossless form needs ≪ 1.
    pub validity_ratio: f64,
    /// True when the loss term iκ/2 was kept.
    pub lossy: bool,
    pub warning: Option<String>,
}

const VALIDITY_LIMIT: f64 = 0.1;
const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX: usize = 10_000;

/// Steady buffer amplitude λ = e^{2iθ}(−Δ_eff + iκ/2)/(2g₂) with
/// Δ_eff = Δ_m + 2χ_mm|α|² + χ_mb|λ|², θ = arg α and κ = κ_φ^m + κ₁.
/// The loss term is dropped when κ ≪ |Δ_eff| and restored otherwise.
pub fn semiclassical_buffer(delta_m: f64, chi_mm: f64, chi_mb: f64, g2: f64, alpha: C64, kappa_1: f64, kappa_phi_m: f64) -> Result<BufferDisplacement> {
    if g2 == 0.0 {
        return Err(Error::DivByZero("g2"));
    }
    let rot = C64::from_polar(1.0, 2.0 * alpha.arg());
    let kappa = kappa_phi_m + kappa_1;
    let d0 = delta_m + 2.0 * chi_mm * alpha.norm_sqr();
    let solve = |lossy: bool| -> Result<(C64, usize)> {
        let loss = if lossy { kappa / 2.0 } else { 0.0 };
        let map = |l: C64| rot * C64::new(-(d0 + chi_mb * l.norm_sqr()), loss) / (2.0 * g2);
        let mut l = map(C64::new(0.0, 0.0));
        for it in 1..=FIXED_POINT_MAX {
            let next = 0.5 * l + 0.5 * map(l);
            if (next - l).norm() <= FIXED_POINT_TOL * l.norm().max(1.0) {
                return Ok((next, it));
            }
            l = next;
        }
        Err(Error::NonConvergence(FIXED_POINT_MAX))
    };
    let (lambda, iterations) = solve(false)?;
    let d_eff = (d0 + chi_mb * lambda.norm_sqr()).abs();
    let ratio = if kappa == 0.0 { 0.0 } else { kappa / d_eff };
    if ratio <= VALIDITY_LIMIT {
        return Ok(BufferDisplacement { lambda, iterations, validity_ratio: ratio, lossy: false, warning: None });
    }
    let (lambda, iterations) = solve(true)?;
    let d_eff = (d0 + chi_mb * lambda.norm_sqr()).abs();
    Ok(BufferDisplacement {
        lambda,
        iterations,
        validity_ratio: kappa / d_eff,
        lossy: true,
        warning: Some(format!("loss {kappa:.3e} rad/s not small against effective detuning {d_eff:.3e} rad/s; kept the loss term")),
    })
}

/// Largest |Δ_m| that still stabilises a cat: 4|g₂|²|α₀|²/κ_b.
pub fn stabilization_threshold(alpha0_sq: f64, kappa_b: f64, g2: f64) -> Result<f64> {
    if kappa_b <= 0.0 {
        return Err(Error::DivByZero("kappa_b"));
    }
    Ok(4.0 * g2 * g2 * alpha0_sq / kappa_b)
}

/// Smallest |α₀|² that survives detuning Δ_m: |Δ_m|κ_b/(4|g₂|²).
pub fn minimum_photon_number(delta_m: f64, kappa_b: f64, g2: f64) -> Result<f64> {
    if g2 == 0.0 {
        return Err(Error::DivByZero("g2"));
    }
    Ok(delta_m.abs() * kappa_b / (4.0 * g2 * g2))
}

/// |α_Δ|² = |α₀|² − |Δ_m|κ_b/(4|g₂|²).
pub fn detuned_photon_number(alpha0_sq: f64, delta_m: f64, kappa_b: f64, g2: f64) -> Result<f64> {
    let threshold = stabilization_threshold(alpha0_sq, kappa_b, g2)?;
    if delta_m.abs() >= threshold {
        return Err(Error::NoStabilization { threshold });
    }
    Ok(alpha0_sq - minimum_photon_number(delta_m, kappa_b, g2)?)
}

/// Leakage flag from the photon-number picture: no stabilised cat.
pub fn detuning_leaks(alpha0_sq: f64, delta_m: f64, kappa_b: f64, g2: f64) -> Result<bool> {
    match detuned_photon_number(alpha0_sq, delta_m, kappa_b, g2) {
        Ok(_) => Ok(false),
        Err(Error::NoStabilization { .. }) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Leakage flag from the buffer picture: the displacement needed to cancel
/// the detuning exceeds what the buffer drive sustains with the memory
/// empty, 2|ε_d|/κ_b = 2|g₂||α₀|²/κ_b.
pub fn buffer_leaks(lambda: C64, alpha0_sq: f64, kappa_b: f64, g2: f64) -> Result<bool> {
    if kappa_b <= 0.0 {
        return Err(Error::DivByZero("kappa_b"));
    }
    Ok(lambda.norm() >= 2.0 * g2.abs() * alpha0_sq / kappa_b)
}

/// n_th^b = κ_φ^b|λ|²/κ_b.
pub fn buffer_thermal_occupation(kappa_phi_b: f64, kappa_b: f64, lambda: C64) -> Result<f64> {
    if kappa_phi_b < 0.0 || kappa_b < 0.0 {
        return Err(Error::InvalidArgument("rates must be non-negative".into()));
    }
    if kappa_b == 0.0 {
        return Err(Error::DivByZero("kappa_b"));
    }
    Ok(kappa_phi_b * lambda.norm_sqr() / kappa_b)
}

/// Thermal occupation sinh²r left by loss on a buffer squeezed by r.
pub fn squeezing_occupation(r: f64) -> f64 {
    r.sinh().powi(2)
}

/// Measured transmon populations against cat size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmonPopulationTable {
    /// |α|² of each row.
    pub photon_axis: Vec<f64>,
    /// populations[row][state].
    pub populations: Vec<Vec<f64>>,
    /// Population of the hybridized layer per row.
    pub hybridized_mass: Vec<f64>,
}

impl TransmonPopulationTable {
    pub fn new(photon_axis: Vec<f64>, populations: Vec<Vec<f64>>, hybridized_mass: Vec<f64>) -> Result<Self> {
        if populations.len() != photon_axis.len() || hybridized_mass.len() != photon_axis.len() {
            return Err(Error::InvalidArgument("table rows must match the photon axis".into()));
        }
        for (k, row) in populations.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || !(0.0..=1.0).contains(&hybridized_mass[k]) {
                return Err(Error::InvalidArgument(format!("row {k}: populations must lie in [0, 1]")));
            }
            if row.iter().sum::<f64>() > 1.0 + 1e-6 {
                return Err(Error::InvalidArgument(format!("row {k}: populations sum above 1")));
            }
        }
        Ok(Self { photon_axis, populations, hybridized_mass })
    }
}

/// Contribution of dispersively shifted states: shift table rows
/// (n, level, shift in MHz, confidence) and the bit-flip rate T_X⁻¹(Δ) of a
/// cat detuned by Δ (rad/s). Only states with |Δ| < `delta_max` count.
pub struct DetuningContribution<'a> {
    pub shifts: &'a [(usize, usize, f64, f64)],
    pub delta_max: f64,
    pub rate_at: &'a dyn Fn(f64) -> f64,
}

/// Per-row bound T_X ≤ 1/(2γ₁₀ p_hyb + Σ_i p_i T_X⁻¹(Δ_i)); +∞ when nothing
/// limits it.
pub fn transmon_bitflip_bound(table: &TransmonPopulationTable, gamma_1to0: f64, small: Option<&DetuningContribution>) -> Result<Vec<f64>> {
    if !(gamma_1to0 > 0.0) {
        return Err(Error::InvalidArgument("gamma_1to0 must be positive".into()));
    }
    let mut out = Vec::with_capacity(table.photon_axis.len());
    for (k, &n_photons) in table.photon_axis.iter().enumerate() {
        let mut rate = 2.0 * gamma_1to0 * table.hybridized_mass[k];
        if let Some(c) = small {
            let n = n_photons.round() as usize;
            for (level, &p) in table.populations[k].iter().enumerate() {
                if let Some(&(_, _, shift_mhz, _)) = c.shifts.iter().find(|r| r.0 == n && r.1 == level) {
                    let delta = crate::mhz(shift_mhz);
                    if delta.abs() < c.delta_max {
                        rate += p * (c.rate_at)(delta);
                    }
                }
            }
        }
        out.push(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnotCoupling {
    /// 12 g₄ φ_c φ_t² |ξ₀| in rad/s.
    pub g_cnot: f64,
    /// arg(ξ₀) must equal arg(α_c).
    pub required_phase: f64,
    /// arg(ξ₀) − arg(α_c) wrapped to (−π, π].
    pub phase_error: f64,
}

pub fn cnot_coupling(g4: f64, phi_c: f64, phi_t: f64, xi0: C64, alpha_c: C64) -> Result<CnotCoupling> {
    if g4 < 0.0 || phi_c < 0.0 || phi_t < 0.0 {
        return Err(Error::InvalidArgument("g4 and zero-point phases must be non-negative".into()));
    }
    let required = alpha_c.arg();
    let err = (xi0.arg() - required + PI).rem_euclid(std::f64::consts::TAU) - PI;
    Ok(CnotCoupling { g_cnot: 12.0 * g4 * phi_c * phi_t * phi_t * xi0.norm(), required_phase: required, phase_error: err })
}

/// T_g = π/(4|α_c| g_CNOT).
pub fn cnot_gate_time(alpha_c: f64, g_cnot: f64) -> Result<f64> {
    let d = 4.0 * alpha_c.abs() * g_cnot.abs();
    if d == 0.0 {
        return Err(Error::DivByZero("alpha_c g_cnot"));
    }
    Ok(PI / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{khz, mhz, to_mhz};

    #[test]
    fn ramsey_limits() {
        let chi = mhz(0.17);
        assert_eq!(ramsey_signal(3.0, chi, 1e-6, 0.0), 1.0);
        let t = 0.4e-6;
        assert!((ramsey_signal(0.0, chi, 1e-6, t) - (-t / 1e-6f64).exp()).abs() < 1e-15);
        let t_rev = std::f64::consts::TAU / chi;
        assert!((ramsey_signal(2.5, chi, 20e-6, t_rev) - (-t_rev / 20e-6f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn z_rates_at_operating_point() {
        let alpha = C64::new(9.3f64.sqrt(), 0.0);
        let (om, ka) = ideal_z_rates(alpha, C64::new(mhz(1.625), 0.0), khz(14.0), mhz(40.0), mhz(6.0)).unwrap();
        assert!((to_mhz(om) / 19.8 - 1.0).abs() < 3e-3);
        assert!((to_mhz(ka) - (0.2604 + 0.1577)).abs() < 1e-3);
        let (om0, ka0) = ideal_z_rates(alpha, C64::new(0.0, 0.0), khz(14.0), mhz(40.0), mhz(6.0)).unwrap();
        assert_eq!(om0, 0.0);
        assert!((ka0 - 2.0 * khz(14.0) * 9.3).abs() < 1e-6);
        assert_eq!(ideal_z_rates(C64::new(0.0, 0.0), C64::new(1.0, 0.0), 0.0, 1.0, 1.0), Err(Error::DivByZero("alpha")));
        assert_eq!(ideal_z_rates(alpha, C64::new(1.0, 0.0), 0.0, 1.0, 0.0), Err(Error::DivByZero("g2")));
    }

    #[test]
    fn drive_phase_law() {
        // drive term as defined: cats along Im β follow cos θ_z, along Re β sin θ_z
        let eps = C64::new(mhz(1.0), 0.0);
        for k in 0..8 {
            let th = k as f64 * 0.4;
            let on_im = 4.0 * (effective_z_amplitude(eps, th) * C64::new(0.0, 2.0)).re;
            let on_re = 4.0 * (effective_z_amplitude(eps, th) * C64::new(2.0, 0.0)).re;
            assert!((on_im - 8.0 * eps.re * th.cos()).abs() < 1e-6);
            assert!((on_re - 8.0 * eps.re * th.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn fidelities() {
        assert!((gate_fidelity(0.62, 19.8) - 0.95).abs() < 5e-3);
        assert_eq!(gate_fidelity(0.0, 19.8), 1.0);
        assert!(half_pi_fidelity(0.62, 19.8) > gate_fidelity(0.62, 19.8));
        assert_eq!(preparation_infidelity(0.0, 1.0), 0.0);
    }

    #[test]
    fn buffer_displacement() {
        let z = C64::new(1.5, 0.0);
        let none = semiclassical_buffer(0.0, 0.0, 0.0, mhz(6.0), z, 0.0, 0.0).unwrap();
        assert_eq!(none.lambda, C64::new(0.0, 0.0));
        let l = semiclassical_buffer(mhz(30.0), 0.0, 0.0, mhz(6.0), z, 0.0, 0.0).unwrap();
        assert!((l.lambda.norm() - 2.5).abs() < 1e-12);
        let (d, chi) = (mhz(2.0), khz(200.0));
        let exact = -(d + 2.0 * chi * 2.25) / (2.0 * mhz(6.0));
        let k = semiclassical_buffer(d, chi, 0.0, mhz(6.0), z, 0.0, 0.0).unwrap();
        assert_eq!(k.lambda, C64::new(exact, 0.0));
        let sc = semiclassical_buffer(mhz(3.0), chi, mhz(1.6), mhz(6.0), z, khz(14.0), khz(160.0)).unwrap();
        let d_eff = mhz(3.0) + 2.0 * chi * 2.25 + mhz(1.6) * sc.lambda.norm_sqr();
        assert!((sc.lambda.norm() - d_eff / (2.0 * mhz(6.0))).abs() < 1e-8);
        let lossy = semiclassical_buffer(khz(10.0), 0.0, 0.0, mhz(6.0), z, khz(14.0), khz(160.0)).unwrap();
        assert!(lossy.lossy && lossy.warning.is_some() && lossy.lambda.im != 0.0);
        assert_eq!(semiclassical_buffer(1.0, 0.0, 0.0, 0.0, z, 0.0, 0.0).unwrap_err(), Error::DivByZero("g2"));
    }

    #[test]
    fn fixed_point_without_solution() {
        // |λ| = (Δ + χ|λ|²)/2g₂ has no real root for large χ
        let r = semiclassical_buffer(mhz(30.0), 0.0, mhz(50.0), mhz(6.0), C64::new(1.0, 0.0), 0.0, 0.0);
        assert_eq!(r.unwrap_err(), Error::NonConvergence(FIXED_POINT_MAX));
    }

    #[test]
    fn detuned_cat_size() {
        let (kb, g2) = (mhz(40.0), mhz(6.0));
        assert_eq!(detuned_photon_number(5.0, 0.0, kb, g2).unwrap(), 5.0);
        // threshold is 3.6 MHz per photon
        let thr = stabilization_threshold(1.0, kb, g2).unwrap();
        assert!((to_mhz(thr) - 3.6).abs() < 1e-12);
        assert!(detuned_photon_number(8.5, mhz(30.0), kb, g2).is_ok());
        assert!(matches!(detuned_photon_number(8.3, mhz(30.0), kb, g2), Err(Error::NoStabilization { .. })));
        assert!((minimum_photon_number(mhz(30.0), kb, g2).unwrap() - 25.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn thermal_buffer() {
        assert_eq!(buffer_thermal_occupation(mhz(9.6), mhz(40.0), C64::new(0.0, 0.0)).unwrap(), 0.0);
        let l = C64::new(1.3, -0.4);
        assert!((buffer_thermal_occupation(mhz(9.6), mhz(40.0), l).unwrap() - 0.24 * l.norm_sqr()).abs() < 1e-12);
        assert_eq!(squeezing_occupation(0.0), 0.0);
    }

    #[test]
    fn transmon_bound() {
        let g10 = 1.0 / 18e-6;
        let t = TransmonPopulationTable::new(vec![4.0, 10.0, 20.0], vec![vec![0.9, 0.05]; 3], vec![0.0, 1e-4, 1e-3]).unwrap();
        let b = transmon_bitflip_bound(&t, g10, None).unwrap();
        assert!(b[0].is_infinite());
        assert!((b[1] - 0.09).abs() < 1e-12);
        assert!(b[2] < b[1]);
        assert!(TransmonPopulationTable::new(vec![1.0], vec![vec![0.7, 0.4]], vec![0.0]).is_err());
        let shifts = [(10usize, 1usize, 0.17, 1.0), (20, 1, 0.17, 1.0)];
        let rate = |_d: f64| 10.0;
        let c = DetuningContribution { shifts: &shifts, delta_max: mhz(1.0), rate_at: &rate };
        let b2 = transmon_bitflip_bound(&t, g10, Some(&c)).unwrap();
        assert!((1.0 / b2[1] - 1.0 / b[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn cnot_numbers() {
        assert_eq!(cnot_coupling(0.0, 0.1, 0.2, C64::new(1.0, 0.0), C64::new(2.0, 0.0)).unwrap().g_cnot, 0.0);
        let a = cnot_coupling(mhz(1.0), 0.1, 0.2, C64::new(0.5, 0.0), C64::new(2.0, 0.0)).unwrap();
        let b = cnot_coupling(mhz(1.0), 0.1, 0.2, C64::new(1.0, 0.0), C64::new(2.0, 0.0)).unwrap();
        assert!((b.g_cnot - 2.0 * a.g_cnot).abs() < 1e-9 && a.phase_error == 0.0);
        assert!((cnot_gate_time(2.0, mhz(1.0)).unwrap() - 62.5e-9).abs() < 1e-18);
    }
}
