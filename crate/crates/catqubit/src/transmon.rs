//! Charge-basis transmon and the coupled memory–readout–transmon spectrum.
//!
//! Energies are ordinary frequencies in GHz unless stated; the coupled
//! `CoupledSpec` takes angular frequencies (rad/s) like the rest of the crate.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CMatrix, C64};

const CONVERGENCE_GHZ: f64 = 1e-6;
const CHECKED_LEVELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    /// E_C/h in GHz.
    pub e_c: f64,
    /// E_J/h in GHz.
    pub e_j: f64,
    pub n_g: f64,
    /// Charge states −N..=N.
    pub charge_cutoff: usize,
}

impl TransmonParams {
    pub fn new(e_c: f64, e_j: f64) -> Self {
        Self { e_c, e_j, n_g: 0.0, charge_cutoff: 20 }
    }

    fn validate(&self) -> Result<()> {
        if self.charge_cutoff < 10 {
            return Err(Error::InvalidArgument(format!("charge cutoff {} below 10", self.charge_cutoff)));
        }
        if !(self.e_c > 0.0) || !(self.e_j >= 0.0) {
            return Err(Error::InvalidArgument("E_C must be positive and E_J non-negative".into()));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        2 * self.charge_cutoff + 1
    }

    /// 4E_C(n − n_g)² − (E_J/2)(|n⟩⟨n+1| + h.c.).
    fn hamiltonian(&self, cutoff: usize) -> DMatrix<f64> {
        let d = 2 * cutoff + 1;
        let mut h = DMatrix::zeros(d, d);
        for k in 0..d {
            let n = k as f64 - cutoff as f64;
            h[(k, k)] = 4.0 * self.e_c * (n - self.n_g).powi(2);
            if k + 1 < d {
                h[(k, k + 1)] = -self.e_j / 2.0;
                h[(k + 1, k)] = -self.e_j / 2.0;
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmonSpectrum {
    /// Sorted eigenvalues (GHz).
    pub levels: Vec<f64>,
    /// Eigenvectors in the charge basis, one column per level.
    pub vectors: DMatrix<f64>,
    pub cutoff: usize,
}

impl TransmonSpectrum {
    pub fn omega_01(&self) -> f64 {
        self.levels[1] - self.levels[0]
    }

    /// ω₁₂ − ω₀₁ (GHz).
    pub fn anharmonicity(&self) -> f64 {
        self.levels[2] - 2.0 * self.levels[1] + self.levels[0]
    }

    /// Matrix elements ⟨k|n̂|l⟩ over the lowest `count` levels.
    pub fn charge_elements(&self, count: usize) -> DMatrix<f64> {
        let v = self.vectors.columns(0, count);
        let n = DVector::from_iterator(self.vectors.nrows(), (0..self.vectors.nrows()).map(|k| k as f64 - self.cutoff as f64));
        v.transpose() * DMatrix::from_diagonal(&n) * v
    }

    /// ⟨k|sin θ̂|l⟩, with sin θ̂ = (S − S†)/2i and S|n⟩ = |n+1⟩.
    pub fn sin_elements(&self, count: usize) -> CMatrix {
        let d = self.vectors.nrows();
        let v = self.vectors.columns(0, count);
        // (S − S†)/2i = −(i/2)(S − S†); real antisymmetric part A = S − S†
        let mut a = DMatrix::<f64>::zeros(d, d);
        for k in 0..d - 1 {
            a[(k + 1, k)] = 1.0;
            a[(k, k + 1)] = -1.0;
        }
        let r = v.transpose() * a * v;
        r.map(|x| C64::new(0.0, -0.5 * x))
    }
}

fn sorted_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&k| e.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(e.eigenvectors.nrows(), idx.len());
    for (c, &k) in idx.iter().enumerate() {
        let mut col = e.eigenvectors.column(k).into_owned();
        // fix the sign so the largest component is positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        vecs.set_column(c, &col);
    }
    (vals, vecs)
}

/// Transmon levels; the lowest ten must move by less than 1 kHz when the
/// cutoff grows by five.
pub fn transmon_spectrum(params: &TransmonParams) -> Result<TransmonSpectrum> {
    params.validate()?;
    let (levels, vectors) = sorted_eigen(params.hamiltonian(params.charge_cutoff));
    let (bigger, _) = sorted_eigen(params.hamiltonian(params.charge_cutoff + 5));
    let k = CHECKED_LEVELS.min(params.dim());
    let worst = (0..k).map(|i| (levels[i] - bigger[i]).abs()).fold(0.0, f64::max);
    if worst > CONVERGENCE_GHZ {
        return Err(Error::Convergence(format!("charge cutoff {} not converged: levels move {worst:.3e} GHz", params.charge_cutoff)));
    }
    Ok(TransmonSpectrum { levels, vectors, cutoff: params.charge_cutoff })
}

/// Coupled memory–readout–transmon problem. Frequencies and couplings in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledSpec {
    pub transmon: TransmonParams,
    pub omega_m: f64,
    pub omega_c: f64,
    pub g_mt: f64,
    pub g_ct: f64,
    /// (memory, readout) Fock dimensions.
    pub fock_dims: (usize, usize),
    /// Transmon eigenlevels kept.
    pub transmon_levels: usize,
    pub dim_cap: usize,
}

impl CoupledSpec {
    pub fn new(transmon: TransmonParams, omega_m: f64, omega_c: f64, g_mt: f64, g_ct: f64, fock_dims: (usize, usize)) -> Self {
        Self { transmon, omega_m, omega_c, g_mt, g_ct, fock_dims, transmon_levels: 10, dim_cap: 6000 }
    }

    pub fn total_dim(&self) -> usize {
        self.fock_dims.0 * self.fock_dims.1 * self.transmon_levels
    }
}

/// (memory photons, readout photons, transmon level).
pub type Label = (usize, usize, usize);

#[derive(Debug, Clone)]
pub struct CoupledSpectrum {
    /// Ascending eigenvalues (GHz), measured from the bare transmon ground level.
    pub energies: Vec<f64>,
    pub labels: Vec<Label>,
    /// Largest product-state weight |⟨label|ψ⟩|² of each eigenstate.
    pub confidence: Vec<f64>,
    /// Labels claimed by more than one eigenstate.
    pub collisions: Vec<Label>,
    pub vectors: CMatrix,
    index: HashMap<Label, Vec<usize>>,
    dims: (usize, usize, usize),
}

impl CoupledSpectrum {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Energy (GHz) of the unique eigenstate carrying `label`.
    pub fn energy(&self, label: Label) -> Result<f64> {
        match self.index.get(&label).map(|v| v.as_slice()) {
            Some([k]) => Ok(self.energies[*k]),
            Some(v) => Err(Error::LabelAmbiguity(format!("{label:?} claimed by {} eigenstates", v.len()))),
            None => Err(Error::LabelAmbiguity(format!("{label:?} not found among eigenstates"))),
        }
    }

    pub fn confidence_of(&self, label: Label) -> Result<f64> {
        self.energy(label)?;
        Ok(self.confidence[self.index[&label][0]])
    }

    /// Dressed memory frequency E(1,0,0) − E(0,0,0) in GHz.
    pub fn dressed_memory(&self) -> Result<f64> {
        Ok(self.energy((1, 0, 0))? - self.energy((0, 0, 0))?)
    }

    /// [E(n+1, 0, i) − E(n, 0, i)] − dressed ω_m, in rad/s.
    pub fn memory_shift(&self, level: usize, n: usize) -> Result<f64> {
        let d = self.energy((n + 1, 0, level))? - self.energy((n, 0, level))?;
        Ok(crate::ghz(d - self.dressed_memory()?))
    }

    /// Memory frequency shift for transmon |1⟩ at zero photons, rad/s.
    pub fn dispersive_shift(&self) -> Result<f64> {
        self.memory_shift(1, 0)
    }
}

fn to_ghz(w: f64) -> f64 {
    w / crate::TAU / 1e9
}

/// Hamiltonian in the (memory, readout, transmon-eigenstate) product basis,
/// GHz: ω_m m†m + ω_c c†c + Σ E_k|k⟩⟨k| + g_mt sin θ̂(m + m†) − i g_ct n̂(c − c†).
pub fn coupled_hamiltonian(spec: &CoupledSpec, tr: &TransmonSpectrum) -> Result<CMatrix> {
    let (nm, nc) = spec.fock_dims;
    let nt = spec.transmon_levels;
    if nm < 2 || nc < 2 || nt < 2 || nt > tr.levels.len() {
        return Err(Error::InvalidArgument("coupled dims must be at least 2 and within the transmon basis".into()));
    }
    let d = nm * nc * nt;
    if d > spec.dim_cap {
        return Err(Error::DimensionCap { dim: d, cap: spec.dim_cap });
    }
    let (wm, wc, gm, gc) = (to_ghz(spec.omega_m), to_ghz(spec.omega_c), to_ghz(spec.g_mt), to_ghz(spec.g_ct));
    let sin = tr.sin_elements(nt);
    let chg = tr.charge_elements(nt);
    let idx = |im: usize, ic: usize, it: usize| (im * nc + ic) * nt + it;
    let mut h = CMatrix::zeros(d, d);
    for im in 0..nm {
        for ic in 0..nc {
            for k in 0..nt {
                let r = idx(im, ic, k);
                h[(r, r)] = C64::new(wm * im as f64 + wc * ic as f64 + tr.levels[k] - tr.levels[0], 0.0);
                for l in 0..nt {
                    // m + m†: ⟨im+1|m†|im⟩ = √(im+1)
                    if im + 1 < nm {
                        let v = sin[(k, l)] * (gm * ((im + 1) as f64).sqrt());
                        // row (im+1, k), column (im, l) and its conjugate
                        h[(idx(im + 1, ic, k), idx(im, ic, l))] += v;
                        h[(idx(im, ic, l), idx(im + 1, ic, k))] += v.conj();
                    }
                    // −i(c − c†): ⟨ic+1|·|ic⟩ = +i√(ic+1)
                    if ic + 1 < nc {
                        let v = C64::new(0.0, gc * chg[(k, l)] * ((ic + 1) as f64).sqrt());
                        h[(idx(im, ic + 1, k), idx(im, ic, l))] += v;
                        h[(idx(im, ic, l), idx(im, ic + 1, k))] += v.conj();
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Diagonalise the coupled Hamiltonian and label eigenstates by their
/// dominant product state.
pub fn coupled_spectrum(spec: &CoupledSpec) -> Result<CoupledSpectrum> {
    let tr = transmon_spectrum(&spec.transmon)?;
    let h = coupled_hamiltonian(spec, &tr)?;
    let (nm, nc) = spec.fock_dims;
    let nt = spec.transmon_levels;
    let e = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let d = order.len();
    let mut vectors = CMatrix::zeros(d, d);
    let mut energies = Vec::with_capacity(d);
    let mut labels = Vec::with_capacity(d);
    let mut confidence = Vec::with_capacity(d);
    let mut index: HashMap<Label, Vec<usize>> = HashMap::new();
    for (c, &k) in order.iter().enumerate() {
        let col = e.eigenvectors.column(k);
        vectors.set_column(c, &col);
        energies.push(e.eigenvalues[k]);
        let (best, w) = col.iter().enumerate().map(|(i, z)| (i, z.norm_sqr())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        let label = (best / (nc * nt), (best / nt) % nc, best % nt);
        labels.push(label);
        confidence.push(w);
        index.entry(label).or_default().push(c);
    }
    let mut collisions: Vec<Label> = index.iter().filter(|(_, v)| v.len() > 1).map(|(l, _)| *l).collect();
    collisions.sort();
    Ok(CoupledSpectrum { energies, labels, confidence, collisions, vectors, index, dims: (nm, nc, nt) })
}

/// Δ_i(n) in rad/s; see [`CoupledSpectrum::memory_shift`].
pub fn memory_shift(spec: &CoupledSpec, level: usize, n: usize) -> Result<f64> {
    coupled_spectrum(spec)?.memory_shift(level, n)
}

/// Transmon transition k → k+1 closest to the memory frequency:
/// (k, ω_{k,k+1} − ω_m in rad/s).
pub fn nearest_resonance(tr: &TransmonSpectrum, omega_m: f64, max_level: usize) -> (usize, f64) {
    let wm = to_ghz(omega_m);
    (0..max_level.min(tr.levels.len() - 1))
        .map(|k| (k, crate::ghz(tr.levels[k + 1] - tr.levels[k] - wm)))
        .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .unwrap_or((0, f64::NAN))
}

/// Eigenvalues along a sweep of g_mt, each state followed by maximum overlap
/// with its predecessor. Row k holds the energies at `g_values[k]` in the
/// order fixed by the first point.
pub fn track_over_coupling(spec: &CoupledSpec, g_values: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(g_values.len());
    let mut prev: Option<CMatrix> = None;
    for &g in g_values {
        let s = coupled_spectrum(&CoupledSpec { g_mt: g, ..*spec })?;
        let row = match &prev {
            None => {
                prev = Some(s.vectors.clone());
                s.energies.clone()
            }
            Some(p) => {
                let ov = p.adjoint() * &s.vectors;
                let d = s.energies.len();
                let mut taken = vec![false; d];
                let mut next = CMatrix::zeros(d, d);
                let mut row = vec![0.0; d];
                for a in 0..d {
                    let b = (0..d).filter(|&b| !taken[b]).max_by(|&x, &y| ov[(a, x)].norm().partial_cmp(&ov[(a, y)].norm()).unwrap()).unwrap();
                    taken[b] = true;
                    row[a] = s.energies[b];
                    next.set_column(a, &s.vectors.column(b));
                }
                prev = Some(next);
                row
            }
        };
        out.push(row);
    }
    Ok(out)
}

pub const SHIFT_CSV_HEADER: &str = "n_photons,transmon_level,shift_MHz,label_confidence";

/// Shift table over photon numbers 0..n_max and transmon levels 0..levels.
/// Entries whose labels cannot be resolved are skipped.
pub fn shift_table(spectrum: &CoupledSpectrum, levels: usize, n_max: usize) -> Vec<(usize, usize, f64, f64)> {
    let mut rows = Vec::new();
    for i in 0..levels {
        for n in 0..=n_max {
            if let (Ok(s), Ok(c1), Ok(c2)) = (spectrum.memory_shift(i, n), spectrum.confidence_of((n, 0, i)), spectrum.confidence_of((n + 1, 0, i))) {
                rows.push((n, i, crate::to_mhz(s), c1.min(c2)));
            }
        }
    }
    rows
}

pub fn write_shift_csv(w: &mut impl Write, rows: &[(usize, usize, f64, f64)]) -> std::io::Result<()> {
    writeln!(w, "{SHIFT_CSV_HEADER}")?;
    for (n, i, s, c) in rows {
        writeln!(w, "{n},{i},{s:.9},{c:.6}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> TransmonParams {
        TransmonParams::new(0.1694, 22.85)
    }

    #[test]
    fn device_transmon_frequency_and_anharmonicity() {
        let s = transmon_spectrum(&device()).unwrap();
        assert!((s.omega_01() - 5.387).abs() < 0.005 * 5.387, "{}", s.omega_01());
        assert!((s.anharmonicity() * 1e3 + 181.0).abs() < 0.05 * 181.0, "{}", s.anharmonicity());
    }

    #[test]
    fn free_charge_limit() {
        let p = TransmonParams { e_j: 0.0, n_g: 0.2, ..device() };
        let s = transmon_spectrum(&p).unwrap();
        let mut want: Vec<f64> = (-20i32..=20).map(|n| 4.0 * p.e_c * (n as f64 - 0.2).powi(2)).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in 0..10 {
            assert!((s.levels[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_charge_periodicity_and_dispersion() {
        let a = transmon_spectrum(&TransmonParams { n_g: 0.3, ..device() }).unwrap();
        let b = transmon_spectrum(&TransmonParams { n_g: 1.3, ..device() }).unwrap();
        assert!((a.levels[3] - b.levels[3]).abs() < 1e-9);
        let g0 = transmon_spectrum(&TransmonParams { n_g: 0.0, ..device() }).unwrap();
        let g5 = transmon_spectrum(&TransmonParams { n_g: 0.5, ..device() }).unwrap();
        assert!((g0.levels[0] - g5.levels[0]).abs() < 1e-6);
    }

    #[test]
    fn small_cutoff_rejected() {
        let p = TransmonParams { charge_cutoff: 5, ..device() };
        assert!(transmon_spectrum(&p).is_err());
    }

    #[test]
    fn uncoupled_levels_are_sums() {
        let spec = CoupledSpec::new(device(), crate::ghz(3.948), crate::ghz(6.967), 0.0, 0.0, (3, 2));
        let s = coupled_spectrum(&spec).unwrap();
        let tr = transmon_spectrum(&device()).unwrap();
        let want = 2.0 * 3.948 + 6.967 + tr.levels[2] - tr.levels[0];
        assert!((s.energy((2, 1, 2)).unwrap() - want).abs() < 1e-9);
        assert!(s.memory_shift(3, 0).unwrap().abs() < 1e-3);
    }

    #[test]
    fn dimension_cap() {
        let spec = CoupledSpec { dim_cap: 10, ..CoupledSpec::new(device(), 1.0, 1.0, 0.0, 0.0, (3, 2)) };
        assert!(matches!(coupled_spectrum(&spec), Err(Error::DimensionCap { .. })));
    }
}
