//! Wigner functions: displaced-parity evaluation of density matrices, closed
//! forms for Fock, thermal and cat states, and grid-based estimators.

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{QuantumState, Repr, C64};
use crate::par::Exec;

/// W(β) sampled on a rectangular grid; `values[(i, j)]` sits at
/// β = re[i] + i·im[j].
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub values: DMatrix<f64>,
}

/// Symmetric axis of `n` points on [−half_width, half_width].
pub fn axis(half_width: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64).collect()
}

/// Default grid axis for a state of amplitude `alpha`: |β| ≤ |α| + 3, 161 points.
pub fn default_axis(alpha: f64) -> Vec<f64> {
    axis(alpha.abs() + 3.0, 161)
}

fn spacing(a: &[f64]) -> f64 {
    if a.len() < 2 { 1.0 } else { (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64 }
}

impl WignerGrid {
    pub fn from_fn(re: &[f64], im: &[f64], exec: Exec, f: impl Fn(C64) -> f64 + Sync + Send) -> Self {
        let (nr, ni) = (re.len(), im.len());
        let flat = exec.map_range(nr * ni, |k| f(C64::new(re[k / ni], im[k % ni])));
        let values = DMatrix::from_row_iterator(nr, ni, flat);
        Self { re: re.to_vec(), im: im.to_vec(), values }
    }

    pub fn cell_area(&self) -> f64 {
        spacing(&self.re) * spacing(&self.im)
    }

    /// ∫ W d²β by the rectangle rule.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.cell_area()
    }

    /// ∫ W g(β) d²β.
    pub fn moment(&self, g: impl Fn(C64) -> C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (i, &x) in self.re.iter().enumerate() {
            for (j, &y) in self.im.iter().enumerate() {
                acc += g(C64::new(x, y)) * self.values[(i, j)];
            }
        }
        acc * self.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    pub fn boundary_max(&self) -> f64 {
        let (nr, ni) = self.values.shape();
        let mut m = 0.0f64;
        for i in 0..nr {
            m = m.max(self.values[(i, 0)].abs()).max(self.values[(i, ni - 1)].abs());
        }
        for j in 0..ni {
            m = m.max(self.values[(0, j)].abs()).max(self.values[(nr - 1, j)].abs());
        }
        m
    }

    /// True when the boundary carries less than 1e−4 of the peak.
    pub fn covers_support(&self) -> bool {
        self.boundary_max() <= 1e-4 * self.max_abs()
    }

    fn nearest(axis: &[f64], v: f64) -> usize {
        axis.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - v).abs().partial_cmp(&(b.1 - v).abs()).unwrap())
            .map(|(k, _)| k)
            .unwrap_or(0)
    }

    /// Value at the grid point nearest β.
    pub fn value_near(&self, beta: C64) -> f64 {
        self.values[(Self::nearest(&self.re, beta.re), Self::nearest(&self.im, beta.im))]
    }

    /// Supremum distance to another grid on the same axes.
    pub fn sup_distance(&self, other: &WignerGrid) -> f64 {
        (&self.values - &other.values).amax()
    }

    /// Σ|W − W'| dA.
    pub fn l1_distance(&self, other: &WignerGrid) -> f64 {
        (&self.values - &other.values).iter().map(|v| v.abs()).sum::<f64>() * self.cell_area()
    }
}

/// ln(n!) for n ≤ a few hundred by direct summation.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n + 1];
    for k in 1..=n {
        v[k] = v[k - 1] + (k as f64).ln();
    }
    v
}

/// Matrix elements ⟨m|D(γ)|n⟩ of the untruncated displacement for m, n < dim,
/// from associated Laguerre polynomials.
pub fn displacement_elements(dim: usize, gamma: C64, lnf: &[f64]) -> DMatrix<C64> {
    let x = gamma.norm_sqr();
    let mut d = DMatrix::<C64>::zeros(dim, dim);
    let (r, phase) = gamma.to_polar();
    for k in 0..dim {
        // m = n + k, L_n^{(k)}(x) for n = 0..dim−k
        let mut l_prev = 0.0;
        let mut l = 1.0;
        for n in 0..dim - k {
            if n == 1 {
                l_prev = 1.0;
                l = 1.0 + k as f64 - x;
            } else if n > 1 {
                let nf = (n - 1) as f64;
                let next = ((2.0 * nf + 1.0 + k as f64 - x) * l - (nf + k as f64) * l_prev) / (nf + 1.0);
                l_prev = l;
                l = next;
            }
            let m = n + k;
            let ln_mag = 0.5 * (lnf[n] - lnf[m]) + if k > 0 { k as f64 * r.ln() } else { 0.0 } - x / 2.0;
            let mag = ln_mag.exp() * l;
            // ⟨m|D|n⟩ = √(n!/m!) γ^k e^{−x/2} L, ⟨n|D|m⟩ = √(n!/m!) (−γ*)^k e^{−x/2} L
            d[(m, n)] = C64::from_polar(1.0, k as f64 * phase) * mag;
            if k > 0 {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                d[(n, m)] = C64::from_polar(1.0, -(k as f64) * phase) * (sign * mag);
            }
        }
    }
    d
}

const TOP_POPULATION_TOL: f64 = 1e-8;

/// W(β) = (2/π) Tr[D(−β) ρ D(β) P] on the grid.
pub fn wigner_numeric(rho: &QuantumState, re: &[f64], im: &[f64], exec: Exec) -> Result<WignerGrid> {
    if rho.space().n_modes() != 1 {
        return Err(Error::SpaceMismatch("Wigner function needs a single-mode state".into()));
    }
    let dim = rho.space().total();
    let top = rho.population(dim - 1) + rho.population(dim - 2);
    if top > TOP_POPULATION_TOL {
        let bmax = re.iter().map(|x| x.abs()).fold(0.0, f64::max).hypot(im.iter().map(|y| y.abs()).fold(0.0, f64::max));
        return Err(Error::Truncation { needed: crate::fock::adequate_dim(bmax).max(dim + 1), dim });
    }
    let m = match rho.repr() {
        Repr::Mixed(m) => m.clone(),
        Repr::Pure(_) => rho.density(),
    };
    // fold the parity sign into the density matrix: ρ'_{mn} = ρ_{mn}(−1)^m
    let mut mp = m;
    for i in (1..dim).step_by(2) {
        for j in 0..dim {
            mp[(i, j)] = -mp[(i, j)];
        }
    }
    let lnf = ln_factorials(dim);
    Ok(WignerGrid::from_fn(re, im, exec, |beta| {
        let d = displacement_elements(dim, beta * 2.0, &lnf);
        let mut acc = 0.0;
        for mi in 0..dim {
            for ni in 0..dim {
                // Re[ρ'_{mn} D_{nm}]
                let a = mp[(mi, ni)];
                let b = d[(ni, mi)];
                acc += a.re * b.re - a.im * b.im;
            }
        }
        FRAC_2_PI * acc
    }))
}

/// (2/π) / (1 + 2n) · exp(−2|β|²/(1 + 2n)).
pub fn wigner_thermal(n_th: f64, beta: C64) -> f64 {
    let s = 1.0 + 2.0 * n_th;
    FRAC_2_PI / s * (-2.0 * beta.norm_sqr() / s).exp()
}

/// L_n(x) by the three-term recurrence.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 1.0 - x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let kf = k as f64;
        let c = ((2.0 * kf + 1.0 - x) * b - kf * a) / (kf + 1.0);
        a = b;
        b = c;
    }
    b
}

/// (−1)ⁿ (2/π) e^{−2|β|²} L_n(4|β|²).
pub fn wigner_fock(n: usize, beta: C64) -> f64 {
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let r2 = beta.norm_sqr();
    sign * FRAC_2_PI * (-2.0 * r2).exp() * laguerre(n, 4.0 * r2)
}

/// Cat state (|α⟩ ± |−α⟩)/√N with the exact normalization N = 2(1 ± e^{−2|α|²}).
pub fn wigner_cat(alpha: C64, even: bool, beta: C64) -> f64 {
    let s = if even { 1.0 } else { -1.0 };
    let overlap = (-2.0 * alpha.norm_sqr()).exp();
    let lobes = (-2.0 * (beta - alpha).norm_sqr()).exp() + (-2.0 * (beta + alpha).norm_sqr()).exp();
    let fringe = 2.0 * (4.0 * (alpha.conj() * beta).im).cos() * (-2.0 * beta.norm_sqr()).exp();
    (lobes + s * fringe) / (PI * (1.0 + s * overlap))
}

/// W(0) = (2/π)⟨P⟩ straight from the Fock populations.
pub fn parity_point(rho: &QuantumState) -> Result<f64> {
    if rho.space().n_modes() != 1 {
        return Err(Error::SpaceMismatch("parity_point needs a single-mode state".into()));
    }
    let dim = rho.space().total();
    let p: f64 = (0..dim).map(|k| if k % 2 == 0 { rho.population(k) } else { -rho.population(k) }).sum();
    Ok(FRAC_2_PI * p)
}

/// μ = √(π/(δV_α δV_I)).
pub fn fringe_calibration(dv_alpha: f64, dv_i: f64) -> Result<f64> {
    if !(dv_alpha > 0.0 && dv_i > 0.0) {
        return Err(Error::InvalidArgument("voltage spacings must be positive".into()));
    }
    Ok((PI / (dv_alpha * dv_i)).sqrt())
}

/// A grid estimate with a flag raised when the grid clips the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridEstimate {
    pub value: f64,
    pub coverage_warning: bool,
}

/// n̄ = ∫ W |β|² d²β − 1/2.
pub fn photon_number_from_grid(grid: &WignerGrid) -> GridEstimate {
    let v = grid.moment(|b| C64::new(b.norm_sqr(), 0.0)).re - 0.5;
    GridEstimate { value: v, coverage_warning: !grid.covers_support() }
}

/// ∫ W β² d²β, which equals ⟨m²⟩.
pub fn second_moment(grid: &WignerGrid) -> C64 {
    grid.moment(|b| b * b)
}

/// Fringe period along Im β through Re β = 0. The cut is multiplied by
/// e^{2y²} and fitted to c₀ + c₁cos ky + c₂sin ky by a scan over k with the
/// c's solved linearly; the result is 2π/k.
pub fn fringe_period(grid: &WignerGrid) -> Result<f64> {
    let i0 = WignerGrid::nearest(&grid.re, 0.0);
    let window = 1.8;
    let pts: Vec<(f64, f64)> = grid
        .im
        .iter()
        .enumerate()
        .filter(|(_, y)| y.abs() <= window)
        .map(|(j, &y)| (y, grid.values[(i0, j)] * (2.0 * y * y).exp()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::NoOscillation("too few points on the central cut".into()));
    }
    let resid = |k: f64| -> f64 {
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for &(y, w) in &pts {
            let row = nalgebra::Vector3::new(1.0, (k * y).cos(), (k * y).sin());
            ata += row * row.transpose();
            atb += row * w;
        }
        let c = match ata.lu().solve(&atb) {
            Some(c) => c,
            None => return f64::INFINITY,
        };
        pts.iter()
            .map(|&(y, w)| (w - c[0] - c[1] * (k * y).cos() - c[2] * (k * y).sin()).powi(2))
            .sum()
    };
    let dy = spacing(&grid.im);
    let (kmin, kmax) = (PI / window, 0.5 * PI / dy);
    let n = 2000;
    let mut best = (f64::INFINITY, kmin);
    for s in 0..=n {
        let k = kmin + (kmax - kmin) * s as f64 / n as f64;
        let r = resid(k);
        if r < best.0 {
            best = (r, k);
        }
    }
    let step = (kmax - kmin) / n as f64;
    let k = crate::optimize::golden_section(resid, best.1 - step, best.1 + step, 1e-12 * best.1, 200).0;
    Ok(2.0 * PI / k)
}

pub const GRID_CSV_HEADER: &str = "re,im,W";

impl WignerGrid {
    /// One row per grid point, Re β outermost.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{GRID_CSV_HEADER}")?;
        for (i, x) in self.re.iter().enumerate() {
            for (j, y) in self.im.iter().enumerate() {
                writeln!(w, "{x:.10},{y:.10},{:.12e}", self.values[(i, j)])?;
            }
        }
        Ok(())
    }

    pub fn read_csv(r: impl std::io::BufRead) -> Result<Self> {
        let bad = |m: String| Error::InvalidArgument(format!("grid csv: {m}"));
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if k == 0 {
                if line.trim() != GRID_CSV_HEADER {
                    return Err(bad(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(e.to_string()))?;
            if f.len() != 3 {
                return Err(bad(format!("line {} has {} fields", k + 1, f.len())));
            }
            rows.push((f[0], f[1], f[2]));
        }
        let mut re: Vec<f64> = Vec::new();
        for r in &rows {
            if re.last() != Some(&r.0) {
                re.push(r.0);
            }
        }
        if re.is_empty() || rows.len() % re.len() != 0 {
            return Err(bad("ragged grid".into()));
        }
        let ni = rows.len() / re.len();
        let im: Vec<f64> = rows[..ni].iter().map(|r| r.1).collect();
        let values = DMatrix::from_row_iterator(re.len(), ni, rows.iter().map(|r| r.2));
        Ok(Self { re, im, values })
    }

    /// Three arrays in the shared binary layout: Re axis, Im axis, values.
    pub fn write_binary(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        use crate::io::{write_array, BinaryArray, Payload};
        write_array(w, &BinaryArray { dims: vec![self.re.len()], payload: Payload::Real(self.re.clone()) })?;
        write_array(w, &BinaryArray { dims: vec![self.im.len()], payload: Payload::Real(self.im.clone()) })?;
        let (nr, ni) = self.values.shape();
        let flat: Vec<f64> = (0..nr * ni).map(|k| self.values[(k / ni, k % ni)]).collect();
        write_array(w, &BinaryArray { dims: vec![nr, ni], payload: Payload::Real(flat) })
    }

    pub fn read_binary(r: &mut impl std::io::Read) -> Result<Self> {
        use crate::io::{read_array, Payload};
        let mut real = || -> Result<(Vec<usize>, Vec<f64>)> {
            let a = read_array(r).map_err(|e| Error::InvalidArgument(format!("grid dump: {e}")))?;
            match a.payload {
                Payload::Real(v) => Ok((a.dims, v)),
                Payload::Complex(_) => Err(Error::InvalidArgument("grid dump holds complex data".into())),
            }
        };
        let (_, re) = real()?;
        let (_, im) = real()?;
        let (dims, v) = real()?;
        if dims != [re.len(), im.len()] {
            return Err(Error::InvalidArgument("grid dump extents disagree with axes".into()));
        }
        Ok(Self { values: DMatrix::from_row_slice(re.len(), im.len(), &v), re, im })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{cat_state, coherent_state, fock_state, thermal_state, ModeSpace};

    #[test]
    fn displacement_elements_match_expm() {
        let s = ModeSpace::new(40).unwrap();
        let g = C64::new(1.3, -0.9);
        let lnf = ln_factorials(40);
        let d = displacement_elements(40, g, &lnf);
        let exact = crate::fock::displacement(s, g).unwrap();
        // compare on the block untouched by truncation
        let blk = 15;
        let diff = (d.view((0, 0), (blk, blk)) - exact.matrix().view((0, 0), (blk, blk))).camax();
        assert!(diff < 1e-10, "diff {diff}");
    }

    #[test]
    fn vacuum_and_fock_origin() {
        let s = ModeSpace::new(10).unwrap();
        let ax = [0.0];
        let w0 = wigner_numeric(&fock_state(s, 0).unwrap(), &ax, &ax, Exec::Sequential).unwrap();
        assert!((w0.values[(0, 0)] - FRAC_2_PI).abs() < 1e-12);
        let w1 = wigner_numeric(&fock_state(s, 1).unwrap(), &ax, &ax, Exec::Sequential).unwrap();
        assert!((w1.values[(0, 0)] + FRAC_2_PI).abs() < 1e-12);
        assert_eq!(wigner_fock(1, C64::new(0.0, 0.0)), -FRAC_2_PI);
    }

    #[test]
    fn coherent_peak_location() {
        let s = ModeSpace::new(30).unwrap();
        let a = C64::new(1.5, 0.5);
        let st = coherent_state(s, a).unwrap();
        let g = wigner_numeric(&st, &[1.5], &[0.5], Exec::Sequential).unwrap();
        assert!((g.values[(0, 0)] - FRAC_2_PI).abs() < 1e-9);
    }

    #[test]
    fn thermal_closed_forms() {
        assert_eq!(wigner_thermal(0.0, C64::new(0.0, 0.0)), FRAC_2_PI);
        assert!((wigner_thermal(0.01, C64::new(0.0, 0.0)) - 0.6241).abs() < 1e-3);
        let sigma = (1.0f64 + 2.0 * 0.5).sqrt() / 2.0;
        assert!((sigma - 0.7071).abs() < 1e-4);
        let b = C64::new(sigma, 0.0);
        let ratio = wigner_thermal(0.5, b) / wigner_thermal(0.5, C64::new(0.0, 0.0));
        assert!((ratio - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn cat_closed_form_limits() {
        let a = C64::new(3.0, 0.0);
        assert!((wigner_cat(a, true, a) - 1.0 / PI).abs() < 1e-6);
        assert!((wigner_cat(a, true, C64::new(0.0, 0.0)) - FRAC_2_PI).abs() < 1e-6);
        let small = C64::new(0.3, 0.0);
        let ax = axis(5.0, 201);
        let g = WignerGrid::from_fn(&ax, &ax, Exec::Sequential, |b| wigner_cat(small, false, b));
        assert!((g.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn thermal_grid_and_wigner_bound() {
        let s = ModeSpace::new(60).unwrap();
        let ax = axis(3.0, 41);
        for &n in &[0.1, 0.5, 1.0] {
            let g = wigner_numeric(&thermal_state(s, n).unwrap(), &ax, &ax, Exec::Sequential).unwrap();
            let exact = WignerGrid::from_fn(&ax, &ax, Exec::Sequential, |b| wigner_thermal(n, b));
            assert!(g.sup_distance(&exact) < 1e-6);
            assert!(g.max_abs() <= FRAC_2_PI + 1e-9);
        }
    }

    #[test]
    fn parity_point_cases() {
        let s = ModeSpace::new(30).unwrap();
        let even = cat_state(s, C64::new(2.0, 0.0), 0.0).unwrap();
        assert!((parity_point(&even).unwrap() - FRAC_2_PI).abs() < 1e-12);
        let rp = coherent_state(s, C64::new(2.0, 0.0)).unwrap().density();
        let rm = coherent_state(s, C64::new(-2.0, 0.0)).unwrap().density();
        let mix = QuantumState::mixed(s, (rp + rm) * C64::new(0.5, 0.0)).unwrap();
        assert!((parity_point(&mix).unwrap() - FRAC_2_PI * (-8.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn fringe_calibration_roundtrip() {
        assert!((fringe_calibration(PI, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let (mu, a) = (31.4, 2.0);
        let got = fringe_calibration(2.0 * a / mu, PI / (2.0 * a * mu)).unwrap();
        assert!((got - mu).abs() < 1e-9);
        assert!((fringe_calibration(0.12739, 0.025032).unwrap() - 31.41).abs() < 0.04);
        assert!(fringe_calibration(0.0, 1.0).is_err());
    }

    #[test]
    fn photon_number_of_vacuum_and_coherent() {
        let ax = axis(6.0, 161);
        let vac = WignerGrid::from_fn(&ax, &ax, Exec::Sequential, |b| wigner_thermal(0.0, b));
        assert!(photon_number_from_grid(&vac).value.abs() < 0.01);
        let coh = WignerGrid::from_fn(&ax, &ax, Exec::Sequential, |b| FRAC_2_PI * (-2.0 * (b - C64::new(2.0, 0.0)).norm_sqr()).exp());
        let est = photon_number_from_grid(&coh);
        assert!((est.value - 4.0).abs() < 0.05 && !est.coverage_warning);
        let th = WignerGrid::from_fn(&ax, &ax, Exec::Sequential, |b| wigner_thermal(0.5, b));
        assert!((photon_number_from_grid(&th).value - 0.5).abs() < 0.02);
        let tight = axis(1.0, 41);
        let clipped = WignerGrid::from_fn(&tight, &tight, Exec::Sequential, |b| wigner_thermal(0.5, b));
        assert!(photon_number_from_grid(&clipped).coverage_warning);
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let ax = axis(1.0, 5);
        let g = WignerGrid::from_fn(&ax, &axis(2.0, 3), Exec::Sequential, |b| wigner_fock(1, b));
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = WignerGrid::read_csv(buf.as_slice()).unwrap();
        assert!(back.sup_distance(&g) < 1e-11);
        let mut bin = Vec::new();
        g.write_binary(&mut bin).unwrap();
        assert_eq!(WignerGrid::read_binary(&mut bin.as_slice()).unwrap(), g);
    }

    #[test]
    fn truncated_state_rejected() {
        let s = ModeSpace::new(6).unwrap();
        let st = coherent_state(s, C64::new(0.0, 0.0)).unwrap();
        assert!(wigner_numeric(&st, &[0.0], &[0.0], Exec::Sequential).is_ok());
        let top = fock_state(s, 5).unwrap();
        assert!(matches!(wigner_numeric(&top, &[0.0], &[0.0], Exec::Sequential), Err(Error::Truncation { .. })));
    }
}
