//! Truncated Fock spaces, operators on products of modes, and the usual
//! single-mode states. Mode ordering is memory first, then buffer, then any
//! ancilla; the first factor of a Kronecker product is the most significant
//! index.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default tolerance on |Tr ρ − 1| for constructed states.
pub const NORM_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;


/// Smallest dimension judged adequate for a state of amplitude `|a|`:
/// |a|² + 4|a| + 6, roughly five standard deviations of the Poisson tail.
pub fn adequate_dim(amplitude: f64) -> usize {
    let a = amplitude.abs();
    (a * a + 4.0 * a + 6.0).ceil() as usize
}

pub(crate) fn check_truncation(dim: usize, amplitude: f64) -> Result<()> {
    let needed = adequate_dim(amplitude);
    if needed > dim {
        Err(Error::Truncation { needed, dim })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeSpace {
    dim: usize,
}

impl ModeSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Product of truncated modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Space {
    dims: Vec<usize>,
}

impl Space {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("empty mode list".into()));
        }
        for &d in dims {
            ModeSpace::new(d)?;
        }
        Ok(Self { dims: dims.to_vec() })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn mode(&self, k: usize) -> Result<ModeSpace> {
        self.dims
            .get(k)
            .map(|&dim| ModeSpace { dim })
            .ok_or(Error::Index { index: k, modes: self.dims.len() })
    }

    /// Occupation of mode `k` in the product basis state with flat index `idx`.
    pub fn occupation(&self, idx: usize, k: usize) -> usize {
        let stride: usize = self.dims[k + 1..].iter().product();
        (idx / stride) % self.dims[k]
    }

    fn product(&self, other: &Space) -> Space {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Space { dims }
    }
}

impl From<ModeSpace> for Space {
    fn from(m: ModeSpace) -> Self {
        Space { dims: vec![m.dim] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: Space,
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    pub fn new(space: impl Into<Space>, matrix: CMatrix) -> Result<Self> {
        let space = space.into();
        let n = space.total();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::SpaceMismatch(format!(
                "matrix is {}x{}, space has dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { space, matrix, hermitian: false })
    }

    /// Like [`Operator::new`] but verifies Hermiticity and sets the flag.
    pub fn hermitian(space: impl Into<Space>, matrix: CMatrix) -> Result<Self> {
        let mut op = Self::new(space, matrix)?;
        let dev = op.hermiticity_error();
        let scale = op.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(dev));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(space: impl Into<Space>) -> Self {
        let space = space.into();
        let n = space.total();
        Self { space, matrix: CMatrix::identity(n, n), hermitian: true }
    }

    pub fn zeros(space: impl Into<Space>) -> Self {
        let space = space.into();
        let n = space.total();
        Self { space, matrix: CMatrix::zeros(n, n), hermitian: true }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Max-entry deviation ‖A − A†‖.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                let d = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn dag(&self) -> Operator {
        Operator {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, z: C64) -> Operator {
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix * z,
            hermitian: self.hermitian && z.im == 0.0,
        }
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        Operator {
            space: self.space.product(&other.space),
            matrix: self.matrix.kronecker(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        }
    }

    /// Lift a single-mode operator onto mode `k` of a product space.
    pub fn on_mode(&self, space: &Space, k: usize) -> Result<Operator> {
        let mode = space.mode(k)?;
        if self.space.dims() != [mode.dim()] {
            return Err(Error::SpaceMismatch(format!(
                "operator on {:?} cannot act on mode {k} of {:?}",
                self.space.dims(),
                space.dims()
            )));
        }
        let left: usize = space.dims()[..k].iter().product();
        let right: usize = space.dims()[k + 1..].iter().product();
        let m = CMatrix::identity(left, left)
            .kronecker(&self.matrix)
            .kronecker(&CMatrix::identity(right, right));
        Ok(Operator { space: space.clone(), matrix: m, hermitian: self.hermitian })
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    fn assert_same(&self, other: &Operator) {
        assert_eq!(self.space, other.space, "operator spaces differ");
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.assert_same(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix + &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.assert_same(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix - &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.assert_same(rhs);
        Operator { space: self.space.clone(), matrix: &self.matrix * &rhs.matrix, hermitian: false }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, z: C64) -> Operator {
        self.scale(z)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, x: f64) -> Operator {
        self.scale(C64::new(x, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Repr {
    Pure(CVector),
    Mixed(CMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    space: Space,
    repr: Repr,
    norm_tolerance: f64,
}

impl QuantumState {
    /// Pure state from an already unit-norm vector.
    pub fn pure(space: impl Into<Space>, psi: CVector) -> Result<Self> {
        let space = space.into();
        if psi.len() != space.total() {
            return Err(Error::SpaceMismatch(format!(
                "vector length {} vs dimension {}",
                psi.len(),
                space.total()
            )));
        }
        let n2 = psi.norm_squared();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("state norm² = {n2}")));
        }
        Ok(Self { space, repr: Repr::Pure(psi), norm_tolerance: NORM_TOL })
    }

    /// Pure state from any non-zero vector, renormalized.
    pub fn normalized(space: impl Into<Space>, psi: CVector) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Self::pure(space, psi / C64::new(n, 0.0))
    }

    /// Density matrix; checks dimension, trace and Hermiticity.
    pub fn mixed(space: impl Into<Space>, rho: CMatrix) -> Result<Self> {
        Self::mixed_with_tolerance(space, rho, NORM_TOL)
    }

    pub fn mixed_with_tolerance(space: impl Into<Space>, rho: CMatrix, tol: f64) -> Result<Self> {
        let space = space.into();
        let n = space.total();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::SpaceMismatch(format!("density matrix is not {n}x{n}")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidArgument(format!("Tr rho = {tr}")));
        }
        let herm = (&rho - rho.adjoint()).camax();
        if herm > tol.max(1e-9) {
            return Err(Error::NotHermitian(herm));
        }
        Ok(Self { space, repr: Repr::Mixed(rho), norm_tolerance: tol })
    }

    pub(crate) fn mixed_unchecked(space: Space, rho: CMatrix) -> Self {
        Self { space, repr: Repr::Mixed(rho), norm_tolerance: NORM_TOL }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn norm_tolerance(&self) -> f64 {
        self.norm_tolerance
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.repr, Repr::Pure(_))
    }

    pub fn density(&self) -> CMatrix {
        match &self.repr {
            Repr::Pure(v) => v * v.adjoint(),
            Repr::Mixed(m) => m.clone(),
        }
    }

    pub fn into_mixed(self) -> QuantumState {
        match self.repr {
            Repr::Pure(_) => {
                let rho = self.density();
                QuantumState { space: self.space, repr: Repr::Mixed(rho), norm_tolerance: self.norm_tolerance }
            }
            Repr::Mixed(_) => self,
        }
    }

    pub fn trace(&self) -> C64 {
        match &self.repr {
            Repr::Pure(v) => C64::new(v.norm_squared(), 0.0),
            Repr::Mixed(m) => m.trace(),
        }
    }

    pub fn purity(&self) -> f64 {
        match &self.repr {
            Repr::Pure(v) => v.norm_squared().powi(2),
            Repr::Mixed(m) => (m * m).trace().re,
        }
    }

    /// Tr(ρ·op).
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.space() != &self.space {
            return Err(Error::SpaceMismatch(format!(
                "state on {:?}, operator on {:?}",
                self.space.dims(),
                op.space().dims()
            )));
        }
        Ok(match &self.repr {
            Repr::Pure(v) => v.dotc(&(op.matrix() * v)),
            Repr::Mixed(m) => {
                let a = op.matrix();
                let n = m.nrows();
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..n {
                    for k in 0..n {
                        acc += m[(i, k)] * a[(k, i)];
                    }
                }
                acc
            }
        })
    }

    /// ⟨ψ|ρ|ψ⟩ against a pure reference.
    pub fn overlap(&self, psi: &CVector) -> f64 {
        match &self.repr {
            Repr::Pure(v) => v.dotc(psi).norm_sqr(),
            Repr::Mixed(m) => psi.dotc(&(m * psi)).re,
        }
    }

    /// Smallest eigenvalue of the Hermitian part of ρ.
    pub fn min_eigenvalue(&self) -> f64 {
        match &self.repr {
            Repr::Pure(_) => 0.0,
            Repr::Mixed(m) => {
                let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
                let ev = nalgebra::SymmetricEigen::new(h).eigenvalues;
                ev.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Population of product-basis state `idx`.
    pub fn population(&self, idx: usize) -> f64 {
        match &self.repr {
            Repr::Pure(v) => v[idx].norm_sqr(),
            Repr::Mixed(m) => m[(idx, idx)].re,
        }
    }
}

pub fn annihilation(space: ModeSpace) -> Operator {
    let n = space.dim();
    let mut m = CMatrix::zeros(n, n);
    for k in 1..n {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Operator { space: space.into(), matrix: m, hermitian: false }
}

pub fn creation(space: ModeSpace) -> Operator {
    annihilation(space).dag()
}

pub fn number(space: ModeSpace) -> Operator {
    let n = space.dim();
    let m = CMatrix::from_diagonal(&CVector::from_fn(n, |k, _| C64::new(k as f64, 0.0)));
    Operator { space: space.into(), matrix: m, hermitian: true }
}

pub fn parity(space: ModeSpace) -> Operator {
    let n = space.dim();
    let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
    let m = CMatrix::from_diagonal(&CVector::from_fn(n, |k, _| C64::new(sign(k), 0.0)));
    Operator { space: space.into(), matrix: m, hermitian: true }
}

/// D(β) = exp(βa† − β*a) on the truncated space.
pub fn displacement(space: ModeSpace, beta: C64) -> Result<Operator> {
    check_truncation(space.dim(), beta.norm())?;
    let a = annihilation(space);
    let gen = &a.dag().scale(beta) - &a.scale(beta.conj());
    let d = gen.matrix.exp();
    // exp of an anti-Hermitian matrix is unitary; confirm column orthonormality
    let n = space.dim();
    let dev = (d.adjoint() * &d - CMatrix::identity(n, n)).camax();
    if dev > 1e-8 {
        return Err(Error::Convergence(format!("displacement unitarity deviation {dev:.2e}")));
    }
    Ok(Operator { space: space.into(), matrix: d, hermitian: false })
}

pub fn fock_state(space: ModeSpace, n: usize) -> Result<QuantumState> {
    if n >= space.dim() {
        return Err(Error::Truncation { needed: n + 1, dim: space.dim() });
    }
    let mut v = CVector::zeros(space.dim());
    v[n] = C64::new(1.0, 0.0);
    QuantumState::pure(space, v)
}

fn coherent_amplitudes(dim: usize, alpha: C64) -> CVector {
    let mut v = CVector::zeros(dim);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    v[0] = c;
    for k in 1..dim {
        c = c * alpha / (k as f64).sqrt();
        v[k] = c;
    }
    v
}

pub fn coherent_state(space: ModeSpace, alpha: C64) -> Result<QuantumState> {
    check_truncation(space.dim(), alpha.norm())?;
    QuantumState::normalized(space, coherent_amplitudes(space.dim(), alpha))
}

/// (|α⟩ + e^{iθ}|−α⟩)/√N; θ = 0 is the even cat.
pub fn cat_state(space: ModeSpace, alpha: C64, theta: f64) -> Result<QuantumState> {
    check_truncation(space.dim(), alpha.norm())?;
    let plus = coherent_amplitudes(space.dim(), alpha);
    let minus = coherent_amplitudes(space.dim(), -alpha);
    let phase = C64::from_polar(1.0, theta);
    let mut v = plus + minus * phase;
    // enforce exact parity where it applies, the two sums cancel only to rounding
    let p = phase - C64::new(1.0, 0.0);
    let q = phase + C64::new(1.0, 0.0);
    if p.norm() < 1e-14 || q.norm() < 1e-14 {
        let keep = if p.norm() < 1e-14 { 0 } else { 1 };
        for k in 0..v.len() {
            if k % 2 != keep {
                v[k] = C64::new(0.0, 0.0);
            }
        }
    }
    QuantumState::normalized(space, v)
}

pub fn thermal_state(space: ModeSpace, n_th: f64) -> Result<QuantumState> {
    if !(n_th >= 0.0) {
        return Err(Error::InvalidArgument(format!("n_th = {n_th}")));
    }
    let dim = space.dim();
    let r = n_th / (1.0 + n_th);
    let tail = r.powi(dim as i32);
    if tail >= 1e-9 {
        let needed = ((1e-9f64).ln() / r.ln()).ceil() as usize;
        return Err(Error::Truncation { needed, dim });
    }
    let mut w: Vec<f64> = (0..dim).map(|k| r.powi(k as i32) / (1.0 + n_th)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    let rho = CMatrix::from_diagonal(&CVector::from_iterator(dim, w.into_iter().map(|x| C64::new(x, 0.0))));
    Ok(QuantumState::mixed_unchecked(space.into(), rho))
}

#[derive(Debug, Clone)]
pub enum Factor {
    Operator(Operator),
    State(QuantumState),
}

/// Kronecker product of a homogeneous list of operators or states.
pub fn tensor(factors: &[Factor]) -> Result<Factor> {
    match factors.first() {
        None => Err(Error::InvalidArgument("empty tensor product".into())),
        Some(Factor::Operator(_)) => {
            let ops: Vec<&Operator> = factors
                .iter()
                .map(|f| match f {
                    Factor::Operator(o) => Ok(o),
                    Factor::State(_) => Err(Error::KindMismatch),
                })
                .collect::<Result<_>>()?;
            Ok(Factor::Operator(tensor_operators(&ops)))
        }
        Some(Factor::State(_)) => {
            let states: Vec<&QuantumState> = factors
                .iter()
                .map(|f| match f {
                    Factor::State(s) => Ok(s),
                    Factor::Operator(_) => Err(Error::KindMismatch),
                })
                .collect::<Result<_>>()?;
            Ok(Factor::State(tensor_states(&states)))
        }
    }
}

pub fn tensor_operators(ops: &[&Operator]) -> Operator {
    let mut acc = ops[0].clone();
    for op in &ops[1..] {
        acc = acc.kron(op);
    }
    acc
}

pub fn tensor_states(states: &[&QuantumState]) -> QuantumState {
    let mut acc = states[0].clone();
    for s in &states[1..] {
        let space = acc.space.product(&s.space);
        let tol = acc.norm_tolerance.max(s.norm_tolerance);
        let repr = match (&acc.repr, &s.repr) {
            (Repr::Pure(a), Repr::Pure(b)) => Repr::Pure(a.kronecker(b)),
            _ => Repr::Mixed(acc.density().kronecker(&s.density())),
        };
        acc = QuantumState { space, repr, norm_tolerance: tol };
    }
    acc
}

/// Reduced state of mode `keep`.
pub fn partial_trace(state: &QuantumState, keep: usize) -> Result<QuantumState> {
    let space = state.space();
    let dims = space.dims();
    if keep >= dims.len() {
        return Err(Error::Index { index: keep, modes: dims.len() });
    }
    let d = dims[keep];
    let left: usize = dims[..keep].iter().product();
    let right: usize = dims[keep + 1..].iter().product();
    let idx = |l: usize, k: usize, r: usize| (l * d + k) * right + r;
    let mut out = CMatrix::zeros(d, d);
    match state.repr() {
        Repr::Pure(v) => {
            for i in 0..d {
                for j in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..left {
                        for r in 0..right {
                            acc += v[idx(l, i, r)] * v[idx(l, j, r)].conj();
                        }
                    }
                    out[(i, j)] = acc;
                }
            }
        }
        Repr::Mixed(m) => {
            for i in 0..d {
                for j in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..left {
                        for r in 0..right {
                            acc += m[(idx(l, i, r), idx(l, j, r))];
                        }
                    }
                    out[(i, j)] = acc;
                }
            }
        }
    }
    Ok(QuantumState {
        space: Space { dims: vec![d] },
        repr: Repr::Mixed(out),
        norm_tolerance: state.norm_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn ladder_action() {
        let s = ModeSpace::new(3).unwrap();
        let a = annihilation(s);
        let one = fock_state(s, 1).unwrap();
        if let Repr::Pure(v) = one.repr() {
            let out = a.matrix() * v;
            assert!((out[0] - c(1.0)).norm() < 1e-15);
            assert!(out[1].norm() + out[2].norm() < 1e-15);
            let vac = a.matrix() * CVector::from_vec(vec![c(1.0), c(0.0), c(0.0)]);
            assert!(vac.norm() == 0.0);
        }
    }

    #[test]
    fn commutator_except_last_level() {
        let s = ModeSpace::new(6).unwrap();
        let a = annihilation(s);
        let comm = a.commutator(&a.dag());
        for k in 0..5 {
            assert!((comm.matrix()[(k, k)] - c(1.0)).norm() < 1e-12);
        }
        assert!((comm.matrix()[(5, 5)] - c(-5.0)).norm() < 1e-12);
    }

    #[test]
    fn displacement_identity_and_inverse() {
        let s = ModeSpace::new(30).unwrap();
        let d0 = displacement(s, c(0.0)).unwrap();
        assert!((d0.matrix() - CMatrix::identity(30, 30)).camax() < 1e-14);
        let b = C64::new(1.2, -0.7);
        let prod = displacement(s, b).unwrap().matrix() * displacement(s, -b).unwrap().matrix();
        assert!((prod - CMatrix::identity(30, 30)).camax() < 1e-8);
    }

    #[test]
    fn displacement_truncation_error() {
        let s = ModeSpace::new(10).unwrap();
        assert!(matches!(displacement(s, c(2.0)), Err(Error::Truncation { .. })));
    }

    #[test]
    fn displaced_vacuum_is_coherent() {
        let s = ModeSpace::new(30).unwrap();
        let b = C64::new(1.5, 0.8);
        let d = displacement(s, b).unwrap();
        let v = d.matrix().column(0).into_owned();
        let coh = coherent_state(s, b).unwrap();
        if let Repr::Pure(w) = coh.repr() {
            assert!((v - w).norm() < 1e-6);
        }
    }

    #[test]
    fn coherent_mean_and_overlap() {
        let s = ModeSpace::new(30).unwrap();
        let a2 = coherent_state(s, c(2.0)).unwrap();
        let n = a2.expectation(&number(s)).unwrap();
        assert!((n.re - 4.0).abs() < 1e-6);
        let m = coherent_state(s, c(-2.0)).unwrap();
        if let (Repr::Pure(x), Repr::Pure(y)) = (a2.repr(), m.repr()) {
            assert!((x.dotc(y).re - (-8.0f64).exp()).abs() < 1e-9);
        }
        let vac = coherent_state(s, c(0.0)).unwrap();
        assert!((vac.population(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cat_parities() {
        let s = ModeSpace::new(30).unwrap();
        let p = parity(s);
        let even = cat_state(s, c(2.0), 0.0).unwrap();
        let odd = cat_state(s, c(2.0), std::f64::consts::PI).unwrap();
        assert!((even.expectation(&p).unwrap().re - 1.0).abs() < 1e-12);
        assert!((odd.expectation(&p).unwrap().re + 1.0).abs() < 1e-12);
        if let Repr::Pure(v) = even.repr() {
            for k in (1..30).step_by(2) {
                assert!(v[k].norm() < 1e-12);
            }
        }
        let small = cat_state(s, c(1e-4), 0.0).unwrap();
        assert!(small.population(0) > 1.0 - 1e-7);
    }

    #[test]
    fn thermal_weights() {
        let s = ModeSpace::new(20).unwrap();
        let t0 = thermal_state(s, 0.0).unwrap();
        assert_eq!(t0.population(0), 1.0);
        let t = thermal_state(s, 0.011).unwrap();
        assert!((t.population(0) - 1.0 / 1.011).abs() < 1e-5);
        let s60 = ModeSpace::new(60).unwrap();
        let t5 = thermal_state(s60, 0.5).unwrap();
        assert!((t5.expectation(&number(s60)).unwrap().re - 0.5).abs() < 1e-9);
        assert!(matches!(thermal_state(s, 5.0), Err(Error::Truncation { .. })));
    }

    #[test]
    fn parity_values() {
        let s = ModeSpace::new(20).unwrap();
        let p = parity(s);
        assert_eq!(fock_state(s, 0).unwrap().expectation(&p).unwrap().re, 1.0);
        assert_eq!(fock_state(s, 1).unwrap().expectation(&p).unwrap().re, -1.0);
        let coh = coherent_state(s, c(1.0)).unwrap();
        assert!((coh.expectation(&p).unwrap().re - (-2.0f64).exp()).abs() < 1e-9);
        let a = annihilation(s);
        let anti = &(&p * &a) + &(&a * &p);
        assert_eq!(anti.matrix().camax(), 0.0);
    }

    #[test]
    fn tensor_and_partial_trace() {
        let s = ModeSpace::new(3).unwrap();
        let id = Operator::identity(s);
        let ii = tensor_operators(&[&id, &id]);
        assert_eq!(ii.matrix(), &CMatrix::identity(9, 9));
        let a = annihilation(s);
        let aop = tensor_operators(&[&a, &id]);
        let one = fock_state(s, 1).unwrap();
        let psi = tensor_states(&[&one, &one]);
        if let Repr::Pure(v) = psi.repr() {
            let out = aop.matrix() * v;
            // |0⟩⊗|1⟩ has flat index 1
            assert!((out[1] - c(1.0)).norm() < 1e-15);
        }
        let mixed = tensor(&[Factor::State(one.clone()), Factor::Operator(id.clone())]);
        assert_eq!(mixed.unwrap_err(), Error::KindMismatch);

        let space2 = Space::new(&[2, 2]).unwrap();
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let bell = QuantumState::pure(space2, CVector::from_vec(vec![h, c(0.0), c(0.0), h])).unwrap();
        let red = partial_trace(&bell, 0).unwrap();
        let rho = red.density();
        assert!((rho[(0, 0)].re - 0.5).abs() < 1e-15 && rho[(0, 1)].norm() < 1e-15);
        assert!(matches!(partial_trace(&bell, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn on_mode_matches_kron() {
        let sp = Space::new(&[3, 4]).unwrap();
        let b = annihilation(ModeSpace::new(4).unwrap());
        let lifted = b.on_mode(&sp, 1).unwrap();
        let direct = Operator::identity(ModeSpace::new(3).unwrap()).kron(&b);
        assert_eq!(lifted.matrix(), direct.matrix());
        assert_eq!(sp.occupation(7, 0), 1);
        assert_eq!(sp.occupation(7, 1), 3);
    }
}
