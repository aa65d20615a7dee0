//! One-dimensional minimisation and Levenberg–Marquardt least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimum of `f` on [a, b]; returns (x, f(x)).
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { (c, fc) } else { (d, fd) }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: DVector<f64>,
    /// Σ r².
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
}

impl LmResult {
    /// σ²(JᵀJ)⁻¹ with σ² = cost/(n − p); `None` when JᵀJ is singular.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let (n, p) = self.jacobian.shape();
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let inv = jtj.try_inverse()?;
        let dof = n.saturating_sub(p).max(1) as f64;
        Some(inv * (self.cost / dof))
    }

    pub fn stderr(&self) -> Option<DVector<f64>> {
        let c = self.covariance()?;
        Some(DVector::from_iterator(c.nrows(), (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt())))
    }

    /// Inverse condition number of JᵀJ (smallest/largest singular value).
    pub fn rcond(&self) -> f64 {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let sv = jtj.singular_values();
        let max = sv.max();
        if max == 0.0 { 0.0 } else { sv.min() / max }
    }
}

fn jacobian(r: &dyn Fn(&DVector<f64>) -> DVector<f64>, p: &DVector<f64>, r0_len: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(r0_len, p.len());
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-6);
        let mut pp = p.clone();
        let mut pm = p.clone();
        pp[k] += h;
        pm[k] -= h;
        let d = (r(&pp) - r(&pm)) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}

/// Minimise Σ r(p)² from `p0`. Jacobian by central differences.
pub fn levenberg_marquardt(r: impl Fn(&DVector<f64>) -> DVector<f64>, p0: DVector<f64>, max_iter: usize) -> Result<LmResult> {
    let mut p = p0;
    let mut res = r(&p);
    if res.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned("non-finite residual at the initial guess".into()));
    }
    let mut cost = res.norm_squared();
    let mut lambda = 1e-3;
    let mut j = jacobian(&r, &p, res.len());
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &res;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match a.lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let pn = &p + &step;
            let rn = r(&pn);
            let cn = rn.norm_squared();
            if cn.is_finite() && cn < cost {
                let rel = (cost - cn) / cost.max(1e-300);
                let small_step = step.norm() <= 1e-12 * (p.norm() + 1e-12);
                p = pn;
                res = rn;
                cost = cn;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-14 || small_step {
                    it = max_iter;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            break;
        }
        j = jacobian(&r, &p, res.len());
    }
    Ok(LmResult { params: p, cost, jacobian: j, iterations: it })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-10, 200);
        assert!((x - 1.3).abs() < 1e-6 && (fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lm_recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (-0.7 * t).exp() + 0.1).collect();
        let r = |p: &DVector<f64>| DVector::from_iterator(t.len(), t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y));
        let fit = levenberg_marquardt(r, DVector::from_vec(vec![1.0, 0.3, 0.0]), 200).unwrap();
        assert!((fit.params[1] - 0.7).abs() < 1e-7);
        assert!(fit.cost < 1e-16);
    }
}
