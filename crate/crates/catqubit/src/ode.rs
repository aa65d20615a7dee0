//! Adaptive Dormand–Prince 5(4) integrator for complex linear systems.

use crate::error::{Error, Result};
use crate::fock::C64;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen from the RHS norm when `None`.
    pub h0: Option<f64>,
    /// Largest allowed step; 0 means unbounded.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, h0: None, h_max: 0.0, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy_into(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..out.len() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Integrate y' = f(t, y) from `t0` and return y at each of `t_out`
/// (non-decreasing, all ≥ t0). Steps are shortened to land on output times.
pub fn dopri5<F>(f: F, t0: f64, y0: &[C64], t_out: &[f64], opts: &OdeOptions) -> Result<(Vec<Vec<C64>>, OdeStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let mut out = Vec::with_capacity(t_out.len());
    let stats = dopri5_with(f, t0, y0, t_out, opts, |_, y| out.push(y.to_vec()))?;
    Ok((out, stats))
}

/// As [`dopri5`], handing each output to `sink(k, y)` instead of storing it.
pub fn dopri5_with<F, S>(mut f: F, t0: f64, y0: &[C64], t_out: &[f64], opts: &OdeOptions, mut sink: S) -> Result<OdeStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, &[C64]),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![C64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut tmp = k1.clone();
    let mut ynew = k1.clone();
    f(t, &y, &mut k1);
    stats.rhs_evals += 1;

    let scale_norm = |v: &[C64], yy: &[C64]| -> f64 {
        let s: f64 = v.iter().zip(yy).map(|(a, b)| (a.norm() / (opts.atol + opts.rtol * b.norm())).powi(2)).sum();
        (s / n.max(1) as f64).sqrt()
    };
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let d0 = scale_norm(&y, &y);
            let d1 = scale_norm(&k1, &y);
            if d0 < 1e-5 || d1 < 1e-5 { 1e-12 } else { 0.01 * d0 / d1 }
        }
    };
    if opts.h_max > 0.0 {
        h = h.min(opts.h_max);
    }

    for (k_out, &target) in t_out.iter().enumerate() {
        if target < t {
            return Err(Error::InvalidArgument(format!("output time {target} precedes {t}")));
        }
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::StepFailure { t, h });
            }
            let remaining = target - t;
            let hs = if h >= remaining { remaining } else { h.min(remaining) };
            if hs < 1e-14 * t.abs().max(1e-30) || hs <= 0.0 {
                return Err(Error::StepFailure { t, h: hs });
            }
            axpy_into(&mut tmp, &y, hs, &[(A21, &k1)]);
            f(t + C2 * hs, &tmp, &mut k2);
            axpy_into(&mut tmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
            f(t + C3 * hs, &tmp, &mut k3);
            axpy_into(&mut tmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + C4 * hs, &tmp, &mut k4);
            axpy_into(&mut tmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + C5 * hs, &tmp, &mut k5);
            axpy_into(&mut tmp, &y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            f(t + hs, &tmp, &mut k6);
            axpy_into(&mut ynew, &y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            f(t + hs, &ynew, &mut k7);
            stats.rhs_evals += 6;

            let mut err = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                let sc = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
                err += (e.norm() / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                h = hs * 0.2;
                stats.rejected += 1;
                continue;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if hs == remaining { target } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                stats.accepted += 1;
                // a step clipped to hit an output time says nothing about h
                if hs == h || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                stats.rejected += 1;
                h = hs * fac.min(1.0);
            }
            if opts.h_max > 0.0 {
                h = h.min(opts.h_max);
            }
        }
        sink(k_out, &y);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotating_decay() {
        // y' = (−γ + iω) y
        let lam = C64::new(-0.3, 2.0);
        let times: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let (ys, stats) = dopri5(
            |_, y, dy| dy[0] = lam * y[0],
            0.0,
            &[C64::new(1.0, 0.0)],
            &times,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            let exact = (lam * *t).exp();
            assert!((y[0] - exact).norm() < 1e-7, "t={t}");
        }
        assert!(stats.accepted > 10);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = cos(t), y(0) = 0
        let (ys, _) = dopri5(
            |t, _, dy| dy[0] = C64::new(t.cos(), 0.0),
            0.0,
            &[C64::new(0.0, 0.0)],
            &[1.0, 3.0],
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((ys[1][0].re - 3.0f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn rejects_backward_times() {
        let r = dopri5(|_, _, dy| dy[0] = C64::new(0.0, 0.0), 1.0, &[C64::new(1.0, 0.0)], &[0.5], &OdeOptions::default());
        assert!(r.is_err());
    }
}
