//! Least-squares fitters for decay and oscillation traces. Times are
//! rescaled to [0, 1] over the record before fitting so that rates between
//! 1e3 and 1e9 s⁻¹ are equally well conditioned.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{golden_section, levenberg_marquardt, LmResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

impl Param {
    pub fn new(name: &str, value: f64, stderr: f64) -> Self {
        Self { name: name.to_string(), value, stderr }
    }
}

/// How a number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LeastSquares,
    /// Liouvillian eigenvalue.
    Spectral,
    /// Exponential fit of a simulated trajectory.
    FiniteHorizon,
    GoldenSection,
    ClosedForm,
}

/// Fitted or computed quantities in SI units (rates and angular frequencies
/// in s⁻¹, times in s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<Param>,
    pub residual_norm: f64,
    pub n_points: usize,
    pub method: Method,
    /// Set when the main value is only a lower bound (nothing resolvable
    /// happened within the horizon or spectral resolution).
    pub lower_bound: bool,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.stderr)
    }
}

fn check_series(times: &[f64], values: &[f64], sigma: Option<&[f64]>) -> Result<()> {
    if times.len() != values.len() || sigma.is_some_and(|s| s.len() != times.len()) {
        return Err(Error::InvalidArgument("times, values and sigma must have equal length".into()));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    if sigma.is_some_and(|s| s.iter().any(|&x| !(x > 0.0))) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    Ok(())
}

/// Record origin and span used to rescale time.
fn time_frame(times: &[f64]) -> Result<(f64, f64)> {
    let t0 = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t1 = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = t1 - t0;
    if !(span > 0.0) {
        return Err(Error::IllConditioned("samples must span a nonzero time interval".into()));
    }
    Ok((t0, span))
}

fn weights(sigma: Option<&[f64]>, n: usize) -> Vec<f64> {
    sigma.map_or_else(|| vec![1.0; n], |s| s.iter().map(|x| 1.0 / x).collect())
}

fn stderr_or_fail(fit: &LmResult) -> Result<DVector<f64>> {
    if fit.rcond() < 1e-14 {
        return Err(Error::IllConditioned(format!("normal matrix condition {:.2e}", fit.rcond())));
    }
    fit.stderr().ok_or_else(|| Error::IllConditioned("singular normal matrix".into()))
}

/// A·e^{−Γt}, unweighted.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<FitResult> {
    fit_exponential_weighted(times, values, None)
}

/// A·e^{−Γt} with optional per-point standard deviations. Parameters
/// `amplitude` (at t = 0) and `rate`.
pub fn fit_exponential_weighted(times: &[f64], values: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_series(times, values, sigma)?;
    if times.len() < 4 {
        return Err(Error::IllConditioned(format!("{} points, need at least 4", times.len())));
    }
    let s0 = values[0].signum();
    if values.iter().any(|&v| v == 0.0 || v.signum() != s0) {
        return Err(Error::IllConditioned("values must be nonzero and share one sign".into()));
    }
    let (t0, span) = time_frame(times)?;
    let tau: Vec<f64> = times.iter().map(|t| (t - t0) / span).collect();
    let w = weights(sigma, times.len());

    // log-linear start
    let ly: Vec<f64> = values.iter().map(|v| (v * s0).ln()).collect();
    let n = tau.len() as f64;
    let (mt, ml) = (tau.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = tau.iter().zip(&ly).map(|(t, l)| (t - mt) * (l - ml)).sum();
    let sxx: f64 = tau.iter().map(|t| (t - mt).powi(2)).sum();
    let slope = sxy / sxx;
    let p0 = DVector::from_vec(vec![s0 * (ml - slope * mt).exp(), -slope]);

    let r = |p: &DVector<f64>| DVector::from_iterator(tau.len(), tau.iter().zip(values).zip(&w).map(|((t, y), w)| (p[0] * (-p[1] * t).exp() - y) * w));
    let fit = levenberg_marquardt(r, p0, 500)?;
    let se = stderr_or_fail(&fit)?;
    // back to the original origin and units
    let rate = fit.params[1] / span;
    let shift = (rate * t0).exp();
    Ok(FitResult {
        params: vec![Param::new("amplitude", fit.params[0] * shift, se[0] * shift), Param::new("rate", rate, se[1] / span)],
        residual_norm: fit.cost.sqrt(),
        n_points: times.len(),
        method: Method::LeastSquares,
        lower_bound: false,
        diagnostics: Vec::new(),
    })
}

/// A·e^{−Γt} + C. Parameters `amplitude`, `rate`, `offset`.
pub fn fit_exponential_offset(times: &[f64], values: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_series(times, values, sigma)?;
    if times.len() < 5 {
        return Err(Error::IllConditioned(format!("{} points, need at least 5", times.len())));
    }
    let (t0, span) = time_frame(times)?;
    let tau: Vec<f64> = times.iter().map(|t| (t - t0) / span).collect();
    let w = weights(sigma, times.len());
    let last = *values.last().expect("non-empty");
    let first = values[0];
    if (first - last).abs() <= 1e-14 * first.abs().max(last.abs()).max(1e-300) {
        return Err(Error::IllConditioned("flat series: rate is indeterminate".into()));
    }
    let r = |p: &DVector<f64>| DVector::from_iterator(tau.len(), tau.iter().zip(values).zip(&w).map(|((t, y), w)| (p[0] * (-p[1] * t).exp() + p[2] - y) * w));
    let mut best: Option<LmResult> = None;
    for g in [0.5, 2.0, 6.0] {
        let fit = levenberg_marquardt(&r, DVector::from_vec(vec![first - last, g, last]), 500)?;
        if best.as_ref().is_none_or(|b| fit.cost < b.cost) {
            best = Some(fit);
        }
    }
    let fit = best.expect("three starts");
    let se = stderr_or_fail(&fit)?;
    let rate = fit.params[1] / span;
    let shift = (rate * t0).exp();
    Ok(FitResult {
        params: vec![
            Param::new("amplitude", fit.params[0] * shift, se[0] * shift),
            Param::new("rate", rate, se[1] / span),
            Param::new("offset", fit.params[2], se[2]),
        ],
        residual_norm: fit.cost.sqrt(),
        n_points: times.len(),
        method: Method::LeastSquares,
        lower_bound: false,
        diagnostics: Vec::new(),
    })
}

/// |Σ y e^{−iωτ}|² of a mean-removed series on rescaled time.
fn periodogram(tau: &[f64], y: &[f64], omega: f64) -> C64 {
    tau.iter().zip(y).map(|(t, v)| C64::from_polar(*v, -omega * t)).sum()
}

/// False-alarm probability accepted for the periodogram peak.
const FALSE_ALARM: f64 = 1e-3;

/// A·e^{−κt}cos(Ωt + φ) + C, unweighted.
pub fn fit_decaying_sinusoid(times: &[f64], values: &[f64]) -> Result<FitResult> {
    fit_decaying_sinusoid_weighted(times, values, None)
}

/// A·e^{−κt}cos(Ωt + φ) + C. The frequency is initialised from the
/// periodogram peak. Parameters `omega`, `kappa`, `amplitude`, `phase`,
/// `offset`, with the phase referred to the first sample.
pub fn fit_decaying_sinusoid_weighted(times: &[f64], values: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_series(times, values, sigma)?;
    if times.len() < 10 {
        return Err(Error::NoOscillation(format!("{} points, need at least 10", times.len())));
    }
    let (t0, span) = time_frame(times).map_err(|_| Error::NoOscillation("zero time span".into()))?;
    let tau: Vec<f64> = times.iter().map(|t| (t - t0) / span).collect();
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let var = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(var > 1e-28 * mean.abs().max(1.0).powi(2)) {
        return Err(Error::NoOscillation("series is constant".into()));
    }

    // frequency grid in cycles per record, from one cycle to the mean Nyquist
    let f_max = (n as f64 / 2.0).max(1.5);
    let df = 0.05;
    let grid: Vec<f64> = (0..).map(|k| 0.5 + k as f64 * df).take_while(|&f| f <= f_max).collect();
    let powers: Vec<f64> = grid.iter().map(|&f| periodogram(&tau, &y, std::f64::consts::TAU * f).norm_sqr()).collect();
    let (k_peak, &p_peak) = powers.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    // for white noise P/(nσ²) is unit-exponential at each of ~n/2
    // independent frequencies
    let z = p_peak / (n as f64 * var);
    let z_min = (n as f64 / 2.0 / FALSE_ALARM).ln();
    if z < z_min {
        return Err(Error::NoOscillation(format!("periodogram peak {z:.2} below the noise threshold {z_min:.2}")));
    }
    let (f_peak, _) = golden_section(|f| -periodogram(&tau, &y, std::f64::consts::TAU * f).norm_sqr(), grid[k_peak] - df, grid[k_peak] + df, 1e-9, 200);
    if f_peak < 0.9 {
        return Err(Error::NoOscillation(format!("record spans only {f_peak:.2} periods")));
    }
    let w0 = std::f64::consts::TAU * f_peak;
    let z = periodogram(&tau, &y, w0);
    let a0 = 2.0 * z.norm() / n as f64;
    let phi0 = z.arg();

    let w = weights(sigma, n);
    let r = |p: &DVector<f64>| {
        DVector::from_iterator(n, tau.iter().zip(values).zip(&w).map(|((t, v), w)| (p[0] * (-p[1] * t).exp() * (p[2] * t + p[3]).cos() + p[4] - v) * w))
    };
    let mut best: Option<LmResult> = None;
    for k0 in [0.0, 1.0, 4.0] {
        // a decaying envelope depresses the periodogram amplitude
        let amp = if k0 > 0.0 { a0 * k0 / (1.0 - (-k0 as f64).exp()) } else { a0 };
        let fit = levenberg_marquardt(&r, DVector::from_vec(vec![amp, k0, w0, phi0, mean]), 1000)?;
        if best.as_ref().is_none_or(|b| fit.cost < b.cost) {
            best = Some(fit);
        }
    }
    let fit = best.expect("three starts");
    let se = stderr_or_fail(&fit)?;
    let mut p = fit.params.clone();
    // canonical sign: positive amplitude and frequency
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += std::f64::consts::PI;
    }
    let phase = (p[3] + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    Ok(FitResult {
        params: vec![
            Param::new("omega", p[2] / span, se[2] / span),
            Param::new("kappa", p[1] / span, se[1] / span),
            Param::new("amplitude", p[0], se[0]),
            Param::new("phase", phase, se[3]),
            Param::new("offset", p[4], se[4]),
        ],
        residual_norm: fit.cost.sqrt(),
        n_points: n,
        method: Method::LeastSquares,
        lower_bound: false,
        diagnostics: Vec::new(),
    })
}

/// Slope of an ordinary least-squares line.
pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 { 0.0 } else { sxy / sxx }
}
