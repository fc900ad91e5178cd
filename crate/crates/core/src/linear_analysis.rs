//! Fundamental matrix of the linear part under two normalizations, with
//! singular-value series, the logarithmic growth rate p(t), the running
//! condition number k(t), their running averages, and a finite-horizon
//! maximal-Lyapunov-exponent estimate.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::integrator::{integrate_matrix_ode, IntegrateError, IntegratorConfig};
use crate::system_model::SystemSpec;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("W(t) numerically singular at t = {t}")]
    Degenerate { t: f64 },
    #[error("frozen-reference normalization unavailable: {0}")]
    FrozenReference(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Initial condition for the fundamental matrix.
///
/// `Identity` sets W(t0) = I. `FrozenReference` sets W(t0) to the real
/// eigenbasis of the frozen constant part of A (quasi-periodic offsets only),
/// scaled to unit spectral norm; for a constant A this makes p(t) equal the
/// dominant eigenvalue real part instead of oscillating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Identity,
    FrozenReference,
}

/// Sampled fundamental matrix and the scalar series derived from it.
#[derive(Debug, Clone)]
pub struct FundamentalData {
    pub times: Vec<f64>,
    pub w: Vec<DMatrix<f64>>,
    pub sigma_max: Vec<f64>,
    pub sigma_min: Vec<f64>,
    /// True where the gap between the two largest singular values is below
    /// 1e-6 relative; p(t) is only grid-scale accurate there.
    pub near_crossing: Vec<bool>,
    pub p: Vec<f64>,
    pub k: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub k_bar: Vec<f64>,
    w0_inv: DMatrix<f64>,
}

impl FundamentalData {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn grid_step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// W⁻¹(t0), computed once at construction.
    pub fn w0_inv(&self) -> &DMatrix<f64> {
        &self.w0_inv
    }

    pub fn initial_scalar_bound(&self, x0: &DVector<f64>) -> f64 {
        (&self.w0_inv * x0).norm()
    }
}

/// Real eigenbasis of a constant matrix, scaled to unit spectral norm.
///
/// Eigenvectors are obtained by shifted inverse iteration on the complex
/// matrix; a complex-conjugate pair contributes its real and imaginary parts
/// as two columns. Fails for (numerically) defective matrices.
pub fn frozen_reference_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    let n = a.nrows();
    let eigs = a
        .clone()
        .complex_eigenvalues();
    let scale = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);

    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    let tol_im = 1e-10 * scale;
    for (idx, lambda) in eigs.iter().enumerate() {
        if lambda.im < -tol_im {
            continue; // conjugate partner handles this one
        }
        let shift = *lambda + Complex::new(1e-8 * scale, 1e-8 * scale);
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * shift;
        let lu = shifted.lu();
        // deterministic start vector, varied per eigenvalue
        let mut v: DVector<Complex<f64>> = DVector::from_fn(n, |i, _| {
            Complex::new(1.0 + (i as f64 + 1.0) * 0.37 + idx as f64 * 0.11, 0.2 * i as f64)
        });
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(next) => {
                    let norm = next.norm();
                    if !(norm.is_finite() && norm > 0.0) {
                        return Err(AnalysisError::FrozenReference(
                            "inverse iteration diverged".into(),
                        ));
                    }
                    v = next / Complex::new(norm, 0.0);
                }
                None => {
                    return Err(AnalysisError::FrozenReference(
                        "singular shifted matrix in inverse iteration".into(),
                    ))
                }
            }
        }
        let residual = (&ac * &v - &v * *lambda).norm();
        if residual > 1e-6 * scale {
            return Err(AnalysisError::FrozenReference(format!(
                "eigenvector residual {residual:.2e} too large (repeated eigenvalue?)"
            )));
        }
        if lambda.im > tol_im {
            columns.push(v.map(|z| z.re));
            columns.push(v.map(|z| z.im));
        } else {
            columns.push(v.map(|z| z.re));
        }
    }
    if columns.len() != n {
        return Err(AnalysisError::FrozenReference(format!(
            "assembled {} real columns for dimension {n}",
            columns.len()
        )));
    }
    let mut w0 = DMatrix::zeros(n, n);
    for (j, col) in columns.iter().enumerate() {
        w0.set_column(j, col);
    }
    let svd = w0.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-8 * smax) {
        return Err(AnalysisError::FrozenReference(
            "eigenbasis numerically singular (defective matrix?)".into(),
        ));
    }
    Ok(w0 / smax)
}

/// Central finite differences of ln σ_max on a uniform grid, one-sided at
/// the ends.
pub fn compute_p(times: &[f64], sigma_max: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if times.len() != sigma_max.len() || times.len() < 2 {
        return Err(AnalysisError::InvalidInput("need >= 2 matching samples".into()));
    }
    for (&t, &s) in times.iter().zip(sigma_max.iter()) {
        if !(s > 0.0) {
            return Err(AnalysisError::Degenerate { t });
        }
    }
    let h = times[1] - times[0];
    let ln: Vec<f64> = sigma_max.iter().map(|s| s.ln()).collect();
    let m = ln.len();
    let mut p = vec![0.0; m];
    p[0] = (ln[1] - ln[0]) / h;
    p[m - 1] = (ln[m - 1] - ln[m - 2]) / h;
    for i in 1..m - 1 {
        p[i] = (ln[i + 1] - ln[i - 1]) / (2.0 * h);
    }
    Ok(p)
}

/// Trapezoidal cumulative integral of `series` over `times`.
pub fn cumulative_trapezoid(series: &[f64], times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..series.len() {
        acc += 0.5 * (series[i] + series[i - 1]) * (times[i] - times[i - 1]);
        out.push(acc);
    }
    out
}

/// Running time-average `t⁻¹∫ series ds` (trapezoid rule); the first point is
/// defined by continuity as `series[0]`.
pub fn running_average(series: &[f64], times: &[f64]) -> Vec<f64> {
    let cum = cumulative_trapezoid(series, times);
    let t0 = times[0];
    cum.iter()
        .zip(times.iter())
        .enumerate()
        .map(|(i, (c, t))| if i == 0 { series[0] } else { c / (t - t0) })
        .collect()
}

/// Computes the fundamental matrix and all derived series.
pub fn compute_fundamental(
    spec: &SystemSpec,
    norm: Normalization,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<FundamentalData, AnalysisError> {
    let n = spec.dimension();
    let w0 = match norm {
        Normalization::Identity => DMatrix::identity(n, n),
        Normalization::FrozenReference => frozen_reference_matrix(&spec.linear.constant_part())?,
    };
    let linear = &spec.linear;
    let mut a_eval = |t: f64| linear.eval(t);
    let traj = integrate_matrix_ode(&mut a_eval, &w0, spec.t0, t_end, cfg)?;

    let m = traj.times.len();
    let mut sigma_max = Vec::with_capacity(m);
    let mut sigma_min = Vec::with_capacity(m);
    let mut near_crossing = Vec::with_capacity(m);
    for (w, &t) in traj.matrices.iter().zip(traj.times.iter()) {
        let svd = w.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let (smax, smin) = (sv[0], sv[sv.len() - 1]);
        if !(smin > 0.0) {
            return Err(AnalysisError::Degenerate { t });
        }
        let gap = if sv.len() > 1 { (sv[0] - sv[1]) / sv[0] } else { 1.0 };
        near_crossing.push(gap < 1e-6);
        sigma_max.push(smax);
        sigma_min.push(smin);
    }

    let p = compute_p(&traj.times, &sigma_max)?;
    let k: Vec<f64> = sigma_max.iter().zip(sigma_min.iter()).map(|(a, b)| a / b).collect();
    let p_bar = running_average(&p, &traj.times);
    let k_bar = running_average(&k, &traj.times);

    let w0_inv = traj.matrices[0]
        .clone()
        .try_inverse()
        .ok_or(AnalysisError::Degenerate { t: spec.t0 })?;

    Ok(FundamentalData {
        times: traj.times,
        w: traj.matrices,
        sigma_max,
        sigma_min,
        near_crossing,
        p,
        k,
        p_bar,
        k_bar,
        w0_inv,
    })
}

/// Finite-horizon limsup proxy: max over the tail window of
/// `(t - t0)⁻¹ ln σ_max(t)`.
pub fn estimate_max_lyapunov(fd: &FundamentalData, tail_fraction: f64) -> f64 {
    let t0 = fd.t0();
    let span = fd.t_end() - t0;
    let cut = fd.t_end() - tail_fraction.clamp(0.01, 0.99) * span;
    fd.times
        .iter()
        .zip(fd.sigma_max.iter())
        .filter(|(&t, _)| t >= cut && t > t0)
        .map(|(&t, &s)| (s / fd.sigma_max[0]).ln() / (t - t0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `min σ_min` over the grid; the uniformity constant of Corollaries 3-4.
pub fn spectral_floor(fd: &FundamentalData) -> f64 {
    fd.sigma_min.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Fixed column order consumed by the CLI.
pub fn write_csv(fd: &FundamentalData, mut out: impl Write) -> Result<(), AnalysisError> {
    writeln!(
        out,
        "# t [time], sigma_max [1], sigma_min [1], p [1/time], k [1], p_bar [1/time], k_bar [1]"
    )?;
    for i in 0..fd.times.len() {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            fd.times[i],
            fd.sigma_max[i],
            fd.sigma_min[i],
            fd.p[i],
            fd.k[i],
            fd.p_bar[i],
            fd.k_bar[i]
        )?;
    }
    Ok(())
}
