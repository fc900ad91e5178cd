//! Lipschitz envelopes, the linear Theorem-1 bound, the scalar nonlinear
//! auxiliary equation, comparison verification, the Corollary 1-4 stability
//! criteria, and the constant-coefficient Bernoulli closed form used as an
//! independent oracle.

use std::io::Write;

use nalgebra::DVector;
use thiserror::Error;

use crate::integrator::{integrate_ivp_partial, AbortKind, IntegrateError, IntegratorConfig, Trajectory};
use crate::linear_analysis::{cumulative_trapezoid, estimate_max_lyapunov, spectral_floor, FundamentalData};
use crate::system_model::{PolynomialVectorField, QuasiPeriodicScalar, SystemSpec};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("envelope coefficient negative at t = {t}")]
    NegativeCoefficient { t: f64 },
    #[error("grid mismatch between trajectory and bound")]
    GridMismatch,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One power-series envelope term `c(t)·X^exponent`, exponent ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTerm {
    pub coefficient: QuasiPeriodicScalar,
    pub exponent: f64,
}

/// Scalar dominating function for the nonlinearity:
/// `‖f(t,x)‖ ≤ L(t, ‖x‖)` on `‖x‖ ≤ region_radius` (None = global).
#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzEnvelope {
    Linear { l: QuasiPeriodicScalar, region_radius: Option<f64> },
    PowerSeries { terms: Vec<EnvelopeTerm>, region_radius: Option<f64> },
}

impl LipschitzEnvelope {
    pub fn zero() -> Self {
        LipschitzEnvelope::PowerSeries { terms: Vec::new(), region_radius: None }
    }

    pub fn linear_const(l: f64) -> Self {
        LipschitzEnvelope::Linear { l: QuasiPeriodicScalar::constant(l), region_radius: None }
    }

    pub fn region_radius(&self) -> Option<f64> {
        match self {
            LipschitzEnvelope::Linear { region_radius, .. }
            | LipschitzEnvelope::PowerSeries { region_radius, .. } => *region_radius,
        }
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        if let LipschitzEnvelope::PowerSeries { terms, .. } = self {
            for term in terms {
                if !(term.exponent >= 1.0) {
                    return Err(BoundsError::InvalidInput(format!(
                        "envelope exponent {} < 1 (non-Lipschitz at zero)",
                        term.exponent
                    )));
                }
            }
        }
        Ok(())
    }

    /// L(t, X). Coefficients must be nonnegative at runtime; callers that
    /// integrate check this via [`LipschitzEnvelope::check_nonnegative`].
    pub fn eval(&self, t: f64, x_norm: f64) -> f64 {
        match self {
            LipschitzEnvelope::Linear { l, .. } => l.eval(t) * x_norm,
            LipschitzEnvelope::PowerSeries { terms, .. } => terms
                .iter()
                .map(|term| term.coefficient.eval(t) * x_norm.powf(term.exponent))
                .sum(),
        }
    }

    pub fn check_nonnegative(&self, times: &[f64]) -> Result<(), BoundsError> {
        let coeffs: Vec<&QuasiPeriodicScalar> = match self {
            LipschitzEnvelope::Linear { l, .. } => vec![l],
            LipschitzEnvelope::PowerSeries { terms, .. } => {
                terms.iter().map(|term| &term.coefficient).collect()
            }
        };
        for &t in times {
            for c in &coeffs {
                if c.eval(t) < 0.0 {
                    return Err(BoundsError::NegativeCoefficient { t });
                }
            }
        }
        Ok(())
    }
}

/// Global polynomial envelope: each monomial of total degree d contributes
/// `|c|·X^d`; equal degrees merge by absolute-coefficient summation.
pub fn envelope_from_polynomial(f: &PolynomialVectorField) -> LipschitzEnvelope {
    let mut by_degree: Vec<(u32, f64)> = Vec::new();
    for term in f.terms() {
        let d = term.total_degree();
        match by_degree.iter_mut().find(|(deg, _)| *deg == d) {
            Some((_, c)) => *c += term.coefficient.abs(),
            None => by_degree.push((d, term.coefficient.abs())),
        }
    }
    by_degree.sort_by_key(|&(d, _)| d);
    LipschitzEnvelope::PowerSeries {
        terms: by_degree
            .into_iter()
            .map(|(d, c)| EnvelopeTerm {
                coefficient: QuasiPeriodicScalar::constant(c),
                exponent: d as f64,
            })
            .collect(),
        region_radius: None,
    }
}

/// Lipschitz constant for the benchmark from the energy integral of the
/// frozen undamped model: `E = (x₂² + ω₀²x₁²)/2` decays, so
/// `sup|x₂| = √(x₂(0)² + ω₀²x₁(0)²)` and `l = |α₂|·(sup x₂)²`.
pub fn linear_l_from_energy(spec: &SystemSpec, x0: &DVector<f64>) -> Result<f64, BoundsError> {
    let params = spec
        .preset
        .ok_or_else(|| BoundsError::Unsupported("energy-based l needs the benchmark preset".into()))?;
    if x0.len() != 2 {
        return Err(BoundsError::InvalidInput("benchmark state is 2-dimensional".into()));
    }
    let sup_x2_sq = x0[1] * x0[1] + params.omega0 * params.omega0 * x0[0] * x0[0];
    Ok(params.alpha2.abs() * sup_x2_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Linear,
    Nonlinear,
}

/// Scalar upper bound sampled on the FundamentalData grid. Values past a
/// blow-up of the auxiliary equation are +∞.
#[derive(Debug, Clone)]
pub struct BoundTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: BoundKind,
    pub x0_norm: f64,
    pub blowup_time: Option<f64>,
}

fn series_on_grid(qps: &QuasiPeriodicScalar, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| qps.eval(t)).collect()
}

/// Theorem 1: `‖x_h‖ + ‖x_nh‖` with
/// `‖x_h‖ = ‖W(t)‖·‖W⁻¹(t0)x0‖·exp ∫k·l` and
/// `‖x_nh‖ = ∫θ(t,τ)k(τ)‖F(τ)‖dτ`, `θ = exp(c(t) − c(τ))`,
/// `c = ∫(p + k·l)`; all quadratures trapezoidal on the grid.
pub fn linear_bound(
    fd: &FundamentalData,
    l: &QuasiPeriodicScalar,
    forcing_norm: &[f64],
    x0: &DVector<f64>,
) -> Result<BoundTrajectory, BoundsError> {
    let m = fd.times.len();
    if forcing_norm.len() != m {
        return Err(BoundsError::GridMismatch);
    }
    let l_grid = series_on_grid(l, &fd.times);
    if let Some(&t) = fd.times.iter().zip(l_grid.iter()).find(|(_, &v)| v < 0.0).map(|(t, _)| t) {
        return Err(BoundsError::NegativeCoefficient { t });
    }
    let kl: Vec<f64> = fd.k.iter().zip(l_grid.iter()).map(|(k, l)| k * l).collect();
    let cum_kl = cumulative_trapezoid(&kl, &fd.times);
    let x0_norm = fd.initial_scalar_bound(x0);

    let pkl: Vec<f64> = fd.p.iter().zip(kl.iter()).map(|(p, kl)| p + kl).collect();
    let c = cumulative_trapezoid(&pkl, &fd.times);
    // x_nh(t) = e^{c(t)} * cumtrapz(e^{-c} k ‖F‖)
    let integrand: Vec<f64> = (0..m).map(|i| (-c[i]).exp() * fd.k[i] * forcing_norm[i]).collect();
    let cum_f = cumulative_trapezoid(&integrand, &fd.times);

    let values = (0..m)
        .map(|i| {
            let xh = fd.sigma_max[i] / fd.sigma_max[0] * x0_norm * cum_kl[i].exp();
            let xnh = c[i].exp() * cum_f[i];
            xh + xnh
        })
        .collect();

    Ok(BoundTrajectory {
        times: fd.times.clone(),
        values,
        kind: BoundKind::Linear,
        x0_norm,
        blowup_time: None,
    })
}

fn lerp(times: &[f64], values: &[f64], t: f64) -> f64 {
    let m = times.len();
    if t <= times[0] {
        return values[0];
    }
    if t >= times[m - 1] {
        return values[m - 1];
    }
    let h = times[1] - times[0];
    let idx = (((t - times[0]) / h) as usize).min(m - 2);
    let w = (t - times[idx]) / (times[idx + 1] - times[idx]);
    values[idx] * (1.0 - w) + values[idx + 1] * w
}

/// Integrates the auxiliary equation `Ẋ = p(t)X + k(t)L(t,X) + k(t)‖F(t)‖`
/// from X(t0) = X0 on the FundamentalData grid. p, k, ‖F‖ are interpolated
/// linearly between grid samples. Blow-up (escape radius) is flagged, not
/// fatal; values past it are +∞.
pub fn auxiliary_solve(
    fd: &FundamentalData,
    envelope: &LipschitzEnvelope,
    forcing_norm: &[f64],
    x0: f64,
    cfg: &IntegratorConfig,
) -> Result<BoundTrajectory, BoundsError> {
    if !(x0 >= 0.0) {
        return Err(BoundsError::InvalidInput("X0 must be nonnegative".into()));
    }
    envelope.validate()?;
    envelope.check_nonnegative(&fd.times)?;
    let m = fd.times.len();
    if forcing_norm.len() != m {
        return Err(BoundsError::GridMismatch);
    }

    let times = &fd.times;
    let mut rhs = |t: f64, x: &DVector<f64>, out: &mut DVector<f64>| {
        let p = lerp(times, &fd.p, t);
        let k = lerp(times, &fd.k, t);
        let fnorm = lerp(times, forcing_norm, t);
        let xv = x[0].max(0.0);
        out[0] = p * xv + k * (envelope.eval(t, xv) + fnorm);
    };
    let solve_cfg = IntegratorConfig { grid_step: fd.grid_step(), ..*cfg };
    let outcome = integrate_ivp_partial(
        &mut rhs,
        fd.t0(),
        &DVector::from_vec(vec![x0]),
        fd.t_end(),
        &solve_cfg,
    )?;

    let mut values: Vec<f64> = outcome.trajectory.states.iter().map(|s| s[0]).collect();
    let blowup_time = match outcome.abort {
        None => None,
        Some(a) => {
            // step underflow on this monotone-escape scalar equation is also
            // a blow-up signature
            let _ = matches!(a.kind, AbortKind::EscapeRadius);
            Some(a.t)
        }
    };
    if blowup_time.is_some() {
        values.resize(m, f64::INFINITY);
    }
    Ok(BoundTrajectory {
        times: fd.times.clone(),
        values,
        kind: BoundKind::Nonlinear,
        x0_norm: x0,
        blowup_time,
    })
}

/// Exact solution of `Ẋ = p·X + k·c·X^α` (the F = 0, constant-coefficient
/// case) via the Bernoulli substitution `u = X^{1−α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BernoulliOutcome {
    Value(f64),
    BlownUp { at: f64 },
}

pub fn bernoulli_blowup_time(
    p: f64,
    k: f64,
    c: f64,
    alpha: f64,
    x0: f64,
) -> Result<Option<f64>, BoundsError> {
    if !(alpha > 1.0) {
        return Err(BoundsError::Unsupported("Bernoulli closed form needs alpha > 1".into()));
    }
    if !(c >= 0.0) || !(x0 >= 0.0) {
        return Err(BoundsError::InvalidInput("c and X0 must be nonnegative".into()));
    }
    if x0 == 0.0 || k * c == 0.0 {
        return Ok(None);
    }
    let gamma = (1.0 - alpha) * p;
    let u0 = x0.powf(1.0 - alpha);
    if p == 0.0 {
        // u(t) = u0 + (1-alpha) k c t, hits zero at finite positive time
        return Ok(Some(u0 / ((alpha - 1.0) * k * c)));
    }
    let q = k * c / p;
    // u(t) = (u0 + q) e^{gamma t} - q = 0
    let ratio = q / (u0 + q);
    if ratio > 0.0 {
        let t_star = ratio.ln() / gamma;
        if t_star > 0.0 {
            return Ok(Some(t_star));
        }
    }
    Ok(None)
}

pub fn bernoulli_closed_form(
    p: f64,
    k: f64,
    c: f64,
    alpha: f64,
    x0: f64,
    t: f64,
) -> Result<BernoulliOutcome, BoundsError> {
    if c == 0.0 {
        if !(alpha > 1.0) {
            return Err(BoundsError::Unsupported("Bernoulli closed form needs alpha > 1".into()));
        }
        return Ok(BernoulliOutcome::Value(x0 * (p * t).exp()));
    }
    if let Some(t_star) = bernoulli_blowup_time(p, k, c, alpha, x0)? {
        if t >= t_star {
            return Ok(BernoulliOutcome::BlownUp { at: t_star });
        }
    }
    if x0 == 0.0 {
        return Ok(BernoulliOutcome::Value(0.0));
    }
    let u0 = x0.powf(1.0 - alpha);
    let u = if p == 0.0 {
        u0 + (1.0 - alpha) * k * c * t
    } else {
        let q = k * c / p;
        (u0 + q) * ((1.0 - alpha) * p * t).exp() - q
    };
    Ok(BernoulliOutcome::Value(u.powf(1.0 / (1.0 - alpha))))
}

/// Pointwise dominance check of a bound over an actual trajectory norm.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// max over grid of ‖x(t)‖ − bound(t)
    pub max_violation: f64,
    pub first_violation_time: Option<f64>,
    /// first time the actual trajectory left the envelope's validity region
    pub region_excursion_time: Option<f64>,
    pub pass: bool,
}

pub fn verify_comparison(
    actual: &Trajectory,
    bound: &BoundTrajectory,
    region_radius: Option<f64>,
) -> Result<ComparisonReport, BoundsError> {
    if actual.times.len() != bound.times.len()
        || actual
            .times
            .iter()
            .zip(bound.times.iter())
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(BoundsError::GridMismatch);
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut first_violation_time = None;
    let mut region_excursion_time = None;
    for i in 0..actual.times.len() {
        let norm = actual.states[i].norm();
        let b = bound.values[i];
        if let Some(r) = region_radius {
            if norm > r && region_excursion_time.is_none() {
                region_excursion_time = Some(actual.times[i]);
            }
        }
        let violation = if b.is_infinite() { f64::NEG_INFINITY } else { norm - b };
        if violation > max_violation {
            max_violation = violation;
        }
        if violation > 1e-6 * (1.0 + b) && first_violation_time.is_none() {
            first_violation_time = Some(actual.times[i]);
        }
    }
    Ok(ComparisonReport {
        max_violation,
        first_violation_time,
        region_excursion_time,
        pass: first_violation_time.is_none(),
    })
}

#[derive(Debug, Clone)]
pub struct CriterionVerdict {
    pub pass: bool,
    pub first_violation_time: Option<f64>,
}

/// Corollary 1-4 evaluation on the computed grid.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Corollary 1: `‖W‖k·l + d‖W‖/dt < 0` pointwise, i.e. p + k·l < 0.
    pub corollary1: CriterionVerdict,
    /// Corollary 2: best ν₁ = sup of −(p + k·l); pass iff ν₁ > 0.
    pub corollary2_nu1: f64,
    pub chi_bar_max: f64,
    pub chi_star: f64,
    /// χ̂ = χ̄_max + χ⁎
    pub chi_hat: f64,
    /// Corollary 3: exponentially stable iff χ̂ < 0; uniformly so if the
    /// spectral floor is positive.
    pub corollary3_pass: bool,
    pub spectral_floor: f64,
    /// Corollary 4 forced-bound estimate F₀M/λ; None when χ̂ ≥ 0 or F ≡ 0.
    pub corollary4_bound: Option<f64>,
}

pub fn stability_report(
    fd: &FundamentalData,
    l: &QuasiPeriodicScalar,
    forcing_norm: &[f64],
    tail_fraction: f64,
) -> Result<StabilityReport, BoundsError> {
    let m = fd.times.len();
    if forcing_norm.len() != m {
        return Err(BoundsError::GridMismatch);
    }
    let l_grid = series_on_grid(l, &fd.times);
    let kl: Vec<f64> = fd.k.iter().zip(l_grid.iter()).map(|(k, l)| k * l).collect();
    let pkl: Vec<f64> = fd.p.iter().zip(kl.iter()).map(|(p, kl)| p + kl).collect();

    let first_violation_time = fd
        .times
        .iter()
        .zip(pkl.iter())
        .find(|(_, &v)| v >= 0.0)
        .map(|(&t, _)| t);
    let corollary1 =
        CriterionVerdict { pass: first_violation_time.is_none(), first_violation_time };

    let corollary2_nu1 = -pkl.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let chi_bar_max = estimate_max_lyapunov(fd, tail_fraction);
    // tail proxy of t⁻¹ ∫ k·l
    let cum_kl = cumulative_trapezoid(&kl, &fd.times);
    let t0 = fd.t0();
    let span = fd.t_end() - t0;
    let cut = fd.t_end() - tail_fraction.clamp(0.01, 0.99) * span;
    let chi_star = fd
        .times
        .iter()
        .zip(cum_kl.iter())
        .filter(|(&t, _)| t >= cut && t > t0)
        .map(|(&t, &c)| c / (t - t0))
        .fold(f64::NEG_INFINITY, f64::max);
    let chi_hat = chi_bar_max + chi_star;

    let floor = spectral_floor(fd);
    let corollary3_pass = chi_hat < 0.0;

    let f0 = forcing_norm.iter().cloned().fold(0.0f64, f64::max);
    let corollary4_bound = if chi_hat < 0.0 && f0 > 0.0 {
        let epsilon = 0.1 * chi_hat.abs();
        let lambda = -(chi_hat + epsilon);
        // M = sup over t >= tau of theta(t,tau) e^{lambda (t-tau)}
        //   = exp(max_t [g(t) - min_{tau<=t} g(tau)]),  g = c + lambda t
        let c = cumulative_trapezoid(&pkl, &fd.times);
        let mut running_min = f64::INFINITY;
        let mut best = 0.0f64;
        for i in 0..m {
            let g = c[i] + lambda * fd.times[i];
            running_min = running_min.min(g);
            best = best.max(g - running_min);
        }
        let m_const = best.exp();
        Some(f0 * m_const / lambda)
    } else {
        None
    };

    Ok(StabilityReport {
        corollary1,
        corollary2_nu1,
        chi_bar_max,
        chi_star,
        chi_hat,
        corollary3_pass,
        spectral_floor: floor,
        corollary4_bound,
    })
}

/// CSV with presence flags in the header row.
pub fn write_bounds_csv(
    times: &[f64],
    actual_norm: Option<&[f64]>,
    linear: Option<&BoundTrajectory>,
    nonlinear: Option<&BoundTrajectory>,
    mut out: impl Write,
) -> Result<(), BoundsError> {
    let mut cols = vec!["t [time]".to_string()];
    if actual_norm.is_some() {
        cols.push("actual_norm [1]".into());
    }
    if linear.is_some() {
        cols.push("linear_bound [1]".into());
    }
    if nonlinear.is_some() {
        cols.push("nonlinear_bound [1]".into());
    }
    writeln!(out, "# {}", cols.join(", "))?;
    for i in 0..times.len() {
        let mut row = vec![format!("{:.12e}", times[i])];
        if let Some(a) = actual_norm {
            row.push(format!("{:.12e}", a[i]));
        }
        if let Some(b) = linear {
            row.push(format!("{:.12e}", b.values[i]));
        }
        if let Some(b) = nonlinear {
            row.push(format!("{:.12e}", b.values[i]));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
