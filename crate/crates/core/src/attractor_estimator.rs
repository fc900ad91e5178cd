//! Trapping/stability-region estimates via frozen-supremum coefficients,
//! averaged coefficients with a measured μ margin, and numerical
//! splitting-value search on the scalar auxiliary equation; plus the mapping
//! from scalar radii to ellipsoids of initial conditions.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bounds_engine::{auxiliary_solve, BoundsError, LipschitzEnvelope};
use crate::integrator::{integrate_ivp_partial, IntegratorConfig};
use crate::linear_analysis::{cumulative_trapezoid, FundamentalData};
use crate::system_model::SystemSpec;

#[derive(Debug, Error)]
pub enum AttractorError {
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Integrate(#[from] crate::integrator::IntegrateError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("averaging window {window} exceeds computed horizon {horizon}")]
    WindowExceedsHorizon { window: f64, horizon: f64 },
    #[error("bracket invalid: {0}")]
    BracketFailure(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Supremum,
    Average { window: f64, converged: bool },
}

/// Constant coefficients for the time-invariant comparison equation
/// `Q(X) = p̂·X + k̂·(L̂(X) + F̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCoefficients {
    pub p_hat: f64,
    pub k_hat: f64,
    /// (c_hat ≥ 0, exponent ≥ 1) pairs of the frozen envelope.
    pub l_hat: Vec<(f64, f64)>,
    pub f_hat: f64,
    pub provenance: Provenance,
}

impl FrozenCoefficients {
    pub fn q(&self, x: f64) -> f64 {
        let l: f64 = self.l_hat.iter().map(|&(c, e)| c * x.powf(e)).sum();
        self.p_hat * x + self.k_hat * (l + self.f_hat)
    }

    /// Default root-scan ceiling: 10× the largest balance scale
    /// `(|p̂|/ĉ)^{1/(e−1)}` over superlinear terms, floored at 10.
    pub fn default_scan_ceiling(&self) -> f64 {
        let mut ceiling = 1.0f64;
        for &(c, e) in &self.l_hat {
            if e > 1.0 && c > 0.0 && self.p_hat != 0.0 {
                ceiling = ceiling.max((self.p_hat.abs() / c).powf(1.0 / (e - 1.0)));
            }
        }
        (10.0 * ceiling).max(10.0)
    }
}

fn frozen_terms_sup(envelope: &LipschitzEnvelope) -> Vec<(f64, f64)> {
    match envelope {
        LipschitzEnvelope::Linear { l, .. } => vec![(l.amplitude_bound(), 1.0)],
        LipschitzEnvelope::PowerSeries { terms, .. } => terms
            .iter()
            .map(|t| (t.coefficient.amplitude_bound(), t.exponent))
            .collect(),
    }
}

/// Supremum freezing: grid maxima for p, k, ‖F‖ and the analytic amplitude
/// bound `|offset| + Σ|amplitude|` for each envelope coefficient.
pub fn freeze_sup(
    fd: &FundamentalData,
    envelope: &LipschitzEnvelope,
    forcing_norm: &[f64],
) -> Result<FrozenCoefficients, AttractorError> {
    if forcing_norm.len() != fd.times.len() {
        return Err(AttractorError::InvalidInput("forcing grid mismatch".into()));
    }
    let max = |s: &[f64]| s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(FrozenCoefficients {
        p_hat: max(&fd.p),
        k_hat: max(&fd.k),
        l_hat: frozen_terms_sup(envelope),
        f_hat: max(forcing_norm).max(0.0),
        provenance: Provenance::Supremum,
    })
}

/// Trapezoidal mean of grid samples over [t0, t0 + window].
fn windowed_mean(times: &[f64], series: &[f64], window: f64) -> f64 {
    let t0 = times[0];
    let mut area = 0.0;
    let mut span = 0.0;
    for i in 1..times.len() {
        if times[i] > t0 + window + 1e-12 {
            break;
        }
        let h = times[i] - times[i - 1];
        area += 0.5 * h * (series[i] + series[i - 1]);
        span += h;
    }
    if span == 0.0 {
        series[0]
    } else {
        area / span
    }
}

/// Averaged freezing: trapezoidal means over [t0, t0 + window] of p, k, ‖F‖
/// and each envelope coefficient. The convergence flag compares means over
/// the full window and its half; both within 1% (relative to the full-window
/// mean scale) set it.
pub fn freeze_avg(
    fd: &FundamentalData,
    envelope: &LipschitzEnvelope,
    forcing_norm: &[f64],
    window: f64,
) -> Result<FrozenCoefficients, AttractorError> {
    if forcing_norm.len() != fd.times.len() {
        return Err(AttractorError::InvalidInput("forcing grid mismatch".into()));
    }
    let horizon = fd.t_end() - fd.t0();
    if window > horizon + 1e-9 {
        return Err(AttractorError::WindowExceedsHorizon { window, horizon });
    }
    if !(window > 0.0) {
        return Err(AttractorError::InvalidInput("window must be positive".into()));
    }

    let coeff_series: Vec<(Vec<f64>, f64)> = match envelope {
        LipschitzEnvelope::Linear { l, .. } => {
            vec![(fd.times.iter().map(|&t| l.eval(t)).collect(), 1.0)]
        }
        LipschitzEnvelope::PowerSeries { terms, .. } => terms
            .iter()
            .map(|term| {
                (fd.times.iter().map(|&t| term.coefficient.eval(t)).collect(), term.exponent)
            })
            .collect(),
    };

    let mut converged = true;
    let mut mean_pair = |series: &[f64]| -> f64 {
        let full = windowed_mean(&fd.times, series, window);
        let half = windowed_mean(&fd.times, series, 0.5 * window);
        if (full - half).abs() > 0.01 * (full.abs() + 1e-9) {
            converged = false;
        }
        full
    };

    let p_hat = mean_pair(&fd.p);
    let k_hat = mean_pair(&fd.k);
    let f_hat = mean_pair(forcing_norm).max(0.0);
    let l_hat = coeff_series
        .iter()
        .map(|(series, e)| (mean_pair(series).max(0.0), *e))
        .collect();

    Ok(FrozenCoefficients {
        p_hat,
        k_hat,
        l_hat,
        f_hat,
        provenance: Provenance::Average { window, converged },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootClass {
    Stable,
    Unstable,
    Semistable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedRoot {
    pub value: f64,
    pub class: RootClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    /// Sorted ascending.
    pub roots: Vec<ClassifiedRoot>,
    pub x_max: f64,
}

/// Positive roots of Q(X) = 0 on (0, X_max], found on a geometric-plus-linear
/// scan grid with bisection refinement to 1e-10 relative; tangential
/// (no-sign-change) minima of |Q| below tolerance are reported semistable.
pub fn find_roots(frozen: &FrozenCoefficients, x_max: f64) -> Result<RootSet, AttractorError> {
    if !(x_max > 0.0) {
        return Err(AttractorError::InvalidInput("X_max must be positive".into()));
    }
    let mut grid: Vec<f64> = Vec::new();
    let lo = 1e-8 * x_max;
    let geo_n = 300;
    for i in 0..=geo_n {
        grid.push(lo * (x_max / lo).powf(i as f64 / geo_n as f64));
    }
    let lin_n = 600;
    for i in 1..=lin_n {
        grid.push(x_max * i as f64 / lin_n as f64);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * x_max);

    let qs: Vec<f64> = grid.iter().map(|&x| frozen.q(x)).collect();
    let q_scale = |x: f64| 1.0 + frozen.p_hat.abs() * x + frozen.k_hat * frozen.f_hat;

    let mut roots: Vec<ClassifiedRoot> = Vec::new();
    let mut push_root = |value: f64, class: RootClass| {
        let sep = 1e-6 * x_max;
        if roots.iter().all(|r| (r.value - value).abs() > sep) {
            roots.push(ClassifiedRoot { value, class });
        }
    };

    // roots landing exactly on a grid point
    for i in 1..grid.len() - 1 {
        if qs[i] == 0.0 && qs[i - 1] != 0.0 && qs[i + 1] != 0.0 {
            let class = if qs[i - 1] * qs[i + 1] > 0.0 {
                RootClass::Semistable
            } else if qs[i - 1] > 0.0 {
                RootClass::Stable
            } else {
                RootClass::Unstable
            };
            push_root(grid[i], class);
        }
    }

    for i in 1..grid.len() {
        let (qa, qb) = (qs[i - 1], qs[i]);
        if qa == 0.0 || qb == 0.0 {
            continue; // handled by the exact-zero pass
        }
        if qa * qb < 0.0 {
            let (mut a, mut b) = (grid[i - 1], grid[i]);
            let mut fa = qa;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = frozen.q(m);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
                if b - a <= 1e-10 * b.max(1e-300) {
                    break;
                }
            }
            let d = 0.5 * (a + b);
            let class = if qa > 0.0 { RootClass::Stable } else { RootClass::Unstable };
            push_root(d, class);
        }
    }

    // tangential roots: interior |Q| local minima without sign change,
    // refined by golden-section before the tolerance test
    for i in 1..grid.len() - 1 {
        if qs[i].abs() <= 1e-2 * q_scale(grid[i])
            && qs[i].abs() <= qs[i - 1].abs()
            && qs[i].abs() <= qs[i + 1].abs()
            && qs[i - 1] * qs[i + 1] > 0.0
        {
            let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
            let phi = 0.5 * (3.0 - 5.0f64.sqrt());
            let (mut x1, mut x2) = (a + phi * (b - a), b - phi * (b - a));
            let (mut f1, mut f2) = (frozen.q(x1).abs(), frozen.q(x2).abs());
            for _ in 0..120 {
                if f1 < f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = a + phi * (b - a);
                    f1 = frozen.q(x1).abs();
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = b - phi * (b - a);
                    f2 = frozen.q(x2).abs();
                }
            }
            let x_min = 0.5 * (a + b);
            if frozen.q(x_min).abs() <= 1e-8 * q_scale(x_min) {
                push_root(x_min, RootClass::Semistable);
            }
        }
    }

    roots.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
    Ok(RootSet { roots, x_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Frozen,
    Averaged,
    NumericSplitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremCase {
    Thm3Case1,
    Thm3Case2,
    Thm4Case1,
    Thm4Case2,
    Thm5Case1,
    Thm5Case2,
    Thm5Case3,
    Cor5Case1,
    Cor5Case2,
    Growth,
    Inconclusive,
}

impl TheoremCase {
    pub fn label(self) -> &'static str {
        match self {
            TheoremCase::Thm3Case1 => "thm3-case1",
            TheoremCase::Thm3Case2 => "thm3-case2",
            TheoremCase::Thm4Case1 => "thm4-case1",
            TheoremCase::Thm4Case2 => "thm4-case2",
            TheoremCase::Thm5Case1 => "thm5-case1",
            TheoremCase::Thm5Case2 => "thm5-case2",
            TheoremCase::Thm5Case3 => "thm5-case3",
            TheoremCase::Cor5Case1 => "cor5-case1",
            TheoremCase::Cor5Case2 => "cor5-case2",
            TheoremCase::Growth => "growth",
            TheoremCase::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttractorReport {
    pub method: Method,
    pub case: TheoremCase,
    pub roots: RootSet,
    /// Measured averaging margin; only for the averaged method.
    pub mu: Option<f64>,
    /// Largest safe initial scalar bound X0 (after the μ shrink when
    /// averaged): a basin of attraction (F̂ = 0) or basin of eventual
    /// trapping (F̂ ≠ 0).
    pub basin_radius: Option<f64>,
    /// Asymptotic bound: limsup ‖x‖ ≤ trapping_level·‖W(t)‖-scale (after the
    /// μ inflation when averaged).
    pub trapping_level: Option<f64>,
    /// Set when a μ shrink produced a non-positive radius.
    pub inconclusive: bool,
}

const F_HAT_ZERO_TOL: f64 = 1e-12;

/// Maps the root configuration to the applicable theorem case and effective
/// radii. For averaged coefficients the margin μ shrinks basin radii and
/// inflates trapping levels; a non-positive shrunk radius marks the report
/// inconclusive.
pub fn classify_report(
    roots: &RootSet,
    frozen: &FrozenCoefficients,
    mu: Option<f64>,
) -> Result<AttractorReport, AttractorError> {
    let averaged = matches!(frozen.provenance, Provenance::Average { .. });
    if averaged && mu.is_none() {
        return Err(AttractorError::InvalidInput("averaged classification needs mu".into()));
    }
    if !averaged && mu.is_some() {
        return Err(AttractorError::InvalidInput("mu only applies to averaged coefficients".into()));
    }
    let margin = mu.unwrap_or(0.0);
    if margin < 0.0 {
        return Err(AttractorError::InvalidInput("mu must be nonnegative".into()));
    }
    let forced = frozen.f_hat > F_HAT_ZERO_TOL;
    let method = if averaged { Method::Averaged } else { Method::Frozen };

    let mk = |case: TheoremCase, basin: Option<f64>, trap: Option<f64>| {
        let basin_eff = basin.map(|d| d - margin);
        let trap_eff = trap.map(|d| d + margin);
        let inconclusive = basin_eff.map_or(false, |d| d <= 0.0);
        AttractorReport {
            method,
            case,
            roots: roots.clone(),
            mu,
            basin_radius: basin_eff,
            trapping_level: trap_eff,
            inconclusive,
        }
    };

    let classes: Vec<RootClass> = roots.roots.iter().map(|r| r.class).collect();
    let vals: Vec<f64> = roots.roots.iter().map(|r| r.value).collect();

    let report = if !forced {
        match classes.as_slice() {
            [] => {
                if frozen.p_hat > 0.0 || frozen.q(0.5 * roots.x_max) > 0.0 {
                    mk(TheoremCase::Growth, None, None)
                } else {
                    // Q < 0 on the whole scan range: decay everywhere probed
                    let case =
                        if averaged { TheoremCase::Thm5Case2 } else { TheoremCase::Cor5Case1 };
                    mk(case, Some(roots.x_max), Some(0.0))
                }
            }
            [RootClass::Unstable] => {
                let case = if averaged { TheoremCase::Thm5Case2 } else { TheoremCase::Thm3Case1 };
                mk(case, Some(vals[0]), Some(0.0))
            }
            [RootClass::Stable] => {
                let case = if averaged { TheoremCase::Thm5Case3 } else { TheoremCase::Thm3Case2 };
                mk(case, None, Some(vals[0]))
            }
            [RootClass::Semistable] => mk(TheoremCase::Thm4Case2, Some(vals[0]), Some(vals[0])),
            _ => mk(TheoremCase::Inconclusive, None, None),
        }
    } else {
        match classes.as_slice() {
            [] => mk(TheoremCase::Growth, None, None),
            [RootClass::Stable, RootClass::Unstable] => {
                // d2 = lower stable (asymptotic level), d1 = upper unstable
                let case = if averaged { TheoremCase::Thm5Case1 } else { TheoremCase::Thm4Case1 };
                mk(case, Some(vals[1]), Some(vals[0]))
            }
            [RootClass::Semistable] => {
                let case = if averaged { TheoremCase::Thm5Case3 } else { TheoremCase::Thm4Case2 };
                mk(case, Some(vals[0]), Some(vals[0]))
            }
            [RootClass::Stable] => {
                let case = if averaged { TheoremCase::Thm5Case3 } else { TheoremCase::Cor5Case2 };
                mk(case, None, Some(vals[0]))
            }
            _ => mk(TheoremCase::Inconclusive, None, None),
        }
    };
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuEstimate {
    pub mu: f64,
    /// False when every measurement strategy degraded to the perturbed-start
    /// fallback and both perturbed branches escaped before a usable window.
    pub reliable: bool,
}

/// Measures the radius μ of the neighbourhood of an averaged root d that
/// contains the matching bounded solution of the time-varying auxiliary
/// equation.
///
/// Stable roots: integrate forward from X0 = d (the bounded solution is
/// attracting) and take sup |X(t) − d| after a transient-skip window.
///
/// Unstable roots: the bounded solution is the splitting solution, so the
/// averaged prediction is refined against the numerically determined
/// splitting value X̂ of the auxiliary equation, μ = |d − X̂|, plus the
/// fluctuation amplitude of the integrated forcing term
/// sup_t |∫ k(‖F‖ − mean) ds|. When the forced equation admits no bounded
/// solutions at all (strong forcing pumps every start past the threshold),
/// the splitting value of the unforced equation is used instead and the
/// forcing fluctuation term accounts for the difference. If no splitting
/// bracket can be established either way, fall back to perturbed starts
/// d·(1 ± 1e-3) and the sup deviation over the window before either branch
/// escapes |X − d| > d/2.
pub fn estimate_mu(
    fd: &FundamentalData,
    envelope: &LipschitzEnvelope,
    forcing_norm: &[f64],
    d: f64,
    class: RootClass,
    cfg: &IntegratorConfig,
) -> Result<MuEstimate, AttractorError> {
    if !(d > 0.0) {
        return Err(AttractorError::InvalidInput("root must be positive".into()));
    }
    let span = fd.t_end() - fd.t0();
    let skip = (0.1 * span).min(10.0);
    let skip_idx = fd.times.iter().position(|&t| t >= fd.t0() + skip).unwrap_or(0);

    match class {
        RootClass::Stable | RootClass::Semistable => {
            let sol = auxiliary_solve(fd, envelope, forcing_norm, d, cfg)?;
            if sol.blowup_time.is_some() {
                return Ok(MuEstimate { mu: f64::INFINITY, reliable: false });
            }
            let mu = sol.values[skip_idx..]
                .iter()
                .map(|&x| (x - d).abs())
                .fold(0.0f64, f64::max);
            Ok(MuEstimate { mu, reliable: true })
        }
        RootClass::Unstable => {
            // Fluctuation amplitude of the integrated forcing term: the
            // deviation of ∫ k‖F‖ from its linear trend. Zero for constant
            // (in particular absent) forcing.
            let kf: Vec<f64> =
                fd.k.iter().zip(forcing_norm).map(|(&k, &f)| k * f).collect();
            let c = cumulative_trapezoid(&kf, &fd.times);
            let mean = c[c.len() - 1] / span;
            let mu_f = fd
                .times
                .iter()
                .zip(&c)
                .map(|(&t, &ci)| (ci - mean * (t - fd.t0())).abs())
                .fold(0.0f64, f64::max);

            let has_forcing = forcing_norm.iter().any(|&f| f != 0.0);
            let criterion = if has_forcing {
                SplitCriterion::StaysBounded
            } else {
                SplitCriterion::DecaysToZero
            };
            let (x_lo, x_hi) = (0.05 * d, 5.0 * d);
            let mut split = splitting_value_search(
                fd,
                envelope,
                forcing_norm,
                x_lo,
                x_hi,
                criterion,
                cfg,
            );
            if matches!(split, Err(AttractorError::BracketFailure(_))) && has_forcing {
                let unforced = vec![0.0; forcing_norm.len()];
                split = splitting_value_search(
                    fd,
                    envelope,
                    &unforced,
                    x_lo,
                    x_hi,
                    SplitCriterion::DecaysToZero,
                    cfg,
                );
            }
            match split {
                Ok(x_hat) => {
                    Ok(MuEstimate { mu: (d - x_hat).abs() + mu_f, reliable: true })
                }
                Err(AttractorError::BracketFailure(_)) => {
                    perturbed_start_mu(fd, envelope, forcing_norm, d, skip_idx, cfg)
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Last-resort μ measurement: start from d·(1 ± 1e-3) and take the sup
/// deviation over the window before either branch escapes |X − d| > d/2.
fn perturbed_start_mu(
    fd: &FundamentalData,
    envelope: &LipschitzEnvelope,
    forcing_norm: &[f64],
    d: f64,
    skip_idx: usize,
    cfg: &IntegratorConfig,
) -> Result<MuEstimate, AttractorError> {
    let eps = 1e-3;
    let lo = auxiliary_solve(fd, envelope, forcing_norm, d * (1.0 - eps), cfg)?;
    let hi = auxiliary_solve(fd, envelope, forcing_norm, d * (1.0 + eps), cfg)?;
    let escape_idx = |sol: &crate::bounds_engine::BoundTrajectory| {
        sol.values
            .iter()
            .position(|&x| !x.is_finite() || (x - d).abs() > 0.5 * d)
            .unwrap_or(sol.values.len())
    };
    let escape = escape_idx(&lo).min(escape_idx(&hi));
    // the kick grows exponentially toward the escape threshold, so the
    // deviations just before escape measure the instability, not the
    // averaging error; keep only the first half of the pre-escape window
    // when an escape occurred
    let window_end = if escape < lo.values.len() { (escape / 2).max(1) } else { escape };
    let skip_idx = skip_idx.min(window_end / 2);
    if window_end <= 1 {
        return Ok(MuEstimate { mu: f64::INFINITY, reliable: false });
    }
    let mu = lo.values[skip_idx..window_end]
        .iter()
        .chain(hi.values[skip_idx..window_end].iter())
        .map(|&x| (x - d).abs())
        .fold(0.0f64, f64::max);
    Ok(MuEstimate { mu, reliable: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCriterion {
    /// X(horizon) < 1e-3·X0 without blow-up.
    DecaysToZero,
    /// Never exceeds the escape radius.
    StaysBounded,
}

fn criterion_holds(
    fd: &FundamentalData,
    envelope: &LipschitzEnvelope,
    forcing_norm: &[f64],
    x0: f64,
    criterion: SplitCriterion,
    cfg: &IntegratorConfig,
) -> Result<bool, AttractorError> {
    let sol = auxiliary_solve(fd, envelope, forcing_norm, x0, cfg)?;
    Ok(match criterion {
        SplitCriterion::DecaysToZero => {
            sol.blowup_time.is_none() && *sol.values.last().unwrap() < 1e-3 * x0
        }
        SplitCriterion::StaysBounded => sol.blowup_time.is_none(),
    })
}

/// Bisection on the auxiliary-equation initial value X0 for the largest value
/// still satisfying the criterion; the bracket must verify (holds at X_lo,
/// fails at X_hi). Resolution 1e-4 relative; returns the criterion-preserving
/// endpoint.
pub fn splitting_value_search(
    fd: &FundamentalData,
    envelope: &LipschitzEnvelope,
    forcing_norm: &[f64],
    x_lo: f64,
    x_hi: f64,
    criterion: SplitCriterion,
    cfg: &IntegratorConfig,
) -> Result<f64, AttractorError> {
    if !(0.0 < x_lo && x_lo < x_hi) {
        return Err(AttractorError::InvalidInput("need 0 < X_lo < X_hi".into()));
    }
    if !criterion_holds(fd, envelope, forcing_norm, x_lo, criterion, cfg)? {
        return Err(AttractorError::BracketFailure(format!(
            "criterion fails at the lower bracket X_lo = {x_lo}"
        )));
    }
    if criterion_holds(fd, envelope, forcing_norm, x_hi, criterion, cfg)? {
        return Err(AttractorError::BracketFailure(format!(
            "criterion still holds at the upper bracket X_hi = {x_hi}"
        )));
    }
    let (mut lo, mut hi) = (x_lo, x_hi);
    while hi - lo > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if criterion_holds(fd, envelope, forcing_norm, mid, criterion, cfg)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Set of admissible initial conditions `{x0 : ‖W⁻¹(t0)x0‖ ≤ radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSpec {
    pub t0: f64,
    pub w0_inv: DMatrix<f64>,
    pub radius: f64,
}

impl EllipsoidSpec {
    pub fn contains(&self, x0: &DVector<f64>) -> bool {
        (&self.w0_inv * x0).norm() <= self.radius
    }

    /// Boundary point along the unit direction e: `radius·e / ‖W⁻¹(t0)e‖`.
    pub fn intercept(&self, e: &DVector<f64>) -> DVector<f64> {
        let unit = e / e.norm();
        let scale = self.radius / (&self.w0_inv * &unit).norm();
        unit * scale
    }

    /// Signed amplitude of the intercept along e.
    pub fn intercept_amplitude(&self, e: &DVector<f64>) -> f64 {
        let unit = e / e.norm();
        self.radius / (&self.w0_inv * unit).norm()
    }

    /// (angle, intercept amplitude) polyline for 2-D systems.
    pub fn boundary_polyline(&self, samples: usize) -> Vec<(f64, f64)> {
        (0..samples)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
                let e = DVector::from_vec(vec![angle.cos(), angle.sin()]);
                (angle, self.intercept_amplitude(&e))
            })
            .collect()
    }
}

pub fn map_to_ellipsoid(fd: &FundamentalData, radius: f64) -> Result<EllipsoidSpec, AttractorError> {
    if !(radius > 0.0) {
        return Err(AttractorError::InvalidInput("radius must be positive".into()));
    }
    Ok(EllipsoidSpec { t0: fd.t0(), w0_inv: fd.w0_inv().clone(), radius })
}

/// Critical initial amplitude s of `x0 = s·direction` for the full system:
/// the criterion is verified at both bracket ends, then bisected to 1e-3
/// relative. If the criterion still holds at s_hi the bracket ceiling is
/// returned (the whole probed ray qualifies).
pub fn direct_basin_probe(
    spec: &SystemSpec,
    direction: &DVector<f64>,
    s_lo: f64,
    s_hi: f64,
    horizon: f64,
    criterion: SplitCriterion,
    cfg: &IntegratorConfig,
) -> Result<f64, AttractorError> {
    if !(0.0 < s_lo && s_lo < s_hi) {
        return Err(AttractorError::InvalidInput("need 0 < s_lo < s_hi".into()));
    }
    let unit = direction / direction.norm();
    let mut rhs =
        |t: f64, x: &DVector<f64>, out: &mut DVector<f64>| spec.eval_rhs_into(t, x, out);
    let mut holds = |s: f64| -> Result<bool, AttractorError> {
        let x0 = &unit * s;
        let outcome = integrate_ivp_partial(&mut rhs, spec.t0, &x0, spec.t0 + horizon, cfg)?;
        Ok(match criterion {
            SplitCriterion::DecaysToZero => {
                outcome.abort.is_none()
                    && outcome.trajectory.states.last().unwrap().norm() < 1e-3 * s
            }
            SplitCriterion::StaysBounded => outcome.abort.is_none(),
        })
    };
    if !holds(s_lo)? {
        return Err(AttractorError::BracketFailure(format!(
            "criterion fails at the lower bracket s_lo = {s_lo}"
        )));
    }
    if holds(s_hi)? {
        return Ok(s_hi);
    }
    let (mut lo, mut hi) = (s_lo, s_hi);
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn method_label(method: Method) -> &'static str {
    match method {
        Method::Frozen => "frozen",
        Method::Averaged => "averaged",
        Method::NumericSplitting => "numeric-splitting",
    }
}

fn class_label(class: RootClass) -> &'static str {
    match class {
        RootClass::Stable => "stable",
        RootClass::Unstable => "unstable",
        RootClass::Semistable => "semistable",
    }
}

/// Root-table CSV: one row per root (or a single rootless summary row).
pub fn write_root_table_csv(
    reports: &[&AttractorReport],
    mut out: impl Write,
) -> Result<(), AttractorError> {
    writeln!(
        out,
        "# method [label], case [label], root [1], classification [label], mu [1], basin_radius [1], trapping_level [1]"
    )?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.12e}"));
    for report in reports {
        let prefix = format!("{},{}", method_label(report.method), report.case.label());
        if report.roots.roots.is_empty() {
            writeln!(
                out,
                "{prefix},nan,none,{},{},{}",
                opt(report.mu),
                opt(report.basin_radius),
                opt(report.trapping_level)
            )?;
        }
        for root in &report.roots.roots {
            writeln!(
                out,
                "{prefix},{:.12e},{},{},{},{}",
                root.value,
                class_label(root.class),
                opt(report.mu),
                opt(report.basin_radius),
                opt(report.trapping_level)
            )?;
        }
    }
    Ok(())
}
