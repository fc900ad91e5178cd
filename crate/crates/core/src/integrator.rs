//! Adaptive explicit integration of vector IVPs and of the matrix ODE for
//! the fundamental solution.
//!
//! Uses the Dormand-Prince 5(4) embedded pair. Steps are shortened to land
//! exactly on each output grid point, so grid samples are integration
//! endpoints rather than interpolants. The matrix ODE is flattened into an
//! n²-dimensional vector IVP so both entry points share one stepper.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("state norm exceeded escape radius at t = {t}")]
    Blowup { t: f64 },
    #[error("step size underflow at t = {t} (stiffness or blow-up)")]
    StepUnderflow { t: f64 },
    #[error("non-finite right-hand side at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Spacing of the uniform output grid.
    pub grid_step: f64,
    /// Integration aborts once the state norm exceeds this radius.
    pub escape_radius: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-12, max_step: 0.5, grid_step: 0.02, escape_radius: 1e6 }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(IntegrateError::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.grid_step > 0.0 && self.max_step > 0.0) {
            return Err(IntegrateError::InvalidInput("step sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Sampled solution on the uniform output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.norm()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MatrixTrajectory {
    pub times: Vec<f64>,
    pub matrices: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortKind {
    EscapeRadius,
    StepUnderflow,
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
pub struct Abort {
    pub kind: AbortKind,
    pub t: f64,
}

/// Partial integration result: the grid points reached before any abort.
#[derive(Debug, Clone)]
pub struct IvpOutcome {
    pub trajectory: Trajectory,
    pub abort: Option<Abort>,
}

/// Uniform grid from t0 to t_end; the spacing is adjusted slightly so the
/// grid lands on t_end exactly.
pub fn output_grid(t0: f64, t_end: f64, grid_step: f64) -> (usize, f64) {
    let span = t_end - t0;
    let m = ((span / grid_step).round().max(1.0)) as usize;
    (m, span / m as f64)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    rhs: &'a mut dyn FnMut(f64, &DVector<f64>, &mut DVector<f64>),
    stages: [DVector<f64>; 7],
    y_tmp: DVector<f64>,
    y5: DVector<f64>,
    y4: DVector<f64>,
    rel_tol: f64,
    abs_tol: f64,
}

enum StepResult {
    Accept { error_ratio: f64 },
    Reject { error_ratio: f64 },
    NonFinite,
}

impl<'a> Stepper<'a> {
    fn new(n: usize, rhs: &'a mut dyn FnMut(f64, &DVector<f64>, &mut DVector<f64>), cfg: &IntegratorConfig) -> Self {
        Self {
            rhs,
            stages: std::array::from_fn(|_| DVector::zeros(n)),
            y_tmp: DVector::zeros(n),
            y5: DVector::zeros(n),
            y4: DVector::zeros(n),
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
        }
    }

    /// One trial step from (t, y) with size h. On acceptance `self.y5` holds
    /// the new state. `k0_valid` signals that stages[0] already holds f(t, y).
    fn try_step(&mut self, t: f64, y: &DVector<f64>, h: f64, k0_valid: bool) -> StepResult {
        if !k0_valid {
            (self.rhs)(t, y, &mut self.stages[0]);
        }
        for stage in 1..7 {
            self.y_tmp.copy_from(y);
            for j in 0..stage {
                let a = if stage < 6 { A[stage - 1][j] } else { B5[j] };
                if a != 0.0 {
                    self.y_tmp.axpy(h * a, &self.stages[j], 1.0);
                }
            }
            let (head, tail) = self.stages.split_at_mut(stage);
            let _ = head;
            let y_tmp = &self.y_tmp;
            (self.rhs)(t + C[stage] * h, y_tmp, &mut tail[0]);
        }
        // 5th-order solution equals the stage-7 evaluation point (FSAL form).
        self.y5.copy_from(&self.y_tmp);
        self.y4.copy_from(y);
        for j in 0..7 {
            if B4[j] != 0.0 {
                self.y4.axpy(h * B4[j], &self.stages[j], 1.0);
            }
        }
        if self.y5.iter().any(|v| !v.is_finite()) || self.y4.iter().any(|v| !v.is_finite()) {
            return StepResult::NonFinite;
        }
        let mut acc = 0.0;
        for i in 0..y.len() {
            let scale = self.abs_tol + self.rel_tol * y[i].abs().max(self.y5[i].abs());
            let e = (self.y5[i] - self.y4[i]) / scale;
            acc += e * e;
        }
        let error_ratio = (acc / y.len() as f64).sqrt();
        if error_ratio <= 1.0 {
            StepResult::Accept { error_ratio }
        } else {
            StepResult::Reject { error_ratio }
        }
    }
}

/// Integrates to each grid point in turn, recording states as it goes.
/// Returns the partial trajectory together with any abort condition.
pub fn integrate_ivp_partial(
    rhs: &mut dyn FnMut(f64, &DVector<f64>, &mut DVector<f64>),
    t0: f64,
    x0: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<IvpOutcome, IntegrateError> {
    cfg.validate()?;
    if !(t_end > t0) {
        return Err(IntegrateError::InvalidInput("t_end must exceed t0".into()));
    }
    let n = x0.len();
    let (m, dt) = output_grid(t0, t_end, cfg.grid_step);

    let mut times = Vec::with_capacity(m + 1);
    let mut states = Vec::with_capacity(m + 1);
    times.push(t0);
    states.push(x0.clone());

    let mut stepper = Stepper::new(n, rhs, cfg);
    let mut t = t0;
    let mut y = x0.clone();
    let mut h = (cfg.max_step.min(dt)).min(t_end - t0);
    let mut k0_valid = false;
    let mut abort = None;

    'grid: for i in 1..=m {
        let t_out = t0 + i as f64 * dt;
        loop {
            if t >= t_out - 1e-12 * dt.max(1.0) {
                break;
            }
            let h_try = h.min(t_out - t).min(cfg.max_step);
            let h_min = 1e-14 * t.abs().max(1.0);
            if h_try < h_min {
                abort = Some(Abort { kind: AbortKind::StepUnderflow, t });
                break 'grid;
            }
            match stepper.try_step(t, &y, h_try, k0_valid) {
                StepResult::Accept { error_ratio } => {
                    t += h_try;
                    y.copy_from(&stepper.y5);
                    // FSAL: the last stage is f at the new point.
                    let (head, tail) = stepper.stages.split_at_mut(6);
                    head[0].copy_from(&tail[0]);
                    k0_valid = true;
                    let factor = if error_ratio > 0.0 {
                        (0.9 * error_ratio.powf(-0.2)).clamp(0.2, 5.0)
                    } else {
                        5.0
                    };
                    h = (h_try * factor).min(cfg.max_step);
                    if y.norm() > cfg.escape_radius {
                        abort = Some(Abort { kind: AbortKind::EscapeRadius, t });
                        break 'grid;
                    }
                }
                StepResult::Reject { error_ratio } => {
                    let factor = (0.9 * error_ratio.powf(-0.2)).clamp(0.1, 0.9);
                    h = h_try * factor;
                    k0_valid = true; // f(t, y) unchanged
                    if h < h_min {
                        abort = Some(Abort { kind: AbortKind::StepUnderflow, t });
                        break 'grid;
                    }
                }
                StepResult::NonFinite => {
                    // Retry with a smaller step; persistent failure underflows.
                    h = h_try * 0.25;
                    k0_valid = true;
                    if h < h_min {
                        abort = Some(Abort { kind: AbortKind::NonFinite, t });
                        break 'grid;
                    }
                }
            }
        }
        if abort.is_some() {
            break;
        }
        times.push(t_out);
        states.push(y.clone());
    }

    Ok(IvpOutcome { trajectory: Trajectory { times, states }, abort })
}

/// Integrates an IVP onto the uniform output grid. Any abort (escape radius,
/// step underflow, non-finite RHS) is reported as an error carrying the last
/// reached time.
pub fn integrate_ivp(
    rhs: &mut dyn FnMut(f64, &DVector<f64>, &mut DVector<f64>),
    t0: f64,
    x0: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    let outcome = integrate_ivp_partial(rhs, t0, x0, t_end, cfg)?;
    match outcome.abort {
        None => Ok(outcome.trajectory),
        Some(Abort { kind: AbortKind::EscapeRadius, t }) => Err(IntegrateError::Blowup { t }),
        Some(Abort { kind: AbortKind::StepUnderflow, t }) => {
            Err(IntegrateError::StepUnderflow { t })
        }
        Some(Abort { kind: AbortKind::NonFinite, t }) => Err(IntegrateError::NonFinite { t }),
    }
}

/// Integrates `Ẇ = A(t)W` from a nonsingular W0 by flattening W into an
/// n²-vector.
pub fn integrate_matrix_ode(
    a: &mut dyn FnMut(f64) -> DMatrix<f64>,
    w0: &DMatrix<f64>,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<MatrixTrajectory, IntegrateError> {
    let n = w0.nrows();
    if w0.ncols() != n {
        return Err(IntegrateError::InvalidInput("W0 must be square".into()));
    }
    let svd = w0.clone().svd(false, false);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(sigma_min > 0.0) {
        return Err(IntegrateError::InvalidInput("W0 must be nonsingular".into()));
    }

    let flat0 = DVector::from_column_slice(w0.as_slice());
    let mut a_t = a(t0);
    let mut t_cached = t0;
    let mut rhs = |t: f64, w_flat: &DVector<f64>, out: &mut DVector<f64>| {
        if t != t_cached {
            a_t = a(t);
            t_cached = t;
        }
        // column c of W' = A * column c of W
        for c in 0..n {
            for r in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += a_t[(r, j)] * w_flat[c * n + j];
                }
                out[c * n + r] = acc;
            }
        }
    };
    // Escape radius applies to the Frobenius norm of W; matrix runs use the
    // same cutoff as vector runs.
    let traj = integrate_ivp(&mut rhs, t0, &flat0, t_end, cfg)?;
    let matrices = traj
        .states
        .iter()
        .map(|flat| DMatrix::from_column_slice(n, n, flat.as_slice()))
        .collect();
    Ok(MatrixTrajectory { times: traj.times, matrices })
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn exponential_decay() {
        let mut rhs = |_t: f64, x: &DVector<f64>, out: &mut DVector<f64>| out[0] = -x[0];
        let traj =
            integrate_ivp(&mut rhs, 0.0, &DVector::from_vec(vec![1.0]), 1.0, &cfg()).unwrap();
        let last = traj.states.last().unwrap()[0];
        assert_relative_eq!(last, (-1.0f64).exp(), epsilon = 1e-7);
        assert_relative_eq!(*traj.times.last().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_rhs_constant_trajectory() {
        let mut rhs = |_t: f64, _x: &DVector<f64>, out: &mut DVector<f64>| out.fill(0.0);
        let x0 = DVector::from_vec(vec![2.0, -3.0]);
        let traj = integrate_ivp(&mut rhs, 0.0, &x0, 5.0, &cfg()).unwrap();
        for s in &traj.states {
            assert_eq!(s, &x0);
        }
    }

    #[test]
    fn quadratic_blowup_reported_near_one() {
        let mut rhs = |_t: f64, x: &DVector<f64>, out: &mut DVector<f64>| out[0] = x[0] * x[0];
        let err =
            integrate_ivp(&mut rhs, 0.0, &DVector::from_vec(vec![1.0]), 2.0, &cfg()).unwrap_err();
        match err {
            IntegrateError::Blowup { t } => assert!((t - 1.0).abs() < 0.01, "t = {t}"),
            other => panic!("expected blow-up, got {other}"),
        }
    }

    #[test]
    fn halving_tolerances_never_hurts() {
        // closed form x(t) = exp(sin t)
        let run = |rel: f64, abs: f64| {
            let mut rhs =
                |t: f64, x: &DVector<f64>, out: &mut DVector<f64>| out[0] = t.cos() * x[0];
            let c = IntegratorConfig { rel_tol: rel, abs_tol: abs, ..cfg() };
            let traj = integrate_ivp(&mut rhs, 0.0, &DVector::from_vec(vec![1.0]), 3.0, &c).unwrap();
            traj.times
                .iter()
                .zip(traj.states.iter())
                .map(|(t, x)| (x[0] - t.sin().exp()).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = run(1e-6, 1e-9);
        let fine = run(5e-7, 5e-10);
        assert!(fine <= coarse + 1e-15, "fine {fine} vs coarse {coarse}");
    }

    #[test]
    fn matrix_ode_diagonal_decays() {
        let mut a = |_t: f64| DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let w =
            integrate_matrix_ode(&mut a, &DMatrix::identity(2, 2), 0.0, 1.0, &cfg()).unwrap();
        let last = w.matrices.last().unwrap();
        assert_relative_eq!(last[(0, 0)], (-1.0f64).exp(), epsilon = 1e-7);
        assert_relative_eq!(last[(1, 1)], (-2.0f64).exp(), epsilon = 1e-7);
        assert!(last[(0, 1)].abs() < 1e-10 && last[(1, 0)].abs() < 1e-10);
    }

    #[test]
    fn matrix_ode_zero_matrix_stays_identity() {
        let mut a = |_t: f64| DMatrix::zeros(2, 2);
        let w = integrate_matrix_ode(&mut a, &DMatrix::identity(2, 2), 0.0, 3.0, &cfg()).unwrap();
        for m in &w.matrices {
            assert_relative_eq!((m - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn matrix_ode_matches_matrix_exponential_oracle() {
        let a_const = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.2]);
        let mut a = |_t: f64| a_const.clone();
        let w = integrate_matrix_ode(&mut a, &DMatrix::identity(2, 2), 0.0, 1.0, &cfg()).unwrap();
        let expected = test_support::matrix_exp(&a_const);
        let got = w.matrices.last().unwrap();
        assert!((got - &expected).norm() < 1e-6, "diff {}", (got - &expected).norm());
    }

    #[test]
    fn singular_w0_rejected() {
        let mut a = |_t: f64| DMatrix::zeros(2, 2);
        let err =
            integrate_matrix_ode(&mut a, &DMatrix::zeros(2, 2), 0.0, 1.0, &cfg()).unwrap_err();
        assert!(matches!(err, IntegrateError::InvalidInput(_)));
    }

    #[test]
    fn linear_system_ivp_matches_fundamental_matrix() {
        // variation-of-parameters identity with f = F = 0
        let a_const = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.2]);
        let x0 = DVector::from_vec(vec![0.3, -0.7]);
        let a_clone = a_const.clone();
        let mut rhs = |_t: f64, x: &DVector<f64>, out: &mut DVector<f64>| {
            out.copy_from(&(&a_clone * x));
        };
        let traj = integrate_ivp(&mut rhs, 0.0, &x0, 2.0, &cfg()).unwrap();
        let mut a = |_t: f64| a_const.clone();
        let w = integrate_matrix_ode(&mut a, &DMatrix::identity(2, 2), 0.0, 2.0, &cfg()).unwrap();
        for (x, m) in traj.states.iter().zip(w.matrices.iter()) {
            assert!((x - m * &x0).norm() < 1e-7);
        }
    }
}
