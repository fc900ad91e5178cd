//! Parameterized family of systems `ẋ = A(t)x + f(t,x) + F(t)` with
//! quasi-periodic matrix entries, polynomial nonlinearities and quasi-periodic
//! forcing, plus the Van der Pol-like benchmark preset.

mod config;

pub use config::{parse_config, to_config_string};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

/// Waveform of a single harmonic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTerm {
    pub amplitude: f64,
    /// rad per unit time
    pub frequency: f64,
    /// rad
    pub phase: f64,
    pub kind: TermKind,
}

impl HarmonicTerm {
    pub fn eval(&self, t: f64) -> f64 {
        let arg = self.frequency * t + self.phase;
        match self.kind {
            TermKind::Sin => self.amplitude * arg.sin(),
            TermKind::Cos => self.amplitude * arg.cos(),
        }
    }
}

/// Scalar of the form `offset + Σ aᵢ·sin/cos(ωᵢ t + φᵢ)`.
///
/// An empty term list evaluates to the constant offset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuasiPeriodicScalar {
    pub offset: f64,
    pub terms: Vec<HarmonicTerm>,
}

impl QuasiPeriodicScalar {
    pub fn constant(c: f64) -> Self {
        Self { offset: c, terms: Vec::new() }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.terms.iter().map(|term| term.eval(t)).sum::<f64>()
    }

    /// `|offset| + Σ|amplitude|`, a bound on `|eval(t)|` valid for all t.
    pub fn amplitude_bound(&self) -> f64 {
        self.offset.abs() + self.terms.iter().map(|term| term.amplitude.abs()).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|term| term.amplitude == 0.0)
    }
}

/// Matrix-valued function of time: an n×n grid of quasi-periodic scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFunctionSpec {
    dimension: usize,
    /// Row-major, length `dimension²`.
    entries: Vec<QuasiPeriodicScalar>,
}

impl MatrixFunctionSpec {
    pub fn new(dimension: usize, entries: Vec<QuasiPeriodicScalar>) -> Result<Self, ModelError> {
        if dimension == 0 {
            return Err(ModelError::Validation("dimension must be positive".into()));
        }
        if entries.len() != dimension * dimension {
            return Err(ModelError::DimensionMismatch {
                expected: dimension * dimension,
                got: entries.len(),
            });
        }
        Ok(Self { dimension, entries })
    }

    pub fn zero(dimension: usize) -> Self {
        Self {
            dimension,
            entries: vec![QuasiPeriodicScalar::default(); dimension * dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entry(&self, row: usize, col: usize) -> &QuasiPeriodicScalar {
        &self.entries[row * self.dimension + col]
    }

    pub fn entry_mut(&mut self, row: usize, col: usize) -> &mut QuasiPeriodicScalar {
        &mut self.entries[row * self.dimension + col]
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.dimension, self.dimension, |i, j| self.entry(i, j).eval(t))
    }

    /// The constant part of A(t): offsets only, harmonic terms dropped.
    pub fn constant_part(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dimension, self.dimension, |i, j| self.entry(i, j).offset)
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|e| e.is_constant())
    }
}

/// One monomial term of a polynomial vector field: adds
/// `coefficient · Π xᵢ^eᵢ` to the target component.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTerm {
    /// 0-based target component index.
    pub component: usize,
    pub coefficient: f64,
    /// One exponent per state component.
    pub exponents: Vec<u32>,
}

impl PolyTerm {
    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Polynomial vector field with `f(t,0) = 0` guaranteed structurally:
/// every term has total degree ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialVectorField {
    dimension: usize,
    terms: Vec<PolyTerm>,
}

impl PolynomialVectorField {
    pub fn new(dimension: usize, terms: Vec<PolyTerm>) -> Result<Self, ModelError> {
        for (idx, term) in terms.iter().enumerate() {
            if term.component >= dimension {
                return Err(ModelError::Validation(format!(
                    "nonlinear term {idx}: component {} out of range for dimension {dimension}",
                    term.component + 1
                )));
            }
            if term.exponents.len() != dimension {
                return Err(ModelError::DimensionMismatch {
                    expected: dimension,
                    got: term.exponents.len(),
                });
            }
            if term.total_degree() == 0 {
                return Err(ModelError::Validation(format!(
                    "nonlinear term {idx}: total degree must be >= 1 so that f(t,0) = 0"
                )));
            }
        }
        Ok(Self { dimension, terms })
    }

    pub fn empty(dimension: usize) -> Self {
        Self { dimension, terms: Vec::new() }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for term in &self.terms {
            let mut value = term.coefficient;
            for (xi, &e) in x.iter().zip(term.exponents.iter()) {
                if e > 0 {
                    value *= xi.powi(e as i32);
                }
            }
            out[term.component] += value;
        }
    }
}

/// Parameters of the Van der Pol-like benchmark.
///
/// `A = [[0, 1], [−ω²(t), −α₁]]` with `ω²(t) = ω₀² + a₁ sin r₁t + a₂ sin r₂t`,
/// `f = (0, −α₂ x₂³)`, `F = (0, a sin ω₂ t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdpParams {
    pub omega0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub a1: f64,
    pub a2: f64,
    pub r1: f64,
    pub r2: f64,
    pub a: f64,
    pub omega2: f64,
}

impl Default for VdpParams {
    fn default() -> Self {
        // omega0 = 2, alpha1 = 0.2 are fixed across all benchmark runs.
        Self {
            omega0: 2.0,
            alpha1: 0.2,
            alpha2: 0.1,
            a1: 0.0,
            a2: 0.0,
            r1: 0.0,
            r2: 0.0,
            a: 0.0,
            omega2: 0.0,
        }
    }
}

/// Full system definition `ẋ = A(t)x + f(t,x) + F(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub linear: MatrixFunctionSpec,
    pub nonlinear: PolynomialVectorField,
    pub forcing: Vec<QuasiPeriodicScalar>,
    pub t0: f64,
    /// Present when this system was built from the benchmark preset.
    pub preset: Option<VdpParams>,
}

impl SystemSpec {
    pub fn new(
        linear: MatrixFunctionSpec,
        nonlinear: PolynomialVectorField,
        forcing: Vec<QuasiPeriodicScalar>,
        t0: f64,
    ) -> Result<Self, ModelError> {
        let n = linear.dimension();
        if nonlinear.dimension() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: nonlinear.dimension() });
        }
        if forcing.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: forcing.len() });
        }
        Ok(Self { linear, nonlinear, forcing, t0, preset: None })
    }

    pub fn dimension(&self) -> usize {
        self.linear.dimension()
    }

    pub fn forcing_vector(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.forcing.len(), |i, _| self.forcing[i].eval(t))
    }

    pub fn forcing_norm(&self, t: f64) -> f64 {
        self.forcing.iter().map(|f| f.eval(t).powi(2)).sum::<f64>().sqrt()
    }

    pub fn has_forcing(&self) -> bool {
        self.forcing.iter().any(|f| f.offset != 0.0 || !f.terms.is_empty())
    }

    pub fn eval_rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let n = self.dimension();
        if x.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: x.len() });
        }
        let mut out = DVector::zeros(n);
        self.eval_rhs_into(t, x, &mut out);
        Ok(out)
    }

    /// Allocation-free RHS evaluation; `x` and `out` must have dimension n.
    pub fn eval_rhs_into(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.dimension();
        self.nonlinear.eval_into(x, out);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.linear.entry(i, j).eval(t) * x[j];
            }
            out[i] += acc + self.forcing[i].eval(t);
        }
    }
}

fn harmonic_sin(amplitude: f64, frequency: f64) -> Vec<HarmonicTerm> {
    if amplitude == 0.0 {
        Vec::new()
    } else {
        vec![HarmonicTerm { amplitude, frequency, phase: 0.0, kind: TermKind::Sin }]
    }
}

/// Builds the 2-D Van der Pol-like benchmark spec.
pub fn vdp_preset(params: VdpParams) -> SystemSpec {
    let VdpParams { omega0, alpha1, alpha2, a1, a2, r1, r2, a, omega2 } = params;
    let mut linear = MatrixFunctionSpec::zero(2);
    *linear.entry_mut(0, 1) = QuasiPeriodicScalar::constant(1.0);
    let mut omega_sq = QuasiPeriodicScalar::constant(-omega0 * omega0);
    omega_sq.terms.extend(harmonic_sin(-a1, r1));
    omega_sq.terms.extend(harmonic_sin(-a2, r2));
    *linear.entry_mut(1, 0) = omega_sq;
    *linear.entry_mut(1, 1) = QuasiPeriodicScalar::constant(-alpha1);

    let terms = if alpha2 == 0.0 {
        Vec::new()
    } else {
        vec![PolyTerm { component: 1, coefficient: -alpha2, exponents: vec![0, 3] }]
    };
    let nonlinear = PolynomialVectorField::new(2, terms).expect("benchmark nonlinearity is valid");

    let forcing = vec![
        QuasiPeriodicScalar::default(),
        QuasiPeriodicScalar { offset: 0.0, terms: harmonic_sin(a, omega2) },
    ];

    let mut spec =
        SystemSpec::new(linear, nonlinear, forcing, 0.0).expect("benchmark spec is consistent");
    spec.preset = Some(params);
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn benchmark() -> SystemSpec {
        vdp_preset(VdpParams { alpha2: 0.1, ..VdpParams::default() })
    }

    #[test]
    fn zero_system_rhs_is_zero() {
        let spec = SystemSpec::new(
            MatrixFunctionSpec::zero(2),
            PolynomialVectorField::empty(2),
            vec![QuasiPeriodicScalar::default(); 2],
            0.0,
        )
        .unwrap();
        let x = DVector::from_vec(vec![3.0, -2.0]);
        let out = spec.eval_rhs(1.7, &x).unwrap();
        assert_eq!(out, DVector::zeros(2));
    }

    #[test]
    fn benchmark_rhs_hand_evaluated() {
        let spec = benchmark();
        let out = spec.eval_rhs(0.0, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_relative_eq!(out[0], 0.0);
        assert_relative_eq!(out[1], -4.0);

        let out = spec.eval_rhs(0.0, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_relative_eq!(out[0], 1.0);
        assert_relative_eq!(out[1], -0.3);
    }

    #[test]
    fn rhs_rejects_dimension_mismatch() {
        let spec = benchmark();
        let err = spec.eval_rhs(0.0, &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn preset_constant_case_is_damped_oscillator() {
        let spec = vdp_preset(VdpParams::default());
        assert!(spec.linear.is_constant());
        assert!(!spec.has_forcing());
        let a = spec.linear.eval(12.3);
        assert_relative_eq!(a[(1, 0)], -4.0);
        assert_relative_eq!(a[(1, 1)], -0.2);
    }

    #[test]
    fn fig2_and_fig3_presets_are_valid() {
        let fig2 = vdp_preset(VdpParams {
            alpha2: 0.1,
            omega2: 2.0 * std::f64::consts::PI,
            a1: 0.5,
            a2: 0.5,
            r1: std::f64::consts::PI,
            r2: 7.0,
            a: 0.0,
            ..VdpParams::default()
        });
        assert!(!fig2.has_forcing());

        let fig31 = vdp_preset(VdpParams {
            alpha2: -0.05,
            a1: 0.1,
            a2: 0.1,
            r1: 3.2 * std::f64::consts::PI,
            r2: 13.0,
            a: 0.01,
            omega2: 8.0 * std::f64::consts::PI,
            ..VdpParams::default()
        });
        assert!(fig31.has_forcing());
        assert_relative_eq!(fig31.forcing_norm(0.0), 0.0);
    }

    #[test]
    fn degree_zero_term_rejected() {
        let err = PolynomialVectorField::new(
            2,
            vec![PolyTerm { component: 0, coefficient: 1.0, exponents: vec![0, 0] }],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Validation(_)));
    }

    proptest! {
        #[test]
        fn nonlinear_part_vanishes_at_origin(t in -100.0f64..100.0) {
            let spec = benchmark();
            let zero = DVector::zeros(2);
            let mut out = DVector::zeros(2);
            spec.nonlinear.eval_into(&zero, &mut out);
            prop_assert_eq!(out, DVector::zeros(2));
            // rhs at origin reduces to the forcing term
            let rhs = spec.eval_rhs(t, &zero).unwrap();
            prop_assert!((rhs.norm() - spec.forcing_norm(t)).abs() < 1e-12);
        }

        #[test]
        fn linear_rhs_scales(alpha in -5.0f64..5.0, x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, t in 0.0f64..50.0) {
            let mut spec = benchmark();
            spec.nonlinear = PolynomialVectorField::empty(2);
            let x = DVector::from_vec(vec![x1, x2]);
            let forcing = spec.forcing_vector(t);
            let base = spec.eval_rhs(t, &x).unwrap() - &forcing;
            let scaled = spec.eval_rhs(t, &(alpha * &x)).unwrap() - &forcing;
            prop_assert!((scaled - alpha * base).norm() < 1e-9);
        }

        #[test]
        fn qps_bounded_by_amplitude_bound(t in -1000.0f64..1000.0, offset in -3.0f64..3.0, amp in -3.0f64..3.0, freq in 0.0f64..20.0) {
            let qps = QuasiPeriodicScalar {
                offset,
                terms: vec![HarmonicTerm { amplitude: amp, frequency: freq, phase: 0.3, kind: TermKind::Cos }],
            };
            prop_assert!(qps.eval(t).abs() <= qps.amplitude_bound() + 1e-12);
        }
    }
}
