//! Upper bounds on solution norms of nonlinear time-varying ODE systems
//! `ẋ = A(t)x + f(t,x) + F(t)`, stability criteria, and trapping/stability
//! region estimates.
//!
//! The n-dimensional problem is reduced to a scalar comparison ODE
//! `Ẋ = p(t)X + k(t)L(t,X) + k(t)‖F(t)‖` driven by the logarithmic growth
//! rate `p(t)` and running condition number `k(t)` of the fundamental matrix
//! of the linear part. Frozen-coefficient and averaged-coefficient
//! approximations turn the comparison ODE into an integrable autonomous
//! equation whose positive roots delimit stability basins and trapping
//! regions; the roots map back to ellipsoids of initial conditions through
//! `‖W⁻¹(t₀)x₀‖ = d`.

pub mod attractor_estimator;
pub mod bounds_engine;
pub mod cli;
pub mod integrator;
pub mod linear_analysis;
pub mod system_model;
