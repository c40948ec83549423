//! Certified bounds on the expected value of one-step (birth-death)
//! Markov processes with density-dependent polynomial rates.
//!
//! A process on `{0, .., N}` jumps `k -> k+1` at rate `a_k = N*A(k/N)` and
//! `k -> k-1` at rate `c_k = N*C(k/N)` for fixed polynomials `A`, `C`.
//! When the drift coefficients `D_j = A_j - C_j` satisfy the sign
//! condition (`D_0 >= 0`, `D_j <= 0` for `j >= 2`), the expected fraction
//! `E[X(t)/N]` is bracketed for every finite `N`:
//!
//! * from above by the mean-field solution `y` of `y' = sum_j D_j y^j`;
//! * from below by the first channel `z_1` of an auxiliary ODE system,
//!   with a gap that decays like `1/N`.
//!
//! The crate provides:
//!
//! * [`model`] -- model construction (SIS epidemic, voter-like opinion
//!   dynamics, explicit polynomials), drift coefficients, sign-condition
//!   checks, and the label flip that repairs a violated sign condition;
//! * [`ode`] -- the adaptive Dormand-Prince 5(4) integrator shared by all
//!   solvers, plus a fixed-step RK4 cross-check;
//! * [`master`] -- exact master-equation solutions, moments, and the
//!   moment-hierarchy remainder audit (desk scale, `N <= 5000` by
//!   default);
//! * [`bounds`] -- the mean-field / auxiliary-system solver and the
//!   heuristic q- and Cauchy-Schwarz variant lower bounds;
//! * [`ssa`] -- reproducible Gillespie simulation as an independent
//!   statistical oracle at any `N`.

pub mod bounds;
pub mod error;
pub mod master;
pub mod model;
pub mod ode;
pub mod ssa;
pub mod timeseries;

pub use bounds::{solve_bounds, solve_mean_field, BoundsOptions, BoundsResult};
pub use error::{Error, Result};
pub use master::{moment_series, moments, solve_master, MasterOptions, ProbabilityVector};
pub use model::{
    build_sis_model, build_voter_model, drift_coefficients, flip_states, DriftCoefficients,
    ModelConfig, OneStepModel, RatePolynomials,
};
pub use ode::{integrate, integrate_fixed, IntegratorConfig, IvpProblem};
pub use ssa::{estimate_mean, simulate_path, SsaEnsemble};
pub use timeseries::{time_grid, TimeSeries};
