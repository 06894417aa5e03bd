//! Fast ground-state preparation through optimized control protocols.
//!
//! The library simulates driving a quantum system from the ground state of
//! `H(g0) = H0 + g0 H1` to the ground state of `H(g1)` by shaping `g(t)`
//! under the energy constraint `|g(t)| <= g_max`, and optimizes protocol
//! parameters with derivative-free methods. It covers:
//!
//! - bang-bang protocols (piecewise-constant `g(t)`, exact piecewise
//!   propagation) and their saturated special cases,
//! - the CRAB ansatz (linear ramp modulated by a randomized trigonometric
//!   series), with fixed or free endpoints,
//! - adaptive Nelder-Mead and Powell maximization of the state fidelity,
//! - the Landau-Zener and Lipkin-Meshkov-Glick models, including the
//!   minimal-time scaling analyses over system size and energy bound.
//!
//! The numerics are generic over the scalar type via [`real::Real`]
//! (`f32`/`f64`); the aliases below pin the `f64` instantiations every
//! shipped experiment uses. Times and energies are in units of the model
//! frequency scale (omega = 1).

pub mod error;
pub mod evolution;
pub mod experiments;
pub mod krylov;
pub mod linalg;
pub mod models;
pub mod optimize;
pub mod protocols;
pub mod quantum;
pub mod real;
pub mod rng;

pub use error::{Error, Result};
pub use real::Real;

/// `f64` instantiations used by the CLI and the experiment suite.
pub type StateVector64 = quantum::StateVector<f64>;
pub type HermitianOperator64 = quantum::HermitianOperator<f64>;
pub type Propagator64 = quantum::Propagator<f64>;
pub type ControlProblem64 = models::ControlProblem<f64>;
pub type Protocol64 = protocols::Protocol<f64>;
pub type OptimizationResult64 = optimize::OptimizationResult<f64>;
pub type ScanRecord64 = experiments::ScanRecord<f64>;
pub type ScalingFit64 = experiments::ScalingFit<f64>;
