//! Numerical laboratory for a nonlocal mean-field equation whose exponential
//! nonlinearity is averaged against a probability measure of vortex
//! circulation intensities.
//!
//! The crate discretizes bounded domains and flat tori, evaluates the
//! variational functional with stable log-space quadrature, computes
//! solutions by minimization, damped Newton with pseudo-arclength
//! continuation, and a deformation-based numerical mountain pass, and ships
//! diagnostics for blow-up mass concentration and the exponential-integral
//! inequalities the solutions are expected to satisfy.
//!
//! Everything is generic over the floating-point scalar (`Scalar`); the
//! aliases at the crate root pin f64, which is what the CLI and the
//! acceptance suite run.

pub mod error;
pub mod scalar;

pub mod field;
pub mod geometry;
pub mod measure;

pub mod green;
pub mod linsolve;

pub mod families;
pub mod functional;

pub mod solvers;

pub mod diagnostics;

pub mod io;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Measure = measure::CirculationMeasure<f64>;
pub type Geometry = geometry::DiscreteGeometry<f64>;
pub type RealField = field::Field<f64>;
pub type Report = functional::FunctionalReport<f64>;
pub type Branch = solvers::Branch<f64>;
pub type MinimaxResult = solvers::MinimaxResult<f64>;
pub type BlowupReport = diagnostics::BlowupReport<f64>;
