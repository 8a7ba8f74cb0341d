//! Solvers for the discrete Euler-Lagrange equations: direct minimization,
//! damped Newton, pseudo-arclength continuation, and the deformation-based
//! numerical mountain pass.

mod continuation;
mod minimize;
mod mountain_pass;
mod system;

pub use continuation::{continue_branch, Branch, BranchPoint, ContinuationConfig};
pub use minimize::{minimize_subcritical, MinimizeConfig, MinimizeOutcome};
pub use mountain_pass::{
    bubble_endpoint, monotonicity_probe, mountain_pass, MinimaxConfig, MinimaxResult, MonotonicityRow,
    MonotonicityTable,
};
pub use system::{newton_solve, ElSystem, NewtonConfig, NewtonOutcome};

use crate::scalar::Scalar;

/// Umbrella solver configuration with the documented defaults.
#[derive(Debug, Clone)]
pub struct SolveConfig<S: Scalar> {
    pub newton: NewtonConfig<S>,
    pub minimize: MinimizeConfig<S>,
    pub minimax: MinimaxConfig<S>,
}

impl<S: Scalar> Default for SolveConfig<S> {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            minimize: MinimizeConfig::default(),
            minimax: MinimaxConfig::default(),
        }
    }
}
