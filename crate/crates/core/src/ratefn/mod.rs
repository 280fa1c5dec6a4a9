//! Rate functionals and their minimization over the discretized
//! Cameron–Martin space.
//!
//! Controls `f` have piecewise-constant derivatives on the grid, so
//! `‖f‖²_{H¹} = Σ‖ḟ_j‖²dt` exactly. The optimizer works in the scaled
//! variables `v_j = ḟ_j√dt` and gets its gradients from an adjoint pass
//! through `f → f̂ → (Φ, μ, a) → J`.

mod cameron_martin;
mod functionals;
mod objectives;

pub use cameron_martin::{hat_map, CameronMartinPath, HatMap};
pub use functionals::{gamma_functional, j_m_correlated, j_rate, phi, phi_m};
pub use objectives::{
    i_uncorrelated, i_z, i_z_m, terminal_rate, RateObjective, RateProblem, TERMINAL_EIGEN_TOLERANCE,
};

pub use crate::optim::{GradientMode, OptimizerConfig};

use crate::grid::PathSample;

/// Result of a rate minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSolution {
    pub value: f64,
    /// Minimizing control `f`.
    pub control: CameronMartinPath,
    /// `f̂` of the control.
    pub hat_path: PathSample,
    /// `Φ(f, f̂)` (or `Φ^m`) of the control; zero for the uncorrelated model.
    pub phi_path: PathSample,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective at `f = 0`; the value never exceeds it.
    pub upper_bound_used: f64,
    /// Final value of every optimizer start, origin first.
    pub start_values: Vec<f64>,
    /// Starts disagreed by more than the configured tolerance.
    pub spread_warning: bool,
    /// Speed `ẏ` of the inner `W` control on every step (step-major, `N × d`),
    /// used to tilt `W` in importance sampling.
    pub inner_drift: Vec<f64>,
}
