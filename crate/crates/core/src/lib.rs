//! Multifactor Volterra stochastic volatility models and their large deviations.
//!
//! The crate is organised around the objects needed to simulate the scaled
//! log-price processes and to evaluate their rate functions numerically:
//!
//! - [`kernels`]: Volterra kernels, quadrature of their L² slices, modulus of
//!   continuity and small-time rescaling.
//! - [`gaussian`]: covariance assembly and joint sampling of `(B, B̂)`.
//! - [`model`]: coefficient maps, assumption probes and Euler simulation of
//!   the uncorrelated (`X`) and correlated (`Z`) log-prices.
//! - [`ratefn`]: the rate functionals and their minimisation over the
//!   discretized Cameron–Martin space.
//! - [`asymptotics`]: Monte Carlo tail estimates, slope extraction,
//!   importance sampling and the short-time rescaling.
//!
//! All paths live on a uniform [`TimeGrid`].

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod properties;
pub mod quadrature;
pub mod ratefn;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{PathSample, TimeGrid};
pub use kernels::{KernelBank, KernelFamily, ScalingSchedule, VolterraKernel};
pub use model::{MatrixMap, ModelCoefficients};
pub use ratefn::{CameronMartinPath, RateSolution};
