//! Covariances of the limit processes `W`, `A_m` and `D^m W`, and their grid simulation.

mod cov;
pub mod quad;
mod sim;

pub use cov::{
    a_covariance_unit, a_variance, cov_a, cov_dw, dw1_variance, integrate_factors, kappa_kernels,
    log_moment, log_moment_quadrature, w_variance, CovKernelSpec, CovKind, Factor, Kernel,
};
pub use sim::{simulate_limit, LimitSimConfig, LimitSimulator, DEFAULT_EXACT_CELLS, MIN_GRID};
