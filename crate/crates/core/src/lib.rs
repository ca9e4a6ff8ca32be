//! Norm-constrained least squares in reproducing kernel Hilbert spaces with
//! Goldenshluger-Lepski adaptive choice of the ball radius, and of the width
//! when the kernel is drawn from the scaled Gaussian family.
//!
//! * [`kernels`]: Gaussian and precomputed kernels, Gram matrices, width grids
//!   and the covering/chaining bounds of the Gaussian family.
//! * [`estimator`]: the radius-constrained estimator via one eigendecomposition
//!   and a bisection for the Lagrange multiplier.
//! * [`selection`]: the adaptive criteria and their argmins.
//! * [`theory`]: closed-form bound evaluators.
//! * [`experiments`]: seeded simulation, event-frequency checks and rate fits.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod kernels;
pub mod selection;
pub mod theory;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use estimator::{
    clip, eigen_gram, empirical_sq_distance, fit_constrained, mu_of_r, predict, rkhs_sq_distance,
    ClipBound, ConstrainedFit, GramEigen,
};
pub use kernels::{Kernel, Points, WidthGrid};
pub use selection::fixed::{radius_grid, select_radius, GlConfig, RadiusGrid, SelectionResult};
pub use selection::gauss::{select_width_radius, GaussGlConfig, GaussSelectionResult};
