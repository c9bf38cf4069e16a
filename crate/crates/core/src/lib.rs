//! Two-regime regression where the regime is set by the sign of a linear
//! index of (possibly latent) factors.
//!
//! Estimation is exact least squares: either a mixed-integer quadratic
//! program solved by the built-in branch and bound, or a sweep over the
//! hyperplane arrangement of the factor rows when the threshold index has
//! at most three free coefficients.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod pca;
pub mod selection;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{Dataset, EstimationResult, ParamVector, SearchSpace, Status};
