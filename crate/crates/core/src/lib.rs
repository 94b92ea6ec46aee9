//! Numerical kernels for degenerate fully nonlinear pseudo-p-Laplacian
//! inequalities: Pucci operators on coordinatewise weighted Hessians,
//! anisotropic paraboloid and barrier profiles, inf-convolution, the sliding
//! paraboloid experiment, a monotone relaxation solver and empirical
//! regularity metrics.

pub mod error;
pub mod field_io;
pub mod grid;
pub mod matrix;
pub mod operators;
pub mod profiles;
pub mod regularity;
pub mod regularize;
pub mod sliding;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, SliceSpec};
pub use matrix::SymMatrix;
pub use operators::{DegeneracyExponent, EllipticityParams};
