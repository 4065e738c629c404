//! Non-convex M-estimation: empirical and population risks for three model
//! families, the optimizers used to fit them, and tools that map out the
//! critical points of the resulting landscapes.
//!
//! The modules build on each other bottom-up:
//!
//! - [`math`]: eigendecomposition, prox maps, finite differences, quadrature, RNG streams
//! - [`models`]: risk, gradient and Hessian for classification, robust regression and a
//!   two-component Gaussian mixture
//! - [`datagen`]: seeded synthetic data
//! - [`optim`]: projected gradient descent, proximal gradient, trust region
//! - [`oracle`]: population risk by reduced quadrature or Monte Carlo
//! - [`landscape`]: critical points, Morse indices, strong-Morse certificates, basin spread
//! - [`experiments`]: sweep runner that writes CSV curves and JSON manifests

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod experiments;
pub mod landscape;
pub mod math;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod par;

pub use error::{Error, Result};
pub use math::{ParamVec, SymMatrix};
pub use models::{Dataset, ModelSpec, Objective};
