//! Matrix-free Gaussian kernel ridge regression.
//!
//! Solves `(K + beta I) alpha = b` for the Gaussian kernel
//! `K_ij = exp(-|x_i - x_j|^2 / epsilon^2)` by preconditioned conjugate
//! gradient. Kernel products go through a fast Gauss transform with a
//! per-entry error guarantee; the preconditioner is a Nyström approximation
//! built on anchor points picked by a randomized interpolative decomposition
//! and applied through the Woodbury identity, so nothing of size `n x n` is
//! ever formed.

pub mod anchors;
pub mod bounds;
pub mod datagen;
pub mod error;
pub mod fgt;
pub mod kernel;
pub mod linalg;
pub mod operator;
pub mod pcg;
pub mod points;
pub mod precond;

pub use error::{KrrError, Result};
pub use points::{BoundingBox, KernelConfig, PointSet};
