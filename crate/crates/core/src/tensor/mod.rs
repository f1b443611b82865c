//! Dense linear algebra used throughout the crate.

mod expm;
mod linalg;
mod matrix;
mod rng;

pub use expm::{mat_exp, mat_exp_adjoint, mat_exp_frechet, skew};
pub use linalg::{
    inverse, orthogonality_tolerance, pca_project, reorthonormalize, solve, spectral_norm, spectral_norm_with,
    symmetric_eigen, Pca, SymmetricEigen,
};
pub use matrix::{dot, gemm, Matrix, Trans, Vector};
pub use rng::{gaussian, RngState};
