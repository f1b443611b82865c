//! Holonomic recurrent networks and metric baselines on permutation tasks.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense matrices, matrix exponential with Fréchet derivative,
//!   polar re-orthonormalization, spectral norm, PCA, seeded RNG streams.
//! - [`autodiff`]: a matrix-valued reverse-mode tape, Adam, gradient checks.
//! - [`tasks`]: S₃ path integration and SWAP variable binding with exact
//!   oracles and curricula.
//! - [`models`]: the holonomic network, tanh RNN (plain and sphere-projected)
//!   and a pre-norm Transformer encoder behind one classifier interface.
//! - [`scan`]: sequential, tree-reduced and streaming evaluation of
//!   path-ordered operator products.
//! - [`experiments`]: training, noise sweeps, critical-threshold estimation,
//!   finite-size scaling, length generalization, Jacobian horizon, mass gap.
//! - [`config`]: TOML run configuration; [`report`]: result directories and
//!   cross-run summaries. Checkpoints live in [`models`].

pub mod autodiff;
pub mod config;
pub mod error;
pub mod experiments;
pub mod models;
pub mod par;
pub mod report;
pub mod scan;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
