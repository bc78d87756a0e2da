//! Robust kernel-based regression by iteratively reweighted least squares.
//!
//! The crate pairs two least-squares learners, the least-squares support
//! vector regressor ([`lssvr`]) and the regularized extreme learning machine
//! ([`elm`]), with a catalog of M-estimator weight functions ([`weights`]).
//! Each IRLS iteration recomputes per-sample weights from the current
//! residuals and re-solves a weighted linear system. The sigmoid-induced
//! weight family makes the iteration a descent method for the convex
//! log-cosh type loss it is derived from.
//!
//! Supporting modules provide data generation and ingestion ([`data`]),
//! metrics, cross-validation and grid search ([`eval`]), empirical robustness
//! diagnostics ([`robustness`]) and the experiment harness behind the
//! `irls-kbr` binary ([`cli`]).

pub mod cli;
pub mod data;
pub mod elm;
pub mod error;
pub mod eval;
pub mod irls;
pub mod kernel;
pub mod linalg;
pub mod lssvr;
pub mod model;
pub mod robustness;
pub mod weights;

pub use error::{Error, Result};
