//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cholesky factorization of a symmetric positive-definite matrix.
pub(crate) fn factor_spd(a: DMatrix<f64>, stage: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(stage, format!("{n}x{n} system has non-finite entries")));
    }
    let max_diag = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    a.cholesky().ok_or_else(|| {
        Error::numerical(
            stage,
            format!("{n}x{n} system is not positive definite (max diagonal {max_diag:e})"),
        )
    })
}

pub(crate) fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}
