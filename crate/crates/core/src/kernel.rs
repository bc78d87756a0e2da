//! Gaussian kernel `K(x, x') = exp(-gamma * ||x - x'||²)`, with `gamma = 1/(2σ²)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct KernelSpec {
    gamma: f64,
}

#[derive(Deserialize)]
struct RawKernel {
    gamma: f64,
}

impl TryFrom<RawKernel> for KernelSpec {
    type Error = Error;
    fn try_from(raw: RawKernel) -> Result<Self> {
        KernelSpec::new(raw.gamma)
    }
}

impl KernelSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(KernelSpec { gamma })
        } else {
            Err(Error::invalid(format!(
                "kernel gamma must be finite and > 0, got {gamma}"
            )))
        }
    }

    /// Builds the kernel from a bandwidth σ.
    pub fn from_sigma(sigma: f64) -> Result<Self> {
        KernelSpec::new(1.0 / (2.0 * sigma * sigma))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-self.gamma * d2).exp()
    }
}

fn check_finite(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Symmetric Gram matrix over the rows of `x`.
pub fn gram(x: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    check_finite(x, "kernel input")?;
    let n = x.nrows();
    let pts = rows(x);
    let mut k = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in 0..i {
            let v = spec.eval(&pts[i], &pts[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cross-kernel matrix with entry `(i, j) = K(xa_i, xb_j)`.
pub fn cross(xa: &DMatrix<f64>, xb: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    if xa.ncols() != xb.ncols() {
        return Err(Error::invalid(format!(
            "feature dimension mismatch: {} vs {}",
            xa.ncols(),
            xb.ncols()
        )));
    }
    check_finite(xa, "kernel input")?;
    check_finite(xb, "kernel input")?;
    let (pa, pb) = (rows(xa), rows(xb));
    Ok(DMatrix::from_fn(xa.nrows(), xb.nrows(), |i, j| {
        spec.eval(&pa[i], &pb[j])
    }))
}
