//! Least-squares support vector regression and its IRLS extension.
//!
//! The dual of a (weighted) LS-SVR is the bordered system
//!
//! ```text
//! [ 0   1ᵀ    ] [ b ]   [ 0 ]
//! [ 1   K + V ] [ α ] = [ Y ]
//! ```
//!
//! with `V = diag(1 / (C·vᵢ))`. The bias row is eliminated against the
//! symmetric positive-definite block `K + V`, which is factorized once per
//! solve.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::irls::{self, WeightedProblem};
use crate::kernel::{self, KernelSpec};
use crate::linalg;
use crate::weights::WeightSpec;

pub use crate::irls::{FitTrace, IrlsConfig, IrlsInit, IterationRecord, Termination};

/// A fitted LS-SVR decision function `f(x) = Σ αᵢ K(x, xᵢ) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    train_inputs: DMatrix<f64>,
    alpha: DVector<f64>,
    bias: f64,
    kernel: KernelSpec,
    c: f64,
}

impl SvrModel {
    pub fn new(
        train_inputs: DMatrix<f64>,
        alpha: DVector<f64>,
        bias: f64,
        kernel: KernelSpec,
        c: f64,
    ) -> Result<Self> {
        if alpha.len() != train_inputs.nrows() {
            return Err(Error::invalid(format!(
                "{} dual coefficients for {} training inputs",
                alpha.len(),
                train_inputs.nrows()
            )));
        }
        check_c(c)?;
        Ok(SvrModel {
            train_inputs,
            alpha,
            bias,
            kernel,
            c,
        })
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn train_inputs(&self) -> &DMatrix<f64> {
        &self.train_inputs
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        predict_svr(self, x)
    }
}

fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("C must be finite and > 0, got {c}")))
    }
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::invalid("LS-SVR needs at least 2 samples"));
    }
    Ok(())
}

/// Solves the bordered system with regularization diagonal `v_diag`.
/// Returns `(alpha, bias)`.
pub fn solve_weighted_system(
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    v_diag: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n || v_diag.len() != n {
        return Err(Error::invalid(format!(
            "system dimensions disagree: K is {}x{}, Y has {}, V has {}",
            k.nrows(),
            k.ncols(),
            n,
            v_diag.len()
        )));
    }
    if let Some((i, v)) = v_diag.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!(
            "weight diagonal entry {i} is {v}; entries must be finite and > 0"
        )));
    }
    let mut a = k.clone();
    for i in 0..n {
        a[(i, i)] += v_diag[i];
    }
    let chol = linalg::factor_spd(a, "lssvr bordered solve")?;
    let u = chol.solve(y);
    let w = chol.solve(&DVector::from_element(n, 1.0));
    let bias = u.sum() / w.sum();
    let alpha = u - w * bias;
    if !bias.is_finite() || alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("lssvr bordered solve", "solution is not finite"));
    }
    Ok((alpha, bias))
}

/// Plain LS-SVR fit.
pub fn fit_lssvr(data: &Dataset, c: f64, kernel: KernelSpec) -> Result<SvrModel> {
    check_c(c)?;
    check_data(data)?;
    let k = kernel::gram(data.features(), &kernel)?;
    let v = DVector::from_element(data.len(), 1.0 / c);
    let (alpha, bias) = solve_weighted_system(&k, data.targets(), &v)?;
    SvrModel::new(data.features().clone(), alpha, bias, kernel, c)
}

struct SvrProblem<'a> {
    k: DMatrix<f64>,
    y: &'a DVector<f64>,
    c: f64,
}

impl WeightedProblem for SvrProblem<'_> {
    type Params = (DVector<f64>, f64);

    fn n_samples(&self) -> usize {
        self.y.len()
    }

    fn c(&self) -> f64 {
        self.c
    }

    fn solve(&self, weights: &DVector<f64>) -> Result<Self::Params> {
        let v = weights.map(|w| 1.0 / (self.c * w));
        solve_weighted_system(&self.k, self.y, &v)
    }

    fn zero(&self) -> Self::Params {
        (DVector::zeros(self.y.len()), 0.0)
    }

    fn residuals(&self, (alpha, bias): &Self::Params) -> DVector<f64> {
        let fitted = &self.k * alpha;
        DVector::from_iterator(
            self.y.len(),
            self.y.iter().zip(fitted.iter()).map(|(y, f)| y - (f + bias)),
        )
    }

    fn norm_sq(&self, (alpha, _): &Self::Params) -> f64 {
        alpha.dot(&(&self.k * alpha))
    }

    fn change(&self, (from, _): &Self::Params, (to, _): &Self::Params) -> f64 {
        linalg::sq_dist(from, to)
    }
}

/// IRLS-SVR: alternate residual-driven weights and weighted LS-SVR solves
/// until `‖α_k − α_{k+1}‖² < tol` or `max_iter` solves have been made.
pub fn fit_irls_svr(
    data: &Dataset,
    c: f64,
    kernel: KernelSpec,
    cfg: &IrlsConfig,
) -> Result<(SvrModel, FitTrace)> {
    check_c(c)?;
    check_data(data)?;
    let problem = SvrProblem {
        k: kernel::gram(data.features(), &kernel)?,
        y: data.targets(),
        c,
    };
    let ((alpha, bias), trace) = irls::run(&problem, cfg)?;
    let model = SvrModel::new(data.features().clone(), alpha, bias, kernel, c)?;
    Ok((model, trace))
}

/// Evaluates `Σ αᵢ K(x, xᵢ) + b` at each row of `x`.
pub fn predict_svr(model: &SvrModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let kx = kernel::cross(x, &model.train_inputs, &model.kernel)?;
    Ok((kx * &model.alpha).add_scalar(model.bias))
}

/// `max_i |αᵢ − C·v(ξᵢ)·ξᵢ|` with `ξ = Y − f(X)`: zero exactly at a fixed
/// point of the reweighting map.
pub fn kkt_residual(model: &SvrModel, data: &Dataset, weight_spec: &WeightSpec) -> Result<f64> {
    let pred = predict_svr(model, data.features())?;
    if pred.len() != model.alpha.len() {
        return Err(Error::invalid("model was not fitted on this dataset"));
    }
    Ok(data
        .targets()
        .iter()
        .zip(pred.iter())
        .zip(model.alpha.iter())
        .map(|((y, f), a)| {
            let xi = y - f;
            (a - model.c * irls::effective_weight(weight_spec, xi) * xi).abs()
        })
        .fold(0.0, f64::max))
}
