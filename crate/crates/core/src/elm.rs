//! Regularized extreme learning machine and IRLS-ELM.
//!
//! Hidden parameters are drawn once from a seeded ChaCha8 stream (weights
//! row by row, then biases, each uniform on [-1, 1]) and frozen. Only the
//! output weights β are fitted:
//!
//! ```text
//! β = Hᵀ (I/C + D H Hᵀ)⁻¹ D Y     when N < L
//! β = (I/C + Hᵀ D H)⁻¹ Hᵀ D Y     when N ≥ L
//! ```
//!
//! with `D = diag(v(ξᵢ))` (the identity for the plain fit). Both branches are
//! solved in the symmetrized form through `G = D^{1/2} H`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::irls::{self, FitTrace, IrlsConfig, WeightedProblem};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    LogisticSigmoid,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::LogisticSigmoid => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

/// Which closed form is used for the output weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// N×N system, used when there are fewer samples than hidden nodes.
    SampleSpace,
    /// L×L system.
    FeatureSpace,
}

impl Branch {
    pub fn for_shape(n_samples: usize, n_hidden: usize) -> Branch {
        if n_samples < n_hidden {
            Branch::SampleSpace
        } else {
            Branch::FeatureSpace
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    hidden_weights: DMatrix<f64>,
    hidden_biases: DVector<f64>,
    activation: Activation,
    beta: DVector<f64>,
    c: f64,
    seed: u64,
}

impl ElmModel {
    pub fn hidden_weights(&self) -> &DMatrix<f64> {
        &self.hidden_weights
    }

    pub fn hidden_biases(&self) -> &DVector<f64> {
        &self.hidden_biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_hidden(&self) -> usize {
        self.beta.len()
    }

    /// Builds a model from explicit parameters.
    pub fn from_parts(
        hidden_weights: DMatrix<f64>,
        hidden_biases: DVector<f64>,
        beta: DVector<f64>,
        c: f64,
    ) -> Result<Self> {
        let l = hidden_weights.nrows();
        if hidden_biases.len() != l || beta.len() != l {
            return Err(Error::invalid(format!(
                "hidden layer has {l} nodes but {} biases and {} output weights",
                hidden_biases.len(),
                beta.len()
            )));
        }
        Ok(ElmModel {
            hidden_weights,
            hidden_biases,
            activation: Activation::LogisticSigmoid,
            beta,
            c,
            seed: 0,
        })
    }

    pub fn hidden_output(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        hidden_output(&self.hidden_weights, &self.hidden_biases, self.activation, x)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        predict_elm(self, x)
    }
}

/// Draws `L` hidden nodes for `n` input features.
pub fn init_hidden(l: usize, n: usize, seed: u64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if l == 0 || n == 0 {
        return Err(Error::invalid("hidden layer needs L >= 1 and n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = DMatrix::zeros(l, n);
    for i in 0..l {
        for j in 0..n {
            weights[(i, j)] = rng.random_range(-1.0..=1.0);
        }
    }
    let biases = DVector::from_fn(l, |_, _| rng.random_range(-1.0..=1.0));
    Ok((weights, biases))
}

/// Hidden-layer output matrix `H[i, j] = g(a_jᵀ x_i + b_j)`.
pub fn hidden_output(
    weights: &DMatrix<f64>,
    biases: &DVector<f64>,
    activation: Activation,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if x.ncols() != weights.ncols() {
        return Err(Error::invalid(format!(
            "input has {} features, hidden layer expects {}",
            x.ncols(),
            weights.ncols()
        )));
    }
    if biases.len() != weights.nrows() {
        return Err(Error::invalid("hidden bias count does not match node count"));
    }
    let mut h = x * weights.transpose();
    for (j, mut col) in h.column_iter_mut().enumerate() {
        let b = biases[j];
        col.apply(|v| *v = activation.apply(*v + b));
    }
    Ok(h)
}

fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("C must be finite and > 0, got {c}")))
    }
}

/// Weighted ridge solution for the output weights, branch picked by shape.
pub fn solve_output_weights(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    c: f64,
) -> Result<DVector<f64>> {
    solve_output_weights_with(h, y, weights, c, Branch::for_shape(h.nrows(), h.ncols()))
}

/// Weighted ridge solution using an explicit branch.
pub fn solve_output_weights_with(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    c: f64,
    branch: Branch,
) -> Result<DVector<f64>> {
    check_c(c)?;
    let n = h.nrows();
    if y.len() != n || weights.len() != n {
        return Err(Error::invalid(format!(
            "H has {n} rows but Y has {} and weights {}",
            y.len(),
            weights.len()
        )));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::invalid(format!("weight {i} is {w}; weights must be finite and > 0")));
    }
    let root = weights.map(f64::sqrt);
    let mut g = h.clone();
    for (i, mut row) in g.row_iter_mut().enumerate() {
        row *= root[i];
    }
    let gy = y.component_mul(&root);
    let inv_c = 1.0 / c;
    let beta = match branch {
        Branch::FeatureSpace => {
            let mut a = g.tr_mul(&g);
            for i in 0..a.nrows() {
                a[(i, i)] += inv_c;
            }
            linalg::factor_spd(a, "elm output weights")?.solve(&g.tr_mul(&gy))
        }
        Branch::SampleSpace => {
            let mut a = &g * g.transpose();
            for i in 0..n {
                a[(i, i)] += inv_c;
            }
            g.tr_mul(&linalg::factor_spd(a, "elm output weights")?.solve(&gy))
        }
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("elm output weights", "solution is not finite"));
    }
    Ok(beta)
}

/// Regularized ELM with `L` hidden nodes.
pub fn fit_elm(data: &Dataset, c: f64, l: usize, seed: u64) -> Result<ElmModel> {
    check_c(c)?;
    let (w, b) = init_hidden(l, data.n_features(), seed)?;
    let h = hidden_output(&w, &b, Activation::LogisticSigmoid, data.features())?;
    let beta = solve_output_weights(&h, data.targets(), &DVector::from_element(data.len(), 1.0), c)?;
    Ok(ElmModel {
        hidden_weights: w,
        hidden_biases: b,
        activation: Activation::LogisticSigmoid,
        beta,
        c,
        seed,
    })
}

struct ElmProblem<'a> {
    h: DMatrix<f64>,
    y: &'a DVector<f64>,
    c: f64,
}

impl WeightedProblem for ElmProblem<'_> {
    type Params = DVector<f64>;

    fn n_samples(&self) -> usize {
        self.y.len()
    }

    fn c(&self) -> f64 {
        self.c
    }

    fn solve(&self, weights: &DVector<f64>) -> Result<Self::Params> {
        solve_output_weights(&self.h, self.y, weights, self.c)
    }

    fn zero(&self) -> Self::Params {
        DVector::zeros(self.h.ncols())
    }

    fn residuals(&self, beta: &Self::Params) -> DVector<f64> {
        self.y - &self.h * beta
    }

    fn norm_sq(&self, beta: &Self::Params) -> f64 {
        beta.norm_squared()
    }

    fn change(&self, from: &Self::Params, to: &Self::Params) -> f64 {
        linalg::sq_dist(from, to)
    }
}

/// IRLS-ELM: the hidden layer is drawn once, then output weights are
/// re-solved under residual-driven weights until `‖β_k − β_{k+1}‖² < tol`.
pub fn fit_irls_elm(
    data: &Dataset,
    c: f64,
    l: usize,
    seed: u64,
    cfg: &IrlsConfig,
) -> Result<(ElmModel, FitTrace)> {
    check_c(c)?;
    let (w, b) = init_hidden(l, data.n_features(), seed)?;
    let problem = ElmProblem {
        h: hidden_output(&w, &b, Activation::LogisticSigmoid, data.features())?,
        y: data.targets(),
        c,
    };
    let (beta, trace) = irls::run(&problem, cfg)?;
    Ok((
        ElmModel {
            hidden_weights: w,
            hidden_biases: b,
            activation: Activation::LogisticSigmoid,
            beta,
            c,
            seed,
        },
        trace,
    ))
}

/// `y = h(x) β` for each row of `x`.
pub fn predict_elm(model: &ElmModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(model.hidden_output(x)? * &model.beta)
}
