//! Iteration driver shared by IRLS-SVR and IRLS-ELM.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightSpec;

/// Weights are capped here so their reciprocal stays strictly positive
/// (only reachable by the Laplace family at a zero residual).
pub(crate) const MAX_WEIGHT: f64 = 1.0 / f64::EPSILON;

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IrlsInit {
    /// Start from the unit-weight solution.
    UnweightedSolve,
    /// Start from all-zero parameters, so the first residuals are the targets.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub weight_spec: WeightSpec,
    pub init: IrlsInit,
}

impl IrlsConfig {
    pub fn new(weight_spec: WeightSpec) -> Self {
        IrlsConfig {
            max_iter: 50,
            tol: 1e-6,
            weight_spec,
            init: IrlsInit::UnweightedSolve,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_init(mut self, init: IrlsInit) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be finite and > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// One reweighting step: the state it started from and how far it moved.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Residuals `y - f_k(x)` of the iterate the weights were computed from.
    pub residuals: DVector<f64>,
    /// Weights `v(residual)` used in this step's solve.
    pub weights: DVector<f64>,
    /// Monitored regularized risk of the iterate `f_k`.
    pub risk: f64,
    /// Squared Euclidean norm of the parameter update.
    pub param_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIter,
}

/// Audit trail of an IRLS fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Risk of the returned iterate.
    pub final_risk: f64,
}

impl FitTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Risk sequence of every visited iterate, ending with the returned one.
    pub fn risks(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.risk)
            .chain(std::iter::once(self.final_risk))
            .collect()
    }

    /// Largest increase between consecutive risks (`<= 0` for a descent path).
    pub fn max_risk_increase(&self) -> f64 {
        self.risks()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A learner whose fit is a weighted least-squares solve.
///
/// The objective of one solve is `½‖w‖² + (C/2) Σ vᵢ ξᵢ²`. Dividing by `NC/2`
/// turns it into `(1/(NC))‖w‖² + (1/N) Σ vᵢ ξᵢ²`, the quadratic majorizer of
/// the monitored risk `(1/(NC))‖w‖² + (1/N) Σ ρ(ξᵢ)` whenever `v = ψ/(2x)`
/// is non-increasing in `|x|`.
pub(crate) trait WeightedProblem {
    type Params;

    fn n_samples(&self) -> usize;
    fn c(&self) -> f64;
    fn solve(&self, weights: &DVector<f64>) -> Result<Self::Params>;
    fn zero(&self) -> Self::Params;
    fn residuals(&self, params: &Self::Params) -> DVector<f64>;
    /// Squared RKHS (or output-weight) norm of the fitted function.
    fn norm_sq(&self, params: &Self::Params) -> f64;
    fn change(&self, from: &Self::Params, to: &Self::Params) -> f64;
}

pub(crate) fn effective_weight(spec: &WeightSpec, x: f64) -> f64 {
    spec.weight(x).min(MAX_WEIGHT)
}

pub(crate) fn regularized_risk(spec: &WeightSpec, n: usize, c: f64, norm_sq: f64, residuals: &DVector<f64>) -> f64 {
    let nf = n as f64;
    norm_sq / (nf * c) + residuals.iter().map(|&r| spec.loss(r)).sum::<f64>() / nf
}

pub(crate) fn run<P: WeightedProblem>(problem: &P, cfg: &IrlsConfig) -> Result<(P::Params, FitTrace)> {
    cfg.validate()?;
    let spec = &cfg.weight_spec;
    let n = problem.n_samples();
    let risk_of = |p: &P::Params, residuals: &DVector<f64>| {
        regularized_risk(spec, n, problem.c(), problem.norm_sq(p), residuals)
    };

    let mut current = match cfg.init {
        IrlsInit::UnweightedSolve => problem.solve(&DVector::from_element(n, 1.0))?,
        IrlsInit::Zero => problem.zero(),
    };
    let mut records = Vec::with_capacity(cfg.max_iter.min(64));
    let mut termination = Termination::MaxIter;

    for _ in 0..cfg.max_iter {
        let residuals = problem.residuals(&current);
        let weights = residuals.map(|r| effective_weight(spec, r));
        let risk = risk_of(&current, &residuals);
        let next = problem.solve(&weights)?;
        let param_change = problem.change(&current, &next);
        if !param_change.is_finite() {
            return Err(Error::numerical(
                "irls",
                format!("parameter change is {param_change} at iteration {}", records.len()),
            ));
        }
        records.push(IterationRecord {
            residuals,
            weights,
            risk,
            param_change,
        });
        current = next;
        if param_change < cfg.tol {
            termination = Termination::Converged;
            break;
        }
    }

    let final_residuals = problem.residuals(&current);
    let final_risk = risk_of(&current, &final_residuals);
    Ok((
        current,
        FitTrace {
            records,
            termination,
            final_risk,
        },
    ))
}
