//! A single entry point over the four learners.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::elm::{self, ElmModel};
use crate::error::{Error, Result};
use crate::irls::{FitTrace, IrlsConfig};
use crate::kernel::KernelSpec;
use crate::lssvr::{self, SvrModel};
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "lssvr")]
    LsSvr,
    #[serde(rename = "irls-svr")]
    IrlsSvr,
    #[serde(rename = "elm")]
    Elm,
    #[serde(rename = "irls-elm")]
    IrlsElm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LsSvr => "lssvr",
            ModelKind::IrlsSvr => "irls-svr",
            ModelKind::Elm => "elm",
            ModelKind::IrlsElm => "irls-elm",
        }
    }

    pub fn is_svr(&self) -> bool {
        matches!(self, ModelKind::LsSvr | ModelKind::IrlsSvr)
    }

    pub fn is_irls(&self) -> bool {
        matches!(self, ModelKind::IrlsSvr | ModelKind::IrlsElm)
    }

    /// The non-reweighted learner of the same kind.
    pub fn plain(&self) -> ModelKind {
        if self.is_svr() {
            ModelKind::LsSvr
        } else {
            ModelKind::Elm
        }
    }

    /// The reweighted learner of the same kind.
    pub fn robust(&self) -> ModelKind {
        if self.is_svr() {
            ModelKind::IrlsSvr
        } else {
            ModelKind::IrlsElm
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lssvr" | "ls-svr" => Ok(ModelKind::LsSvr),
            "irls-svr" => Ok(ModelKind::IrlsSvr),
            "elm" => Ok(ModelKind::Elm),
            "irls-elm" => Ok(ModelKind::IrlsElm),
            other => Err(Error::Usage(format!(
                "unknown model '{other}' (expected lssvr, irls-svr, elm or irls-elm)"
            ))),
        }
    }
}

/// Number of ELM hidden nodes, absolute or relative to the training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenSize {
    Count(usize),
    Fraction(f64),
}

impl HiddenSize {
    /// `round(fraction * n_train)`, at least 1.
    pub fn resolve(&self, n_train: usize) -> Result<usize> {
        match *self {
            HiddenSize::Count(0) => Err(Error::invalid("hidden node count must be >= 1")),
            HiddenSize::Count(l) => Ok(l),
            HiddenSize::Fraction(f) if f.is_finite() && f > 0.0 && f <= 1.0 => {
                Ok(((f * n_train as f64).round() as usize).max(1))
            }
            HiddenSize::Fraction(f) => Err(Error::invalid(format!("hidden fraction {f} not in (0, 1]"))),
        }
    }
}

/// Everything needed to fit one model deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitterConfig {
    pub kind: ModelKind,
    pub c: f64,
    /// Kernel bandwidth (SVR kinds).
    pub gamma: f64,
    /// Hidden-layer size (ELM kinds).
    pub hidden: HiddenSize,
    pub hidden_seed: u64,
    /// Reweighting settings (IRLS kinds).
    pub irls: IrlsConfig,
}

impl FitterConfig {
    pub fn new(kind: ModelKind, c: f64) -> Self {
        FitterConfig {
            kind,
            c,
            gamma: 1.0,
            hidden: HiddenSize::Fraction(0.1),
            hidden_seed: 0,
            irls: IrlsConfig::new(WeightSpec::sigmoid(1.0).expect("static lambda")),
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_hidden(mut self, hidden: HiddenSize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_hidden_seed(mut self, seed: u64) -> Self {
        self.hidden_seed = seed;
        self
    }

    pub fn with_irls(mut self, irls: IrlsConfig) -> Self {
        self.irls = irls;
        self
    }

    pub fn with_weights(mut self, spec: WeightSpec) -> Self {
        self.irls.weight_spec = spec;
        self
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    /// Method label used in result tables. A reweighted fit limited to one
    /// pass is reported as the weighted (W-) variant.
    pub fn label(&self) -> &'static str {
        let single = self.irls.max_iter == 1;
        match self.kind {
            ModelKind::LsSvr => "LS-SVR",
            ModelKind::IrlsSvr if single => "WLS-SVR",
            ModelKind::IrlsSvr => "IRLS-SVR",
            ModelKind::Elm => "ELM",
            ModelKind::IrlsElm if single => "WELM",
            ModelKind::IrlsElm => "IRLS-ELM",
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<Fitted> {
        match self.kind {
            ModelKind::LsSvr => {
                let model = lssvr::fit_lssvr(data, self.c, KernelSpec::new(self.gamma)?)?;
                Ok(Fitted::new(FittedModel::Svr(model), None))
            }
            ModelKind::IrlsSvr => {
                let (model, trace) =
                    lssvr::fit_irls_svr(data, self.c, KernelSpec::new(self.gamma)?, &self.irls)?;
                Ok(Fitted::new(FittedModel::Svr(model), Some(trace)))
            }
            ModelKind::Elm => {
                let l = self.hidden.resolve(data.len())?;
                let model = elm::fit_elm(data, self.c, l, self.hidden_seed)?;
                Ok(Fitted::new(FittedModel::Elm(model), None))
            }
            ModelKind::IrlsElm => {
                let l = self.hidden.resolve(data.len())?;
                let (model, trace) = elm::fit_irls_elm(data, self.c, l, self.hidden_seed, &self.irls)?;
                Ok(Fitted::new(FittedModel::Elm(model), Some(trace)))
            }
        }
    }
}

/// Anything that maps an input matrix to one prediction per row.
pub trait Predict {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>>;
}

impl Predict for SvrModel {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        lssvr::predict_svr(self, x)
    }
}

impl Predict for ElmModel {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        elm::predict_elm(self, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Svr(SvrModel),
    Elm(ElmModel),
}

impl Predict for FittedModel {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            FittedModel::Svr(m) => m.predict(x),
            FittedModel::Elm(m) => m.predict(x),
        }
    }
}

/// A fitted model plus its IRLS audit trail, if it was reweighted.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub model: FittedModel,
    pub trace: Option<FitTrace>,
}

impl Fitted {
    fn new(model: FittedModel, trace: Option<FitTrace>) -> Self {
        Fitted { model, trace }
    }
}

impl Predict for Fitted {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.model.predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_sinc;

    #[test]
    fn kind_round_trip() {
        for kind in [ModelKind::LsSvr, ModelKind::IrlsSvr, ModelKind::Elm, ModelKind::IrlsElm] {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
            assert_eq!(kind.plain().robust(), kind.robust());
        }
        assert!(matches!("svm".parse::<ModelKind>(), Err(Error::Usage(_))));
    }

    #[test]
    fn hidden_size_resolution() {
        assert_eq!(HiddenSize::Fraction(0.1).resolve(500).unwrap(), 50);
        assert_eq!(HiddenSize::Fraction(0.05).resolve(5).unwrap(), 1);
        assert_eq!(HiddenSize::Count(7).resolve(3).unwrap(), 7);
        assert!(HiddenSize::Count(0).resolve(3).is_err());
        assert!(HiddenSize::Fraction(1.5).resolve(3).is_err());
        assert!(HiddenSize::Fraction(0.0).resolve(3).is_err());
    }

    #[test]
    fn labels() {
        let base = FitterConfig::new(ModelKind::IrlsSvr, 1.0);
        assert_eq!(base.label(), "IRLS-SVR");
        assert_eq!(base.with_irls(base.irls.with_max_iter(1)).label(), "WLS-SVR");
        assert_eq!(base.with_kind(ModelKind::IrlsElm).label(), "IRLS-ELM");
        assert_eq!(base.with_kind(ModelKind::Elm).label(), "ELM");
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let (train, test) = gen_sinc(60, 20, 3).unwrap();
        let cfg = FitterConfig::new(ModelKind::LsSvr, 2.0).with_gamma(0.5);
        let direct = lssvr::fit_lssvr(&train, 2.0, KernelSpec::new(0.5).unwrap()).unwrap();
        let fitted = cfg.fit(&train).unwrap();
        assert!(fitted.trace.is_none());
        assert_eq!(
            fitted.predict(test.features()).unwrap(),
            direct.predict(test.features()).unwrap()
        );

        let cfg = FitterConfig::new(ModelKind::IrlsElm, 10.0)
            .with_hidden(HiddenSize::Count(8))
            .with_hidden_seed(4);
        let fitted = cfg.fit(&train).unwrap();
        let (direct, _) = elm::fit_irls_elm(&train, 10.0, 8, 4, &cfg.irls).unwrap();
        assert!(fitted.trace.is_some());
        assert_eq!(
            fitted.predict(test.features()).unwrap(),
            direct.predict(test.features()).unwrap()
        );
    }

    #[test]
    fn config_serde_round_trip() {
        let cfg = FitterConfig::new(ModelKind::IrlsElm, 0.5)
            .with_hidden(HiddenSize::Fraction(0.2))
            .with_weights(WeightSpec::sigmoid(4.0).unwrap());
        let json = serde_json::to_string(&cfg).unwrap();
        let back: FitterConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
