//! M-estimator loss / gradient / weight triples.
//!
//! Every family is described by its gradient ψ. The weight is
//! `v(x) = ψ(x) / (2x)` with the removable singularity at the origin
//! filled by the continuous limit, and the loss ρ is the antiderivative of
//! ψ anchored at `ρ(0) = 0`. All three are evaluated on `|x|` and the sign
//! is re-applied, so ψ is exactly odd and v, ρ are exactly even.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower clamp applied to weights before they are inverted downstream.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-8;

/// A member of the weight-function catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum WeightFamily {
    /// Squared loss; constant unit weight.
    Gauss,
    /// Absolute loss.
    Laplace,
    Huber { k: f64 },
    /// Three-part redescending family, `0 < a <= b <= c`.
    Hampel { a: f64, b: f64, c: f64 },
    /// Tukey biweight.
    Tukey { k: f64 },
    /// Andrew's sine wave.
    Andrew { k: f64 },
    Welsch { k: f64 },
    /// Shifted logistic gradient `λ/(1+e^{-λx}) - λ/2` and its log-cosh loss.
    SigmoidInduced { lambda: f64 },
}

impl WeightFamily {
    /// Short lowercase name, as accepted on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            WeightFamily::Gauss => "gauss",
            WeightFamily::Laplace => "laplace",
            WeightFamily::Huber { .. } => "huber",
            WeightFamily::Hampel { .. } => "hampel",
            WeightFamily::Tukey { .. } => "tukey",
            WeightFamily::Andrew { .. } => "andrew",
            WeightFamily::Welsch { .. } => "welsch",
            WeightFamily::SigmoidInduced { .. } => "sigmoid-induced",
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{} parameter {name} must be finite and > 0, got {v}",
                    self.name()
                )))
            }
        };
        match *self {
            WeightFamily::Gauss | WeightFamily::Laplace => Ok(()),
            WeightFamily::Huber { k }
            | WeightFamily::Tukey { k }
            | WeightFamily::Andrew { k }
            | WeightFamily::Welsch { k } => positive("k", k),
            WeightFamily::SigmoidInduced { lambda } => positive("lambda", lambda),
            WeightFamily::Hampel { a, b, c } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("c", c)?;
                if a <= b && b <= c {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "hampel parameters must satisfy a <= b <= c, got ({a}, {b}, {c})"
                    )))
                }
            }
        }
    }
}

/// A validated weight family together with its weight floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeightSpec")]
pub struct WeightSpec {
    #[serde(flatten)]
    family: WeightFamily,
    weight_floor: f64,
}

#[derive(Deserialize)]
struct RawWeightSpec {
    #[serde(flatten)]
    family: WeightFamily,
    #[serde(default = "default_floor")]
    weight_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_WEIGHT_FLOOR
}

impl TryFrom<RawWeightSpec> for WeightSpec {
    type Error = Error;

    fn try_from(raw: RawWeightSpec) -> Result<Self> {
        WeightSpec::new(raw.family)?.with_floor(raw.weight_floor)
    }
}

impl WeightSpec {
    /// Validates the family parameters; the floor defaults to [`DEFAULT_WEIGHT_FLOOR`].
    pub fn new(family: WeightFamily) -> Result<Self> {
        family.validate()?;
        Ok(WeightSpec {
            family,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        })
    }

    pub fn gauss() -> Self {
        WeightSpec {
            family: WeightFamily::Gauss,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn sigmoid(lambda: f64) -> Result<Self> {
        WeightSpec::new(WeightFamily::SigmoidInduced { lambda })
    }

    pub fn with_floor(mut self, weight_floor: f64) -> Result<Self> {
        if !(weight_floor.is_finite() && weight_floor >= 0.0) {
            return Err(Error::invalid(format!(
                "weight floor must be finite and >= 0, got {weight_floor}"
            )));
        }
        self.weight_floor = weight_floor;
        Ok(self)
    }

    pub fn family(&self) -> WeightFamily {
        self.family
    }

    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    /// Gradient ψ(x).
    pub fn gradient(&self, x: f64) -> f64 {
        let a = x.abs();
        let g = match self.family {
            WeightFamily::Gauss => 2.0 * a,
            WeightFamily::Laplace => 1.0,
            WeightFamily::Huber { k } => a.min(k),
            WeightFamily::Hampel { a: ha, b, c } => {
                if a <= ha {
                    a
                } else if a <= b {
                    ha
                } else if a <= c {
                    ha * (c - a) / (c - b)
                } else {
                    0.0
                }
            }
            WeightFamily::Tukey { k } => {
                if a <= k {
                    let u = 1.0 - (a / k) * (a / k);
                    a * u * u
                } else {
                    0.0
                }
            }
            WeightFamily::Andrew { k } => {
                if a <= k {
                    k * (PI * a / k).sin()
                } else {
                    0.0
                }
            }
            WeightFamily::Welsch { k } => a * (-0.5 * (a / k) * (a / k)).exp(),
            WeightFamily::SigmoidInduced { lambda } => 0.5 * lambda * (0.5 * lambda * a).tanh(),
        };
        signed(x, g)
    }

    /// Weight v(x) before the floor is applied.
    pub fn weight_unclamped(&self, x: f64) -> f64 {
        let a = x.abs();
        match self.family {
            WeightFamily::Gauss => 1.0,
            WeightFamily::Laplace => {
                if a == 0.0 {
                    f64::INFINITY
                } else {
                    0.5 / a
                }
            }
            WeightFamily::Huber { k } => {
                if a <= k {
                    0.5
                } else {
                    0.5 * k / a
                }
            }
            WeightFamily::Hampel { a: ha, b, c } => {
                if a <= ha {
                    0.5
                } else if a <= b {
                    0.5 * ha / a
                } else if a <= c {
                    ha * (c - a) / (2.0 * (c - b) * a)
                } else {
                    0.0
                }
            }
            WeightFamily::Tukey { k } => {
                if a <= k {
                    let u = 1.0 - (a / k) * (a / k);
                    0.5 * u * u
                } else {
                    0.0
                }
            }
            WeightFamily::Andrew { k } => {
                if a == 0.0 {
                    FRAC_PI_2
                } else if a <= k {
                    k * (PI * a / k).sin() / (2.0 * a)
                } else {
                    0.0
                }
            }
            WeightFamily::Welsch { k } => 0.5 * (-0.5 * (a / k) * (a / k)).exp(),
            WeightFamily::SigmoidInduced { lambda } => {
                if a == 0.0 {
                    lambda * lambda / 8.0
                } else {
                    lambda * (0.5 * lambda * a).tanh() / (4.0 * a)
                }
            }
        }
    }

    /// Weight v(x), clamped below by the weight floor.
    pub fn weight(&self, x: f64) -> f64 {
        self.weight_unclamped(x).max(self.weight_floor)
    }

    /// Loss ρ(x) with ρ(0) = 0.
    pub fn loss(&self, x: f64) -> f64 {
        let a = x.abs();
        match self.family {
            WeightFamily::Gauss => a * a,
            WeightFamily::Laplace => a,
            WeightFamily::Huber { k } => {
                if a <= k {
                    0.5 * a * a
                } else {
                    k * a - 0.5 * k * k
                }
            }
            WeightFamily::Hampel { a: ha, b, c } => {
                let at_b = ha * b - 0.5 * ha * ha;
                if a <= ha {
                    0.5 * a * a
                } else if a <= b {
                    ha * a - 0.5 * ha * ha
                } else if a <= c {
                    at_b + ha / (c - b) * (c * (a - b) - 0.5 * (a * a - b * b))
                } else {
                    at_b + 0.5 * ha * (c - b)
                }
            }
            WeightFamily::Tukey { k } => {
                let u = (a.min(k) / k).powi(2);
                k * k / 6.0 * u * (3.0 - 3.0 * u + u * u)
            }
            WeightFamily::Andrew { k } => {
                let half = 0.5 * PI * a.min(k) / k;
                2.0 * k * k / PI * half.sin().powi(2)
            }
            WeightFamily::Welsch { k } => -k * k * (-0.5 * (a / k) * (a / k)).exp_m1(),
            WeightFamily::SigmoidInduced { lambda } => log_cosh(0.5 * lambda * a),
        }
    }

    /// Numerically probes the weight conditions v1-v3 and the gradient
    /// conditions c1-c4 (c4 in its relaxed non-decreasing form) on `grid`.
    pub fn check_conditions(&self, grid: &[f64]) -> Result<ConditionReport> {
        if grid.is_empty() {
            return Err(Error::invalid("condition grid is empty"));
        }
        if grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("condition grid contains non-finite points"));
        }
        let mut sorted = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let span = sorted[n - 1].abs().max(sorted[0].abs()).max(1.0);
        for i in 0..n {
            if (sorted[i] + sorted[n - 1 - i]).abs() > 1e-9 * span {
                return Err(Error::invalid(format!(
                    "condition grid is not symmetric about 0 (point {} has no mirror)",
                    sorted[i]
                )));
            }
        }

        let tol = |v: f64| 1e-12 * v.abs().max(1.0);
        let first = |pred: &dyn Fn(f64) -> bool| sorted.iter().copied().find(|&x| !pred(x));

        let v1 = first(&|x| {
            let v = self.weight(x);
            v >= 0.0 && v.is_finite()
        });
        let v2 = first(&|x| {
            let (p, m) = (self.weight(x), self.weight(-x));
            p == m || (p - m).abs() <= tol(p)
        });
        let positive: Vec<f64> = sorted.iter().copied().filter(|&x| x >= 0.0).collect();
        let v3 = positive.windows(2).find_map(|w| {
            let (lo, hi) = (self.weight(w[0]), self.weight(w[1]));
            (hi > lo + tol(lo)).then_some(w[1])
        });

        let c1 = first(&|x| {
            let (p, m) = (self.gradient(x), self.gradient(-x));
            (p + m).abs() <= tol(p)
        });
        let c2 = first(&|x| {
            let h = 1e-7 * x.abs().max(1.0);
            (self.gradient(x + h) - self.gradient(x - h)).abs() <= 1e-4
        });
        let sup = sorted
            .iter()
            .map(|&x| self.gradient(x).abs())
            .fold(0.0_f64, f64::max);
        let c3 = if !sup.is_finite() {
            sorted.iter().copied().find(|&x| !self.gradient(x).is_finite())
        } else {
            // Probe well outside the grid; an unbounded gradient keeps growing.
            let widest = span * 1e6;
            let far = self.gradient(widest).abs().max(self.gradient(-widest).abs());
            (far > 2.0 * sup + 1e-12).then_some(widest)
        };
        let c4 = sorted.windows(2).find_map(|w| {
            let (lo, hi) = (self.gradient(w[0]), self.gradient(w[1]));
            (hi < lo - tol(lo)).then_some(w[1])
        });

        Ok(ConditionReport {
            outcomes: vec![
                (Condition::V1, v1),
                (Condition::V2, v2),
                (Condition::V3, v3),
                (Condition::C1, c1),
                (Condition::C2, c2),
                (Condition::C3, c3),
                (Condition::C4, c4),
            ],
        })
    }
}

fn signed(x: f64, magnitude: f64) -> f64 {
    if x > 0.0 {
        magnitude
    } else if x < 0.0 {
        -magnitude
    } else {
        0.0
    }
}

/// `ln(cosh(t))` for `t >= 0`, which equals `ln(1+e^{2t}) - t - ln 2`.
fn log_cosh(t: f64) -> f64 {
    if t < 1.0 {
        let s = (0.5 * t).sinh();
        (2.0 * s * s).ln_1p()
    } else {
        t + (-2.0 * t).exp().ln_1p() - LN_2
    }
}

/// Conditions on the weight function (v1-v3) and gradient (c1-c4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    /// v non-negative and bounded.
    V1,
    /// v even.
    V2,
    /// v non-increasing for x > 0.
    V3,
    /// ψ odd.
    C1,
    /// ψ continuous.
    C2,
    /// ψ bounded.
    C3,
    /// ψ non-decreasing.
    C4,
}

/// Outcome of [`WeightSpec::check_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    outcomes: Vec<(Condition, Option<f64>)>,
}

impl ConditionReport {
    pub fn passed(&self, condition: Condition) -> bool {
        self.failure_at(condition).is_none()
    }

    /// First point at which `condition` was seen to fail.
    pub fn failure_at(&self, condition: Condition) -> Option<f64> {
        self.outcomes
            .iter()
            .find(|(c, _)| *c == condition)
            .and_then(|(_, at)| *at)
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|(_, at)| at.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = (Condition, f64)> + '_ {
        self.outcomes
            .iter()
            .filter_map(|(c, at)| at.map(|x| (*c, x)))
    }
}
