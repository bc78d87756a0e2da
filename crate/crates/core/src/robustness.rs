//! Empirical robustness diagnostics: sensitivity curves, per-sample weight
//! trajectories across IRLS iterations, and side-by-side metric tables.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{metrics, MetricSet};
use crate::irls::FitTrace;
use crate::model::Predict;

/// Number of evaluation points used when no grid is given.
pub const DEFAULT_GRID_POINTS: usize = 401;

/// `SC(g) = n · (f_with(g) − f_without(g))` over an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve {
    pub grid: DMatrix<f64>,
    pub values: DVector<f64>,
    pub contaminant: (Vec<f64>, f64),
    pub n: usize,
}

impl SensitivityCurve {
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    /// Trapezoidal area under `|SC|`; the grid must be one-dimensional.
    pub fn abs_area(&self) -> Result<f64> {
        if self.grid.ncols() != 1 {
            return Err(Error::invalid("area under |SC| needs a one-dimensional grid"));
        }
        Ok(abs_area(self.grid.column(0).as_slice(), self.values.as_slice()))
    }
}

pub fn max_abs(values: &DVector<f64>) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn abs_area(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0].abs() + ys[1].abs()))
        .sum()
}

/// `n · (with − without)` evaluated on `grid`.
pub fn sensitivity_values<A: Predict, B: Predict>(
    with: &A,
    without: &B,
    grid: &DMatrix<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    let a = with.predict(grid)?;
    let b = without.predict(grid)?;
    let values = (a - b) * n as f64;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("sensitivity curve", "non-finite value on the grid"));
    }
    Ok(values)
}

/// Fits `fitter` on `train ∪ {z}` and on `train`, and scales the difference
/// of the two decision functions by `n = |train| + 1`.
pub fn sensitivity_curve<M, F>(train: &Dataset, z_x: &[f64], z_y: f64, fitter: F, grid: &DMatrix<f64>) -> Result<SensitivityCurve>
where
    M: Predict,
    F: Fn(&Dataset) -> Result<M>,
{
    if z_x.len() != train.n_features() {
        return Err(Error::invalid(format!(
            "contaminant has {} features, training data has {}",
            z_x.len(),
            train.n_features()
        )));
    }
    if grid.ncols() != train.n_features() {
        return Err(Error::invalid("grid dimension does not match the training data"));
    }
    let augmented = train.with_point(z_x, z_y)?;
    let with = fitter(&augmented).map_err(|e| e.context("fit with the added point"))?;
    let without = fitter(train).map_err(|e| e.context("fit without the added point"))?;
    let n = augmented.len();
    Ok(SensitivityCurve {
        grid: grid.clone(),
        values: sensitivity_values(&with, &without, grid, n)?,
        contaminant: (z_x.to_vec(), z_y),
        n,
    })
}

/// `points` equispaced abscissae spanning the range of a one-dimensional input.
pub fn default_grid(data: &Dataset, points: usize) -> Result<DMatrix<f64>> {
    if data.n_features() != 1 {
        return Err(Error::invalid("a default grid is only defined for one input feature"));
    }
    if points < 2 {
        return Err(Error::invalid("a grid needs at least 2 points"));
    }
    let col = data.features().column(0);
    Ok(linspace(col.min(), col.max(), points))
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> DMatrix<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    DMatrix::from_fn(points, 1, |i, _| if i + 1 == points { hi } else { lo + step * i as f64 })
}

/// Weight of each listed sample at every recorded iteration: entry `[j][k]`
/// is `v(ξ_{indices[j]})` in iteration `k`.
pub fn weight_trajectory(trace: &FitTrace, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = trace.records.first().map_or(0, |r| r.weights.len());
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("sample index {bad} out of range for {n} samples")));
    }
    Ok(indices
        .iter()
        .map(|&i| trace.records.iter().map(|r| r.weights[i]).collect())
        .collect())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub metrics: MetricSet,
}

/// One metric row per model on a shared test set.
pub fn compare_fits(models: &[(&str, &dyn Predict)], test: &Dataset) -> Result<Vec<ComparisonRow>> {
    models
        .iter()
        .map(|(label, model)| {
            let pred = model.predict(test.features())?;
            Ok(ComparisonRow {
                label: label.to_string(),
                metrics: metrics(test.targets(), &pred)?,
            })
        })
        .collect()
}

/// The two one-dimensional outlier problems used to visualise robustness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierTest {
    /// `sin(z)·cos(z²)` with outliers at (−0.8, −5) and (0.8, 5).
    Test1,
    /// `15(z²−1)²z⁴e^{−z}` with outliers at (0, 5), (0.1, 5), (0.7, 5), (0.8, 5).
    Test2,
}

/// Clean samples per problem, equispaced on [−1, 1].
pub const CLEAN_SAMPLES: usize = 100;

impl OutlierTest {
    pub fn name(&self) -> &'static str {
        match self {
            OutlierTest::Test1 => "test1",
            OutlierTest::Test2 => "test2",
        }
    }

    pub fn truth(&self, z: f64) -> f64 {
        match self {
            OutlierTest::Test1 => z.sin() * (z * z).cos(),
            OutlierTest::Test2 => 15.0 * (z * z - 1.0).powi(2) * z.powi(4) * (-z).exp(),
        }
    }

    pub fn outliers(&self) -> Vec<(f64, f64)> {
        match self {
            OutlierTest::Test1 => vec![(-0.8, -5.0), (0.8, 5.0)],
            OutlierTest::Test2 => vec![(0.0, 5.0), (0.1, 5.0), (0.7, 5.0), (0.8, 5.0)],
        }
    }

    pub fn problem(&self) -> OutlierProblem {
        let x: Vec<f64> = linspace(-1.0, 1.0, CLEAN_SAMPLES).iter().copied().collect();
        let y: Vec<f64> = x.iter().map(|&z| self.truth(z)).collect();
        OutlierProblem {
            test: *self,
            clean: Dataset::from_1d(&x, &y, self.name()).expect("static problem data is finite"),
            outliers: self.outliers(),
        }
    }
}

impl FromStr for OutlierTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test1" => Ok(OutlierTest::Test1),
            "test2" => Ok(OutlierTest::Test2),
            other => Err(Error::Usage(format!("unknown test '{other}' (expected test1 or test2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierProblem {
    pub test: OutlierTest,
    pub clean: Dataset,
    pub outliers: Vec<(f64, f64)>,
}

impl OutlierProblem {
    /// Clean samples followed by every outlier, which are flagged in the provenance.
    pub fn full(&self) -> Result<Dataset> {
        self.without(None)
    }

    /// Positions of the outliers within [`OutlierProblem::full`].
    pub fn outlier_indices(&self) -> Vec<usize> {
        (self.clean.len()..self.clean.len() + self.outliers.len()).collect()
    }

    /// The full set with outlier `skip` left out.
    pub fn without(&self, skip: Option<usize>) -> Result<Dataset> {
        let mut data = self.clean.clone();
        for (i, &(x, y)) in self.outliers.iter().enumerate() {
            if Some(i) != skip {
                data = data.with_point(&[x], y)?;
            }
        }
        let n_clean = self.clean.len();
        data.provenance_mut().outlier_indices = (n_clean..data.len()).collect();
        Ok(data)
    }

    /// Sensitivity curve of outlier `i`: the fit on the full set against the
    /// fit with that outlier removed.
    pub fn sensitivity<M, F>(&self, i: usize, fitter: F, grid: &DMatrix<f64>) -> Result<SensitivityCurve>
    where
        M: Predict,
        F: Fn(&Dataset) -> Result<M>,
    {
        let (x, y) = *self
            .outliers
            .get(i)
            .ok_or_else(|| Error::invalid(format!("outlier {i} does not exist")))?;
        sensitivity_curve(&self.without(Some(i))?, &[x], y, fitter, grid)
            .map_err(|e| e.context(format!("outlier {i}")))
    }
}
