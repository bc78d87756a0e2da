//! Error metrics, k-fold cross-validation and grid search.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, inject_outliers, Dataset};
use crate::error::{Error, Result};
use crate::model::{FitterConfig, HiddenSize, Predict};
use crate::weights::{WeightFamily, WeightSpec};

/// Targets with `|y|` at or below this are left out of the relative error.
pub const MRE_ZERO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    /// Mean relative error over targets with `|y| > 1e-12` (0 if there are none).
    pub mre: f64,
    pub mre_excluded_count: usize,
}

pub fn metrics(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<MetricSet> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "metric inputs differ in length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    let n = y_true.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut rel = 0.0;
    let mut included = 0usize;
    for (y, p) in y_true.iter().zip(y_pred.iter()) {
        let e = y - p;
        sq += e * e;
        abs += e.abs();
        if y.abs() > MRE_ZERO_THRESHOLD {
            rel += (e / y).abs();
            included += 1;
        }
    }
    Ok(MetricSet {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mre: if included > 0 { rel / included as f64 } else { 0.0 },
        mre_excluded_count: y_true.len() - included,
    })
}

/// A seeded permutation of `0..n` cut into `k` folds; the first `n % k`
/// folds hold one extra index.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("k-fold needs 2 <= k <= N, got k={k}, N={n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> MeanSd {
        let n = values.len();
        if n == 0 {
            return MeanSd { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub rmse: MeanSd,
    pub mae: MeanSd,
    pub mre: MeanSd,
}

impl MetricSummary {
    pub fn of(sets: &[MetricSet]) -> MetricSummary {
        let col = |f: fn(&MetricSet) -> f64| MeanSd::of(&sets.iter().map(f).collect::<Vec<_>>());
        MetricSummary {
            rmse: col(|m| m.rmse),
            mae: col(|m| m.mae),
            mre: col(|m| m.mre),
        }
    }
}

/// Label corruption applied to training folds only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub fraction: f64,
    pub factor: f64,
}

impl Default for Contamination {
    fn default() -> Self {
        Contamination {
            fraction: 0.2,
            factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub contamination: Option<Contamination>,
}

impl CvOptions {
    pub fn new(folds: usize, repeats: usize, seed: u64) -> Self {
        CvOptions {
            folds,
            repeats,
            seed,
            contamination: None,
        }
    }

    pub fn contaminated(mut self, contamination: Contamination) -> Self {
        self.contamination = Some(contamination);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub metrics: MetricSet,
    /// Indices into the full dataset whose labels were corrupted for this fit.
    pub outlier_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    /// Mean ± sd over every (repeat, fold) pair.
    pub across_folds: MetricSummary,
    /// Mean ± sd of the per-repeat fold means.
    pub across_repeats: MetricSummary,
}

/// Repeated k-fold cross-validation. Repeat `r` shuffles with a seed derived
/// from `opts.seed`; when contamination is on, only the training part of
/// each split is corrupted and the held-out fold stays clean.
pub fn cross_validate(cfg: &FitterConfig, data: &Dataset, opts: &CvOptions) -> Result<CvResult> {
    if opts.repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let mut jobs = Vec::new();
    for r in 0..opts.repeats {
        let folds = kfold_indices(data.len(), opts.folds, derive_seed(opts.seed, &format!("folds/{r}")))?;
        for f in 0..folds.len() {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            jobs.push((r, f, train_idx, folds[f].clone()));
        }
    }

    let folds = jobs
        .into_par_iter()
        .map(|(r, f, train_idx, test_idx)| {
            run_fold(cfg, data, opts, (r, f), &train_idx, &test_idx)
                .map_err(|e| e.context(format!("repeat {r}, fold {f}")))
                .map(|(metrics, outlier_indices)| FoldResult {
                    repeat: r,
                    fold: f,
                    metrics,
                    outlier_indices,
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let all: Vec<MetricSet> = folds.iter().map(|f| f.metrics).collect();
    let repeat_means: Vec<MetricSet> = all
        .chunks(opts.folds)
        .map(|chunk| {
            let s = MetricSummary::of(chunk);
            MetricSet {
                rmse: s.rmse.mean,
                mae: s.mae.mean,
                mre: s.mre.mean,
                mre_excluded_count: chunk.iter().map(|m| m.mre_excluded_count).sum(),
            }
        })
        .collect();
    Ok(CvResult {
        across_folds: MetricSummary::of(&all),
        across_repeats: MetricSummary::of(&repeat_means),
        folds,
    })
}

fn run_fold(
    cfg: &FitterConfig,
    data: &Dataset,
    opts: &CvOptions,
    (repeat, fold): (usize, usize),
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<(MetricSet, Vec<usize>)> {
    let mut train = data.subset(train_idx)?;
    let mut outliers = Vec::new();
    if let Some(cont) = opts.contamination {
        let seed = derive_seed(opts.seed, &format!("contaminate/{repeat}/{fold}"));
        let before = train.provenance().outlier_indices.clone();
        train = inject_outliers(&train, cont.fraction, cont.factor, seed)?;
        outliers = train
            .provenance()
            .outlier_indices
            .iter()
            .filter(|i| !before.contains(i))
            .map(|&i| train_idx[i])
            .collect();
        outliers.sort_unstable();
    }
    let test = data.subset(test_idx)?;
    let fitted = cfg.fit(&train)?;
    let pred = fitted.predict(test.features())?;
    Ok((metrics(test.targets(), &pred)?, outliers))
}

/// Axes of the hyperparameter grid. Axes a learner does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub l_fractions: Vec<f64>,
}

impl GridSpec {
    /// `C ∈ {2^-4..2^8}`, `γ, λ ∈ {2^-3..2^3}`, `L/N ∈ {5%, 10%, 20%, ..., 50%}`.
    pub fn standard() -> GridSpec {
        let pow2 = |lo: i32, hi: i32| (lo..=hi).map(|i| 2f64.powi(i)).collect::<Vec<_>>();
        GridSpec {
            c_values: pow2(-4, 8),
            gamma_values: pow2(-3, 3),
            lambda_values: pow2(-3, 3),
            l_fractions: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("C", &self.c_values),
            ("gamma", &self.gamma_values),
            ("lambda", &self.lambda_values),
        ] {
            if values.is_empty() {
                return Err(Error::invalid(format!("grid axis {name} is empty")));
            }
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::invalid(format!("grid axis {name} has non-positive value {v}")));
            }
        }
        if self.l_fractions.is_empty() {
            return Err(Error::invalid("grid axis L is empty"));
        }
        if let Some(v) = self.l_fractions.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::invalid(format!("hidden fraction {v} not in (0, 1]")));
        }
        Ok(())
    }
}

/// One evaluated grid point. Unused axes are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub l_fraction: Option<f64>,
    /// Mean CV RMSE; infinite when the cell failed.
    pub mean_rmse: f64,
    pub summary: Option<MetricSummary>,
    pub error: Option<String>,
}

impl GridCell {
    /// `base` with this cell's parameters applied.
    pub fn apply(&self, base: &FitterConfig) -> Result<FitterConfig> {
        let mut cfg = *base;
        cfg.c = self.c;
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        if let Some(l) = self.lambda {
            let floor = cfg.irls.weight_spec.weight_floor();
            cfg.irls.weight_spec = WeightSpec::sigmoid(l)?.with_floor(floor)?;
        }
        if let Some(f) = self.l_fraction {
            cfg.hidden = HiddenSize::Fraction(f);
        }
        Ok(cfg)
    }

    fn key(&self) -> [f64; 5] {
        let rmse = if self.mean_rmse.is_nan() { f64::INFINITY } else { self.mean_rmse };
        [
            rmse,
            self.c,
            self.gamma.unwrap_or(0.0),
            self.lambda.unwrap_or(0.0),
            self.l_fraction.unwrap_or(0.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

/// Cells of the Cartesian grid relevant to `base.kind`, in C-major order.
pub fn grid_cells(base: &FitterConfig, grid: &GridSpec) -> Vec<GridCell> {
    let some = |v: &[f64]| v.iter().map(|&x| Some(x)).collect::<Vec<_>>();
    let gammas = if base.kind.is_svr() { some(&grid.gamma_values) } else { vec![None] };
    let sigmoid = matches!(base.irls.weight_spec.family(), WeightFamily::SigmoidInduced { .. });
    let lambdas = if base.kind.is_irls() && sigmoid {
        some(&grid.lambda_values)
    } else {
        vec![None]
    };
    let fractions = if base.kind.is_svr() { vec![None] } else { some(&grid.l_fractions) };
    let mut cells = Vec::new();
    for &c in &grid.c_values {
        for &gamma in &gammas {
            for &lambda in &lambdas {
                for &l_fraction in &fractions {
                    cells.push(GridCell {
                        c,
                        gamma,
                        lambda,
                        l_fraction,
                        mean_rmse: f64::INFINITY,
                        summary: None,
                        error: None,
                    });
                }
            }
        }
    }
    cells
}

/// Exhaustive search by mean CV RMSE. Ties go to the smaller C, then γ,
/// then λ, then L. A cell whose fit fails scores infinite RMSE.
pub fn grid_search(base: &FitterConfig, grid: &GridSpec, data: &Dataset, opts: &CvOptions) -> Result<GridResult> {
    grid.validate()?;
    let cells: Vec<GridCell> = grid_cells(base, grid)
        .into_par_iter()
        .map(|mut cell| {
            let outcome = cell.apply(base).and_then(|cfg| cross_validate(&cfg, data, opts));
            match outcome {
                Ok(cv) => {
                    cell.mean_rmse = cv.across_folds.rmse.mean;
                    cell.summary = Some(cv.across_folds);
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect();
    let best = argmin(&cells);
    Ok(GridResult { cells, best })
}

fn argmin(cells: &[GridCell]) -> usize {
    let mut best = 0;
    for (i, cell) in cells.iter().enumerate().skip(1) {
        let (a, b) = (cell.key(), cells[best].key());
        let less = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .is_some_and(|o| o.is_lt());
        if less {
            best = i;
        }
    }
    best
}
