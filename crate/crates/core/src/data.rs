//! Datasets, synthetic generators, noise and outlier injection, CSV ingestion
//! and min-max feature scaling.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a dataset came from and what has been done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub scaling: Option<ScalingMode>,
    pub targets_scaled: bool,
    pub noise: Option<NoiseSpec>,
    pub outlier_indices: Vec<usize>,
    pub seed: Option<u64>,
}

/// Which rows the min-max parameters were fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// Parameters fitted on the whole dataset before any split.
    FullData,
    /// Parameters fitted on a training split and applied to the rest.
    TrainOnly,
}

/// Feature matrix (one row per sample) plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>, source: impl Into<String>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("dataset has no samples"));
        }
        if features.nrows() != targets.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset {
            features,
            targets,
            provenance: Provenance {
                source: source.into(),
                ..Provenance::default()
            },
        })
    }

    /// One-dimensional inputs.
    pub fn from_1d(x: &[f64], y: &[f64], source: impl Into<String>) -> Result<Self> {
        Dataset::new(
            DMatrix::from_column_slice(x.len(), 1, x),
            DVector::from_column_slice(y),
            source,
        )
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows selected by `indices`, in the given order. Outlier flags are
    /// remapped to the new positions.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("subset is empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "subset index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let features = self.features.select_rows(indices);
        let targets = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.targets[i]));
        let mut provenance = self.provenance.clone();
        provenance.outlier_indices = indices
            .iter()
            .enumerate()
            .filter(|(_, i)| self.provenance.outlier_indices.contains(i))
            .map(|(pos, _)| pos)
            .collect();
        Ok(Dataset {
            features,
            targets,
            provenance,
        })
    }

    /// Copy with one extra sample appended.
    pub fn with_point(&self, x: &[f64], y: f64) -> Result<Dataset> {
        if x.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "point has {} features, dataset has {}",
                x.len(),
                self.n_features()
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("appended point is not finite"));
        }
        let n = self.len();
        let mut features = self.features.clone().insert_row(n, 0.0);
        for (j, &v) in x.iter().enumerate() {
            features[(n, j)] = v;
        }
        let targets = self.targets.clone().insert_row(n, y);
        Ok(Dataset {
            features,
            targets,
            provenance: self.provenance.clone(),
        })
    }

    /// Copy with the targets replaced.
    pub fn with_targets(&self, targets: DVector<f64>) -> Result<Dataset> {
        if targets.len() != self.len() || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("replacement targets have wrong length or are not finite"));
        }
        Ok(Dataset {
            features: self.features.clone(),
            targets,
            provenance: self.provenance.clone(),
        })
    }

    /// Adds noise to the targets and records the noise model.
    pub fn with_noise(&self, spec: &NoiseSpec) -> Result<Dataset> {
        let mut out = self.with_targets(add_noise(&self.targets, spec)?)?;
        out.provenance.noise = Some(*spec);
        Ok(out)
    }
}

/// Derives an independent sub-seed for a named component from a run's
/// master seed (splitmix64 finalizer over `master ^ hash(stream)`).
pub fn derive_seed(master: u64, stream: &str) -> u64 {
    let tag = stream
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut z = (master ^ tag).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `sin(x)/x`, continuous at the origin.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Sinc benchmark: inputs uniform on [-10, 10], clean targets. The training
/// inputs are drawn first, then the test inputs, from one seeded stream.
pub fn gen_sinc(n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::invalid("sinc sample counts must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize, label: &str| -> Result<Dataset> {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| sinc(v)).collect();
        let mut d = Dataset::from_1d(&x, &y, format!("sinc-{label}"))?;
        d.provenance.seed = Some(seed);
        Ok(d)
    };
    let train = draw(n_train, "train")?;
    let test = draw(n_test, "test")?;
    Ok((train, test))
}

/// Additive noise distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian { mean: f64, sd: f64 },
    Laplace { location: f64, scale: f64 },
    /// Sum of `dof` squared standard normals. Raw draws have mean `dof`.
    ChiSquared { dof: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
    /// Subtract the distribution mean from chi-squared draws.
    #[serde(default)]
    pub center: bool,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        NoiseSpec {
            kind,
            seed,
            center: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            NoiseKind::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            NoiseKind::Laplace { location, scale } => {
                location.is_finite() && scale.is_finite() && scale > 0.0
            }
            NoiseKind::ChiSquared { dof } => dof > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid noise parameters {:?}", self.kind)))
        }
    }

    /// Draws `n` i.i.d. noise values.
    pub fn sample(&self, n: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let draws = match self.kind {
            NoiseKind::Gaussian { mean, sd } => (0..n)
                .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            NoiseKind::Laplace { location, scale } => (0..n)
                .map(|_| {
                    // Inverse CDF with u uniform on (-1/2, 1/2).
                    let u: f64 = rng.random::<f64>() - 0.5;
                    location - scale * u.signum() * (-2.0 * u.abs()).ln_1p()
                })
                .collect(),
            NoiseKind::ChiSquared { dof } => {
                let shift = if self.center { dof as f64 } else { 0.0 };
                (0..n)
                    .map(|_| {
                        let s: f64 = (0..dof)
                            .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                            .sum();
                        s - shift
                    })
                    .collect()
            }
        };
        Ok(draws)
    }
}

/// Returns `y + e` with `e` drawn from `spec`.
pub fn add_noise(y: &DVector<f64>, spec: &NoiseSpec) -> Result<DVector<f64>> {
    let e = spec.sample(y.len())?;
    Ok(DVector::from_iterator(y.len(), y.iter().zip(e).map(|(a, b)| a + b)))
}

/// Multiplies the targets of `round(fraction * N)` distinct, uniformly chosen
/// samples by `factor` (round half up). The chosen indices are recorded in the
/// provenance in ascending order.
pub fn inject_outliers(data: &Dataset, fraction: f64, factor: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("outlier fraction {fraction} not in [0, 1]")));
    }
    if !factor.is_finite() {
        return Err(Error::invalid("outlier factor must be finite"));
    }
    let n = data.len();
    let count = ((fraction * n as f64) + 0.5).floor() as usize;
    let count = count.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();

    let mut targets = data.targets.clone();
    for &i in &chosen {
        targets[i] *= factor;
    }
    let mut out = data.with_targets(targets)?;
    out.provenance.outlier_indices = chosen;
    Ok(out)
}

/// How the target column of a CSV file is identified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    /// Zero-based column index.
    Index(usize),
    /// Header name; requires a header line.
    Name(String),
    /// The rightmost column.
    Last,
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) if s == "last" => TargetColumn::Last,
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

/// Reads a comma-separated numeric file. All non-target columns become
/// features in file order. Error positions are 1-based file rows and columns.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .quoting(false)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: line + 1,
            column: 0,
            detail: e.to_string(),
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push((line + 1, rec));
    }

    let mut rows = records.into_iter();
    let names: Option<Vec<String>> = if header {
        let (_, rec) = rows.next().ok_or(Error::Parse {
            row: 1,
            column: 0,
            detail: "file is empty".into(),
        })?;
        Some(rec.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut width = names.as_ref().map(Vec::len);
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in rows {
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                row,
                column: rec.len().min(w) + 1,
                detail: format!("expected {w} columns, found {}", rec.len()),
            });
        }
        let parsed = rec
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        column: col + 1,
                        detail: format!("non-numeric cell {cell:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        values.push(parsed);
    }
    if values.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            detail: "file has no data rows".into(),
        });
    }
    let width = width.unwrap_or(0);
    if width < 2 {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            detail: "need at least one feature column and a target column".into(),
        });
    }

    let target_idx = match target {
        TargetColumn::Last => width - 1,
        TargetColumn::Index(i) if *i < width => *i,
        TargetColumn::Index(i) => {
            return Err(Error::invalid(format!("target column {i} out of range ({width} columns)")))
        }
        TargetColumn::Name(name) => names
            .as_ref()
            .ok_or_else(|| Error::invalid("target column given by name but file has no header"))?
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("no column named {name:?}")))?,
    };

    let n = values.len();
    let features = DMatrix::from_fn(n, width - 1, |i, j| {
        values[i][if j < target_idx { j } else { j + 1 }]
    });
    let targets = DVector::from_iterator(n, values.iter().map(|r| r[target_idx]));
    Dataset::new(features, targets, path.display().to_string())
}

/// Per-column min-max parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub mins: Vec<f64>,
    pub ranges: Vec<f64>,
    /// Columns that were constant on the fitted data; they map to 0.5.
    pub constant: Vec<bool>,
}

impl ScaleParams {
    pub fn fit(columns: &DMatrix<f64>) -> ScaleParams {
        let mut mins = Vec::with_capacity(columns.ncols());
        let mut ranges = Vec::with_capacity(columns.ncols());
        let mut constant = Vec::with_capacity(columns.ncols());
        for col in columns.column_iter() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            mins.push(lo);
            ranges.push(hi - lo);
            constant.push(hi == lo);
        }
        ScaleParams {
            mins,
            ranges,
            constant,
        }
    }

    pub fn apply(&self, columns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_width(columns)?;
        Ok(DMatrix::from_fn(columns.nrows(), columns.ncols(), |i, j| {
            if self.constant[j] {
                0.5
            } else {
                (columns[(i, j)] - self.mins[j]) / self.ranges[j]
            }
        }))
    }

    pub fn invert(&self, columns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_width(columns)?;
        Ok(DMatrix::from_fn(columns.nrows(), columns.ncols(), |i, j| {
            if self.constant[j] {
                self.mins[j]
            } else {
                columns[(i, j)] * self.ranges[j] + self.mins[j]
            }
        }))
    }

    fn check_width(&self, columns: &DMatrix<f64>) -> Result<()> {
        if columns.ncols() == self.mins.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "scale params fitted on {} columns, got {}",
                self.mins.len(),
                columns.ncols()
            )))
        }
    }
}

/// Min-max scales every feature column of `data` to [0, 1].
pub fn scale_unit_interval(data: &Dataset) -> Result<(Dataset, ScaleParams)> {
    let params = ScaleParams::fit(&data.features);
    let scaled = apply_scaling(data, &params, ScalingMode::FullData)?;
    Ok((scaled, params))
}

/// Applies previously fitted feature parameters to another split.
pub fn apply_scaling(data: &Dataset, params: &ScaleParams, mode: ScalingMode) -> Result<Dataset> {
    let features = params.apply(&data.features)?;
    let mut out = Dataset::new(features, data.targets.clone(), data.provenance.source.clone())?;
    out.provenance = data.provenance.clone();
    out.provenance.scaling = Some(mode);
    Ok(out)
}

/// Min-max scales the targets to [0, 1].
pub fn scale_targets(data: &Dataset) -> Result<(Dataset, ScaleParams)> {
    let col = DMatrix::from_column_slice(data.len(), 1, data.targets.as_slice());
    let params = ScaleParams::fit(&col);
    let scaled = params.apply(&col)?;
    let mut out = data.with_targets(DVector::from_column_slice(scaled.as_slice()))?;
    out.provenance.targets_scaled = true;
    Ok((out, params))
}
