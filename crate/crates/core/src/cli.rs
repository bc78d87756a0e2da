//! Command-line experiment harness.
//!
//! Every run writes its CSV outputs plus a `manifest.json` holding the fully
//! resolved configuration and a SHA-256 checksum of each output. `replay`
//! re-runs a manifest and can verify that the outputs are byte-identical.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, derive_seed, NoiseKind, NoiseSpec, TargetColumn};
use crate::error::{Error, Result};
use crate::eval::{self, Contamination, CvOptions, CvResult, GridResult, GridSpec, MetricSet, MetricSummary};
use crate::irls::IrlsConfig;
use crate::model::{FitterConfig, HiddenSize, ModelKind, Predict};
use crate::robustness::{self, OutlierTest, DEFAULT_GRID_POINTS};
use crate::weights::{WeightFamily, WeightSpec, DEFAULT_WEIGHT_FLOOR};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "irls-kbr", version, about = "Robust kernel regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate loss, gradient and weight curves of weight families.
    Weights(RunArgs),
    /// Noisy sinc benchmark over a list of seeds.
    Synthetic(RunArgs),
    /// Grid search and repeated k-fold evaluation on a CSV dataset.
    Benchmark(RunArgs),
    /// Regression curves, outlier weight trajectories and sensitivity curves.
    Sensitivity(RunArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail unless every output matches the recorded checksum.
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file with any of the settings below; flags take precedence.
    /// A run manifest is accepted too.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum NoiseName {
    #[serde(rename = "gauss")]
    Gauss,
    #[serde(rename = "laplace")]
    Laplace,
    #[serde(rename = "chisq4")]
    #[value(name = "chisq4")]
    Chisq4,
}

impl NoiseName {
    fn kind(&self) -> NoiseKind {
        match self {
            NoiseName::Gauss => NoiseKind::Gaussian { mean: 0.0, sd: 0.3 },
            NoiseName::Laplace => NoiseKind::Laplace {
                location: 0.0,
                scale: 1.0,
            },
            NoiseName::Chisq4 => NoiseKind::ChiSquared { dof: 4 },
        }
    }

    /// `(C, γ, λ)` used for the sinc benchmark unless overridden.
    fn defaults(&self) -> (f64, f64, f64) {
        match self {
            NoiseName::Gauss => (1.0, 0.125, 4.0),
            NoiseName::Laplace | NoiseName::Chisq4 => (0.1, 0.125, 8.0),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            NoiseName::Gauss => "gauss",
            NoiseName::Laplace => "laplace",
            NoiseName::Chisq4 => "chisq4",
        }
    }
}

/// Run settings. The same fields come from flags, a JSON config file, or a
/// manifest; after resolution every field used by the command is set.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Master seed; all component seeds are derived from it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    /// Weight family as `name[:param...]`, e.g. `huber:1.345` or `hampel:1:2:3`.
    /// `weights` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_family: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_floor: Option<f64>,
    /// Sigmoid-induced weight parameter.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// ELM hidden nodes as a fraction of the training-set size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_frac: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Corrupt 20% of training labels by a factor of 10.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contaminate: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseName>,
    /// Subtract the mean from chi-squared noise.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_noise: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    /// Number of seeds for `synthetic`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    /// Curve range for `weights`, as `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Problem for `sensitivity`: test1 or test2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<OutlierTest>,
    /// CSV dataset for `benchmark`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Target column, by 0-based index or header name (default: last column).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub header: Option<bool>,
    /// Also min-max scale the targets to [0, 1].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_targets: Option<bool>,
    /// Grid-search axes (config file only).
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr; $($f:ident),*) => {
        Settings { $($f: $hi.$f.or($lo.$f),)* }
    };
}

impl Settings {
    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        overlay!(self, lower; seed, model, weight_family, weight_floor, lambda, c, gamma,
            hidden_frac, max_iter, tol, contaminate, noise, center_noise, folds, repeats,
            seeds, n_train, n_test, range, step, test, data, target, header, scale_targets, grid)
    }

    /// Loads a config file, or the `config` member of a manifest.
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
        let value = match value {
            serde_json::Value::Object(mut map) if map.contains_key("command") && map.contains_key("config") => {
                map.remove("config").expect("checked above")
            }
            other => other,
        };
        serde_json::from_value(value).map_err(|e| json_error(path, e))
    }
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        row: e.line(),
        column: e.column(),
        detail: format!("{}: {e}", path.display()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Settings,
    /// Output file name to lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Command-specific record (e.g. contaminated indices).
    pub details: serde_json::Value,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| json_error(path, e))
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    let (name, args) = match command {
        Command::Weights(a) => ("weights", a),
        Command::Synthetic(a) => ("synthetic", a),
        Command::Benchmark(a) => ("benchmark", a),
        Command::Sensitivity(a) => ("sensitivity", a),
        Command::Replay { manifest, out, verify } => return replay(&manifest, &out, verify),
    };
    let settings = match &args.config {
        Some(path) => args.settings.over(Settings::from_file(path)?),
        None => args.settings,
    };
    let manifest = execute(name, settings, &args.out)?;
    println!(
        "{name}: wrote {} file(s) and {MANIFEST_FILE} to {}",
        manifest.outputs.len(),
        args.out.display()
    );
    Ok(())
}

fn replay(path: &Path, out: &Path, verify: bool) -> Result<()> {
    let recorded = RunManifest::load(path)?;
    let fresh = execute(&recorded.command, recorded.config.clone(), out)?;
    if verify {
        let mismatched: Vec<&String> = recorded
            .outputs
            .iter()
            .filter(|(file, sum)| fresh.outputs.get(*file) != Some(*sum))
            .map(|(file, _)| file)
            .collect();
        if !mismatched.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
            return Err(Error::numerical(
                "replay",
                format!("outputs differ from the manifest: {mismatched:?}"),
            ));
        }
        println!("replay: {} output(s) match the manifest", fresh.outputs.len());
    }
    Ok(())
}

/// Resolves defaults, runs `command`, and writes outputs plus the manifest.
pub fn execute(command: &str, settings: Settings, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let settings = resolve(command, settings)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut sink = Outputs::new(out);
    let details = match command {
        "weights" => cmd_weights(&settings, &mut sink)?,
        "synthetic" => cmd_synthetic(&settings, &mut sink)?,
        "benchmark" => cmd_benchmark(&settings, &mut sink)?,
        "sensitivity" => cmd_sensitivity(&settings, &mut sink)?,
        other => return Err(Error::Usage(format!("unknown command '{other}'"))),
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: settings,
        outputs: sink.checksums,
        details,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    let path = out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn resolve(command: &str, s: Settings) -> Result<Settings> {
    let mut s = s;
    s.seed.get_or_insert(0);
    s.model.get_or_insert(ModelKind::IrlsSvr);
    s.weight_floor.get_or_insert(DEFAULT_WEIGHT_FLOOR);
    s.max_iter.get_or_insert(50);
    s.tol.get_or_insert(1e-6);
    if command != "benchmark" {
        s.hidden_frac.get_or_insert(0.1);
    }
    match command {
        "weights" => {
            s.lambda.get_or_insert(1.0);
            s.range.get_or_insert(vec![-3.0, 3.0]);
            s.step.get_or_insert(0.01);
            let range = s.range.as_ref().expect("set above");
            if range.len() != 2 || !(range[0] < range[1]) {
                return Err(Error::Usage(format!("--range needs lo,hi with lo < hi, got {range:?}")));
            }
            if !(s.step.unwrap() > 0.0) {
                return Err(Error::Usage("--step must be > 0".into()));
            }
        }
        "synthetic" => {
            let noise = *s.noise.get_or_insert(NoiseName::Gauss);
            let (c, gamma, lambda) = noise.defaults();
            s.c.get_or_insert(c);
            s.gamma.get_or_insert(gamma);
            s.lambda.get_or_insert(lambda);
            s.center_noise.get_or_insert(false);
            s.seeds.get_or_insert(50);
            s.n_train.get_or_insert(500);
            s.n_test.get_or_insert(300);
            if s.seeds == Some(0) {
                return Err(Error::Usage("--seeds must be at least 1".into()));
            }
        }
        "benchmark" => {
            if s.data.is_none() {
                return Err(Error::Usage("benchmark needs --data <csv>".into()));
            }
            s.target.get_or_insert_with(|| "last".into());
            s.header.get_or_insert(false);
            s.scale_targets.get_or_insert(false);
            s.contaminate.get_or_insert(false);
            s.folds.get_or_insert(10);
            s.repeats.get_or_insert(5);
            let mut grid = s.grid.take().unwrap_or_else(GridSpec::standard);
            // A fixed value on the command line pins that axis of the grid.
            if let Some(c) = s.c.take() {
                grid.c_values = vec![c];
            }
            if let Some(g) = s.gamma.take() {
                grid.gamma_values = vec![g];
            }
            if let Some(l) = s.lambda.take() {
                grid.lambda_values = vec![l];
            }
            if let Some(f) = s.hidden_frac.take() {
                grid.l_fractions = vec![f];
            }
            grid.validate()?;
            s.grid = Some(grid);
        }
        "sensitivity" => {
            s.test.get_or_insert(OutlierTest::Test1);
            s.c.get_or_insert(8.0);
            s.gamma.get_or_insert(4.0);
            s.lambda.get_or_insert(4.0);
        }
        other => return Err(Error::Usage(format!("unknown command '{other}'"))),
    }
    if command != "weights" {
        s.weight_family.get_or_insert_with(|| vec!["sigmoid-induced".into()]);
        if s.weight_family.as_ref().is_some_and(|f| f.len() != 1) {
            return Err(Error::Usage(format!("{command} takes exactly one --weight-family")));
        }
    } else {
        s.weight_family.get_or_insert_with(|| vec!["sigmoid-induced".into()]);
    }
    // Spell out family parameters so the manifest is explicit.
    let lambda = s.lambda;
    let canonical = s
        .weight_family
        .as_ref()
        .expect("set above")
        .iter()
        .map(|f| parse_weight_family(f, lambda).map(|fam| family_string(&fam)))
        .collect::<Result<Vec<_>>>()?;
    s.weight_family = Some(canonical);
    Ok(s)
}

/// Parses `name[:p1[:p2:p3]]`. A bare `sigmoid-induced` takes `lambda`;
/// other bare names take their usual tuning constants.
pub fn parse_weight_family(text: &str, lambda: Option<f64>) -> Result<WeightFamily> {
    let mut parts = text.split(':');
    let name = parts.next().unwrap_or_default().trim();
    let params = parts
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad weight parameter '{p}' in '{text}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let one = |default: f64| match params.as_slice() {
        [] => Ok(default),
        [v] => Ok(*v),
        _ => Err(Error::Usage(format!("'{name}' takes one parameter, got '{text}'"))),
    };
    let family = match name {
        "gauss" | "laplace" if !params.is_empty() => {
            return Err(Error::Usage(format!("'{name}' takes no parameters")));
        }
        "gauss" => WeightFamily::Gauss,
        "laplace" => WeightFamily::Laplace,
        "huber" => WeightFamily::Huber { k: one(1.345)? },
        "tukey" => WeightFamily::Tukey { k: one(4.685)? },
        "andrew" => WeightFamily::Andrew { k: one(1.339)? },
        "welsch" => WeightFamily::Welsch { k: one(2.985)? },
        "hampel" => match params.as_slice() {
            [] => WeightFamily::Hampel { a: 2.0, b: 4.0, c: 8.0 },
            [a, b, c] => WeightFamily::Hampel { a: *a, b: *b, c: *c },
            _ => return Err(Error::Usage(format!("hampel takes three parameters, got '{text}'"))),
        },
        "sigmoid-induced" | "sigmoid" => WeightFamily::SigmoidInduced {
            lambda: one(lambda.unwrap_or(1.0))?,
        },
        other => return Err(Error::Usage(format!("unknown weight family '{other}'"))),
    };
    WeightSpec::new(family)?;
    Ok(family)
}

pub fn family_string(family: &WeightFamily) -> String {
    match *family {
        WeightFamily::Gauss | WeightFamily::Laplace => family.name().to_string(),
        WeightFamily::Huber { k }
        | WeightFamily::Tukey { k }
        | WeightFamily::Andrew { k }
        | WeightFamily::Welsch { k } => format!("{}:{k}", family.name()),
        WeightFamily::Hampel { a, b, c } => format!("hampel:{a}:{b}:{c}"),
        WeightFamily::SigmoidInduced { lambda } => format!("sigmoid-induced:{lambda}"),
    }
}

fn weight_spec(s: &Settings, text: &str) -> Result<WeightSpec> {
    WeightSpec::new(parse_weight_family(text, s.lambda)?)?.with_floor(s.weight_floor.unwrap_or(DEFAULT_WEIGHT_FLOOR))
}

fn base_fitter(s: &Settings, kind: ModelKind) -> Result<FitterConfig> {
    let spec = weight_spec(s, &s.weight_family.as_ref().expect("resolved")[0])?;
    let irls = IrlsConfig::new(spec)
        .with_max_iter(s.max_iter.expect("resolved"))
        .with_tol(s.tol.expect("resolved"));
    irls.validate()?;
    let mut cfg = FitterConfig::new(kind, s.c.unwrap_or(1.0)).with_irls(irls);
    cfg.gamma = s.gamma.unwrap_or(1.0);
    cfg.hidden = HiddenSize::Fraction(s.hidden_frac.unwrap_or(0.1));
    Ok(cfg)
}

/// Plain, single-pass and iterated variants of the configured learner.
fn method_set(base: &FitterConfig) -> [FitterConfig; 3] {
    let plain = base.with_kind(base.kind.plain());
    let robust = base.with_kind(base.kind.robust());
    let single = robust.with_irls(robust.irls.with_max_iter(1));
    [plain, single, robust]
}

/// Collects written files and their checksums.
struct Outputs {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            checksums: BTreeMap::new(),
        }
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
        w.write_record(header).map_err(to_err)?;
        for row in rows {
            w.write_record(row).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        self.checksums.insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn cmd_weights(s: &Settings, out: &mut Outputs) -> Result<serde_json::Value> {
    let range = s.range.as_ref().expect("resolved");
    let (lo, hi, step) = (range[0], range[1], s.step.expect("resolved"));
    let count = ((hi - lo) / step).round() as usize;
    let xs: Vec<f64> = (0..=count)
        .map(|i| if i == count { hi } else { lo + step * i as f64 })
        .collect();
    let mut files = Vec::new();
    for text in s.weight_family.as_ref().expect("resolved") {
        let spec = weight_spec(s, text)?;
        let rows: Vec<Vec<String>> = xs
            .iter()
            .map(|&x| vec![num(x), num(spec.loss(x)), num(spec.gradient(x)), num(spec.weight(x))])
            .collect();
        let name = format!("weights_{}.csv", text.replace(':', "_"));
        out.csv(&name, &["x", "loss", "gradient", "weight"], &rows)?;
        files.push(name);
    }
    Ok(serde_json::json!({ "curves": files }))
}

fn cmd_synthetic(s: &Settings, out: &mut Outputs) -> Result<serde_json::Value> {
    let seed = s.seed.expect("resolved");
    let noise = s.noise.expect("resolved");
    let methods = method_set(&base_fitter(s, s.model.expect("resolved"))?);
    let (n_train, n_test) = (s.n_train.expect("resolved"), s.n_test.expect("resolved"));
    let center = s.center_noise.expect("resolved");

    let runs: Vec<Vec<MetricSet>> = (0..s.seeds.expect("resolved"))
        .into_par_iter()
        .map(|j| {
            let (train, test) = data::gen_sinc(n_train, n_test, derive_seed(seed, &format!("synthetic/data/{j}")))?;
            let mut spec = NoiseSpec::new(noise.kind(), derive_seed(seed, &format!("synthetic/noise/{j}")));
            spec.center = center;
            let train = train.with_noise(&spec)?;
            let hidden_seed = derive_seed(seed, &format!("synthetic/hidden/{j}"));
            methods
                .iter()
                .map(|m| {
                    let pred = m.with_hidden_seed(hidden_seed).fit(&train)?.predict(test.features())?;
                    eval::metrics(test.targets(), &pred)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.context(format!("seed index {j}")))
        })
        .collect::<Result<_>>()?;

    let mut run_rows = Vec::new();
    for (j, row) in runs.iter().enumerate() {
        for (m, metrics) in methods.iter().zip(row) {
            run_rows.push(vec![
                j.to_string(),
                m.label().to_string(),
                num(metrics.rmse),
                num(metrics.mae),
                num(metrics.mre),
            ]);
        }
    }
    out.csv("synthetic_runs.csv", &["seed_index", "method", "rmse", "mae", "mre"], &run_rows)?;

    let mut summary = Vec::new();
    for (i, m) in methods.iter().enumerate() {
        let sets: Vec<MetricSet> = runs.iter().map(|r| r[i]).collect();
        let stats = MetricSummary::of(&sets);
        summary.push(
            [
                vec![noise.name().to_string(), m.label().to_string()],
                param_cells(m),
                summary_cells(&stats),
            ]
            .concat(),
        );
    }
    out.csv(
        "synthetic_summary.csv",
        &[
            "noise", "method", "c", "gamma", "lambda", "hidden_frac", "rmse_mean", "rmse_sd", "mae_mean", "mae_sd",
            "mre_mean", "mre_sd",
        ],
        &summary,
    )?;
    Ok(serde_json::json!({ "methods": methods.iter().map(|m| m.label()).collect::<Vec<_>>() }))
}

fn param_cells(m: &FitterConfig) -> Vec<String> {
    let lambda = match (m.kind.is_irls(), m.irls.weight_spec.family()) {
        (true, WeightFamily::SigmoidInduced { lambda }) => Some(lambda),
        _ => None,
    };
    let frac = match m.hidden {
        HiddenSize::Fraction(f) if !m.kind.is_svr() => Some(f),
        _ => None,
    };
    vec![num(m.c), opt(m.kind.is_svr().then_some(m.gamma)), opt(lambda), opt(frac)]
}

fn summary_cells(s: &MetricSummary) -> Vec<String> {
    [s.rmse, s.mae, s.mre].iter().flat_map(|m| [num(m.mean), num(m.sd)]).collect()
}

fn cmd_benchmark(s: &Settings, out: &mut Outputs) -> Result<serde_json::Value> {
    let seed = s.seed.expect("resolved");
    let path = s.data.as_ref().expect("resolved");
    let Ok(target) = s.target.as_deref().unwrap_or("last").parse::<TargetColumn>();
    let raw = data::load_csv(path, &target, s.header.expect("resolved"))?;
    let (mut dataset, _) = data::scale_unit_interval(&raw)?;
    if s.scale_targets.expect("resolved") {
        dataset = data::scale_targets(&dataset)?.0;
    }
    let grid = s.grid.as_ref().expect("resolved");
    let base = base_fitter(s, s.model.expect("resolved"))?.with_hidden_seed(derive_seed(seed, "benchmark/hidden"));
    let opts = CvOptions::new(s.folds.expect("resolved"), s.repeats.expect("resolved"), derive_seed(seed, "benchmark/cv"));
    let contaminate = s.contaminate.expect("resolved");

    let mut results = Vec::new();
    let mut outliers = serde_json::Value::Null;
    for method in method_set(&base) {
        let label = method.label();
        let searched = eval::grid_search(&method, grid, &dataset, &opts).map_err(|e| e.context(label))?;
        out.csv(&format!("benchmark_grid_{label}.csv"), GRID_HEADER, &grid_rows(&searched))?;
        let best = searched.best_cell();
        if !best.mean_rmse.is_finite() {
            return Err(Error::numerical(
                "benchmark",
                format!("every grid cell failed for {label}: {}", best.error.as_deref().unwrap_or("")),
            ));
        }
        let tuned = best.apply(&method)?;
        let clean = eval::cross_validate(&tuned, &dataset, &opts).map_err(|e| e.context(label))?;
        results.push(result_row(&tuned, "clean", &clean));
        if contaminate {
            let dirty_opts = opts.contaminated(Contamination::default());
            let dirty = eval::cross_validate(&tuned, &dataset, &dirty_opts).map_err(|e| e.context(label))?;
            results.push(result_row(&tuned, "contaminated", &dirty));
            // Corruption depends only on the split seed, so it is shared by all methods.
            outliers = serde_json::json!(dirty
                .folds
                .iter()
                .map(|f| serde_json::json!({ "repeat": f.repeat, "fold": f.fold, "indices": f.outlier_indices }))
                .collect::<Vec<_>>());
        }
    }
    out.csv("benchmark_results.csv", RESULT_HEADER, &results)?;
    Ok(serde_json::json!({
        "samples": dataset.len(),
        "features": dataset.n_features(),
        "scaling": "full-data",
        "contaminated_outliers": outliers,
    }))
}

const GRID_HEADER: &[&str] = &[
    "c", "gamma", "lambda", "hidden_frac", "rmse_mean", "rmse_sd", "mae_mean", "mae_sd", "mre_mean", "mre_sd", "error",
];

fn grid_rows(res: &GridResult) -> Vec<Vec<String>> {
    res.cells
        .iter()
        .map(|cell| {
            let stats = match &cell.summary {
                Some(s) => summary_cells(s),
                None => vec![num(f64::INFINITY), String::new(), String::new(), String::new(), String::new(), String::new()],
            };
            [
                vec![num(cell.c), opt(cell.gamma), opt(cell.lambda), opt(cell.l_fraction)],
                stats,
                vec![cell.error.clone().unwrap_or_default()],
            ]
            .concat()
        })
        .collect()
}

const RESULT_HEADER: &[&str] = &[
    "method",
    "condition",
    "c",
    "gamma",
    "lambda",
    "hidden_frac",
    "rmse_mean",
    "rmse_sd_folds",
    "rmse_sd_repeats",
    "mae_mean",
    "mae_sd_folds",
    "mae_sd_repeats",
    "mre_mean",
    "mre_sd_folds",
    "mre_sd_repeats",
];

fn result_row(m: &FitterConfig, condition: &str, cv: &CvResult) -> Vec<String> {
    let (f, r) = (&cv.across_folds, &cv.across_repeats);
    let mut row = vec![m.label().to_string(), condition.to_string()];
    row.extend(param_cells(m));
    for (a, b) in [(f.rmse, r.rmse), (f.mae, r.mae), (f.mre, r.mre)] {
        row.extend([num(a.mean), num(a.sd), num(b.sd)]);
    }
    row
}

fn cmd_sensitivity(s: &Settings, out: &mut Outputs) -> Result<serde_json::Value> {
    let test = s.test.expect("resolved");
    let problem = test.problem();
    let full = problem.full()?;
    let grid = robustness::default_grid(&full, DEFAULT_GRID_POINTS)?;
    let base = base_fitter(s, s.model.expect("resolved"))?.with_hidden_seed(derive_seed(s.seed.expect("resolved"), "sensitivity/hidden"));
    let plain = base.with_kind(base.kind.plain());
    let robust = base.with_kind(base.kind.robust());
    let (pl, rl) = (plain.label(), robust.label());
    let xs: Vec<f64> = grid.column(0).iter().copied().collect();

    let plain_fit = plain.fit(&full)?;
    let robust_fit = robust.fit(&full)?;
    let p_pred = plain_fit.predict(&grid)?;
    let r_pred = robust_fit.predict(&grid)?;
    let rows: Vec<Vec<String>> = (0..xs.len())
        .map(|i| vec![num(xs[i]), num(test.truth(xs[i])), num(p_pred[i]), num(r_pred[i])])
        .collect();
    out.csv(&format!("sensitivity_{}_regression.csv", test.name()), &["x", "true", pl, rl], &rows)?;

    let trace = robust_fit.trace.as_ref().expect("robust fits carry a trace");
    let outlier_idx = problem.outlier_indices();
    let traj = robustness::weight_trajectory(trace, &outlier_idx)?;
    let n_clean = problem.clean.len();
    let mut header = vec!["iteration".to_string()];
    header.extend((0..outlier_idx.len()).map(|i| format!("outlier_{i}")));
    header.push("clean_median".into());
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            let mut row = vec![(k + 1).to_string()];
            row.extend(traj.iter().map(|t| num(t[k])));
            row.push(num(robustness::median(&rec.weights.as_slice()[..n_clean])));
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(&format!("sensitivity_{}_weights.csv", test.name()), &header_refs, &rows)?;

    let mut curves = Vec::new();
    let mut summary = Vec::new();
    for (i, &(ox, oy)) in problem.outliers.iter().enumerate() {
        let p = problem.sensitivity(i, |d: &data::Dataset| plain.fit(d), &grid)?;
        let r = problem.sensitivity(i, |d: &data::Dataset| robust.fit(d), &grid)?;
        summary.push(vec![
            i.to_string(),
            num(ox),
            num(oy),
            num(p.max_abs()),
            num(r.max_abs()),
            num(p.abs_area()?),
            num(r.abs_area()?),
        ]);
        curves.push((p.values, r.values));
    }
    let mut header = vec!["x".to_string()];
    for i in 0..curves.len() {
        header.push(format!("{pl}_outlier_{i}"));
        header.push(format!("{rl}_outlier_{i}"));
    }
    let rows: Vec<Vec<String>> = (0..xs.len())
        .map(|g| {
            let mut row = vec![num(xs[g])];
            for (p, r) in &curves {
                row.extend([num(p[g]), num(r[g])]);
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(&format!("sensitivity_{}_sc.csv", test.name()), &header_refs, &rows)?;
    let plain_max = format!("{pl}_max_abs");
    let robust_max = format!("{rl}_max_abs");
    let plain_area = format!("{pl}_area");
    let robust_area = format!("{rl}_area");
    out.csv(
        &format!("sensitivity_{}_summary.csv", test.name()),
        &["outlier", "x", "y", &plain_max, &robust_max, &plain_area, &robust_area],
        &summary,
    )?;
    Ok(serde_json::json!({
        "test": test.name(),
        "clean_samples": n_clean,
        "outliers": problem.outliers,
        "irls_iterations": trace.iterations(),
    }))
}
