//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use irls_kbr::data::{self, derive_seed, Dataset, NoiseKind, NoiseSpec};
use irls_kbr::elm::{self, Branch};
use irls_kbr::eval;
use irls_kbr::irls::{IrlsConfig, IrlsInit};
use irls_kbr::kernel::{self, KernelSpec};
use irls_kbr::lssvr;
use irls_kbr::model::{FitterConfig, HiddenSize, ModelKind, Predict};
use irls_kbr::robustness::{self, OutlierTest, DEFAULT_GRID_POINTS};
use irls_kbr::weights::{WeightFamily, WeightSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
    let y = DVector::from_fn(n, |i, _| {
        x.row(i).iter().map(|v: &f64| v.sin()).sum::<f64>() + rng.random_range(-0.5..0.5)
    });
    Dataset::new(x, y, "random").unwrap()
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut m = a.clone();
    let mut r = b.clone();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
        m.swap_rows(col, p);
        r.swap_rows(col, p);
        for row in col + 1..n {
            let f = m[(row, col)] / m[(col, col)];
            for k in col..n {
                m[(row, k)] -= f * m[(col, k)];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[(i, k)] * x[k]).sum();
        x[i] = (r[i] - s) / m[(i, i)];
    }
    x
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let gauss = IrlsConfig::new(WeightSpec::gauss());
    let (mut svr_worst, mut elm_worst) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(5..=100);
        let d = rng.random_range(1..=3);
        let data = random_instance(&mut rng, n, d);
        let c = 10f64.powf(rng.random_range(-2.0..3.0));
        let k = KernelSpec::new(10f64.powf(rng.random_range(-2.0..1.0))).unwrap();
        let plain = lssvr::fit_lssvr(&data, c, k).unwrap();
        let (irls, _) = lssvr::fit_irls_svr(&data, c, k, &gauss).unwrap();
        let db = (plain.bias() - irls.bias()).abs() / plain.bias().abs().max(plain.alpha().amax());
        svr_worst = svr_worst.max(rel_err(irls.alpha(), plain.alpha())).max(db);

        let l = rng.random_range(1..=2 * n);
        let seed = rng.random();
        let plain = elm::fit_elm(&data, c, l, seed).unwrap();
        let (irls, _) = elm::fit_irls_elm(&data, c, l, seed, &gauss).unwrap();
        elm_worst = elm_worst.max(rel_err(irls.beta(), plain.beta()));
    }
    Outcome::new(
        svr_worst <= 1e-10 && elm_worst <= 1e-10,
        format!("worst relative difference: SVR {svr_worst:.2e}, ELM {elm_worst:.2e} (limit 1e-10)"),
    )
}

fn criterion_2() -> Outcome {
    let grid: Vec<f64> = (0..1000).map(|i| -5.0 + 10.0 * i as f64 / 999.0).collect();
    let h = 1e-5;
    let mut fd_worst = 0.0f64;
    for lambda in [1.0, 2.0, 3.0, 5.0] {
        let s = WeightSpec::sigmoid(lambda).unwrap();
        for &x in &grid {
            let fd = (s.loss(x + h) - s.loss(x - h)) / (2.0 * h);
            fd_worst = fd_worst.max((fd - s.gradient(x)).abs());
        }
    }
    let families = [
        WeightFamily::Gauss,
        WeightFamily::Laplace,
        WeightFamily::Huber { k: 1.345 },
        WeightFamily::Hampel { a: 2.0, b: 4.0, c: 8.0 },
        WeightFamily::Tukey { k: 4.685 },
        WeightFamily::Andrew { k: 1.339 },
        WeightFamily::Welsch { k: 2.985 },
        WeightFamily::SigmoidInduced { lambda: 2.0 },
    ];
    let mut psi_worst = 0.0f64;
    for f in families {
        let s = WeightSpec::new(f).unwrap();
        for &x in &grid {
            let err = (s.gradient(x) - 2.0 * x * s.weight_unclamped(x)).abs();
            psi_worst = psi_worst.max(err / s.gradient(x).abs().max(1.0));
        }
    }
    Outcome::new(
        fd_worst <= 1e-6 && psi_worst <= 1e-12,
        format!("finite-difference error {fd_worst:.2e} (limit 1e-6), psi = 2xv error {psi_worst:.2e} (limit 1e-12)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::NEG_INFINITY;
    let mut runs = 0;
    for _ in 0..20 {
        let n = rng.random_range(5..=50);
        let d = rng.random_range(1..=2);
        let mut data = random_instance(&mut rng, n, d);
        // A few gross errors so the weights actually move.
        let mut y = data.targets().clone();
        for _ in 0..n / 10 + 1 {
            let i = rng.random_range(0..n);
            y[i] += rng.random_range(-8.0..8.0);
        }
        data = data.with_targets(y).unwrap();
        let c = 10f64.powf(rng.random_range(-1.0..2.0));
        let k = KernelSpec::new(10f64.powf(rng.random_range(-1.5..0.5))).unwrap();
        let lambda = rng.random_range(0.5..8.0);
        let l = rng.random_range(1..=n);
        let seed = rng.random();
        for init in [IrlsInit::UnweightedSolve, IrlsInit::Zero] {
            let cfg = IrlsConfig::new(WeightSpec::sigmoid(lambda).unwrap())
                .with_max_iter(100)
                .with_tol(1e-12)
                .with_init(init);
            let (_, t) = lssvr::fit_irls_svr(&data, c, k, &cfg).unwrap();
            let (_, u) = elm::fit_irls_elm(&data, c, l, seed, &cfg).unwrap();
            worst = worst.max(t.max_risk_increase()).max(u.max_risk_increase());
            runs += 2;
        }
    }
    Outcome::new(
        worst <= 1e-10,
        format!("{runs} IRLS paths, largest risk increase {worst:.2e} (slack 1e-10)"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut data = random_instance(&mut rng, 30, 1);
    let mut y = data.targets().clone();
    y[3] += 6.0;
    y[17] -= 4.0;
    data = data.with_targets(y).unwrap();
    let spec = WeightSpec::sigmoid(3.0).unwrap();
    let cfg = IrlsConfig::new(spec).with_max_iter(10_000).with_tol(1e-10);
    let (model, trace) = lssvr::fit_irls_svr(&data, 5.0, KernelSpec::new(0.5).unwrap(), &cfg).unwrap();
    let kkt = lssvr::kkt_residual(&model, &data, &spec).unwrap();
    let limit = 1e-6 * model.alpha().amax();
    Outcome::new(
        kkt <= limit,
        format!(
            "{} iterations ({:?}), residual {kkt:.2e} vs limit {limit:.2e}",
            trace.iterations(),
            trace.termination
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut svr_worst, mut elm_worst) = (0.0f64, 0.0f64);
    for _ in 0..30 {
        let n = rng.random_range(2..=20);
        let d = rng.random_range(1..=3);
        let data = random_instance(&mut rng, n, d);
        let c = 10f64.powf(rng.random_range(-1.0..2.0));
        let v = DVector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-3.0..1.0)));

        let k = kernel::gram(data.features(), &KernelSpec::new(rng.random_range(0.1..2.0)).unwrap()).unwrap();
        let v_diag = v.map(|w| 1.0 / (c * w));
        let (alpha, bias) = lssvr::solve_weighted_system(&k, data.targets(), &v_diag).unwrap();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            a[(0, i + 1)] = 1.0;
            a[(i + 1, 0)] = 1.0;
            rhs[i + 1] = data.targets()[i];
            for j in 0..n {
                a[(i + 1, j + 1)] = k[(i, j)] + if i == j { v_diag[i] } else { 0.0 };
            }
        }
        let oracle = dense_solve(&a, &rhs);
        let got = DVector::from_iterator(n + 1, std::iter::once(bias).chain(alpha.iter().copied()));
        svr_worst = svr_worst.max(rel_err(&got, &oracle));

        let l = rng.random_range(1..=2 * n);
        let h = DMatrix::from_fn(n, l, |_, _| rng.random_range(0.0..1.0));
        let dh = DMatrix::from_fn(n, l, |i, j| v[i] * h[(i, j)]);
        let mut normal = h.transpose() * &dh;
        for i in 0..l {
            normal[(i, i)] += 1.0 / c;
        }
        let rhs = dh.transpose() * data.targets();
        let oracle = dense_solve(&normal, &rhs);
        for branch in [Branch::FeatureSpace, Branch::SampleSpace] {
            let beta = elm::solve_output_weights_with(&h, data.targets(), &v, c, branch).unwrap();
            elm_worst = elm_worst.max(rel_err(&beta, &oracle));
        }
    }
    Outcome::new(
        svr_worst <= 1e-9 && elm_worst <= 1e-9,
        format!("worst relative difference: bordered system {svr_worst:.2e}, ELM both branches {elm_worst:.2e} (limit 1e-9)"),
    )
}

/// Mean test RMSE over `seeds` per method, using the seed streams of the
/// `synthetic` command with master seed 0.
fn synthetic_means(noise: NoiseKind, methods: &[FitterConfig], seeds: usize) -> Vec<f64> {
    let runs: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|j| {
            let (train, test) = data::gen_sinc(500, 300, derive_seed(0, &format!("synthetic/data/{j}"))).unwrap();
            let train = train
                .with_noise(&NoiseSpec::new(noise, derive_seed(0, &format!("synthetic/noise/{j}"))))
                .unwrap();
            methods
                .iter()
                .map(|m| {
                    let pred = m.fit(&train).unwrap().predict(test.features()).unwrap();
                    eval::metrics(test.targets(), &pred).unwrap().rmse
                })
                .collect()
        })
        .collect();
    (0..methods.len())
        .map(|i| runs.iter().map(|r| r[i]).sum::<f64>() / seeds as f64)
        .collect()
}

fn svr_pair(c: f64, gamma: f64, lambda: f64) -> [FitterConfig; 2] {
    let base = FitterConfig::new(ModelKind::LsSvr, c)
        .with_gamma(gamma)
        .with_weights(WeightSpec::sigmoid(lambda).unwrap());
    [base, base.with_kind(ModelKind::IrlsSvr)]
}

fn criterion_6() -> Outcome {
    let gauss = synthetic_means(NoiseKind::Gaussian { mean: 0.0, sd: 0.3 }, &svr_pair(1.0, 0.125, 4.0), 50);
    let laplace = synthetic_means(
        NoiseKind::Laplace {
            location: 0.0,
            scale: 1.0,
        },
        &svr_pair(0.1, 0.125, 8.0),
        50,
    );
    let chisq = synthetic_means(NoiseKind::ChiSquared { dof: 4 }, &svr_pair(0.1, 0.125, 8.0), 50);
    let band = (0.020..=0.045).contains(&gauss[1]);
    Outcome::new(
        band && laplace[1] < laplace[0] && chisq[1] < chisq[0],
        format!(
            "Gaussian IRLS-SVR {:.4} in [0.020, 0.045]: {band}; Laplace IRLS {:.4} vs LS {:.4}; chi-squared IRLS {:.4} vs LS {:.4}",
            gauss[1], laplace[1], laplace[0], chisq[1], chisq[0]
        ),
    )
}

fn criterion_7() -> Outcome {
    let lambda = WeightSpec::sigmoid(4.0).unwrap();
    let svr = FitterConfig::new(ModelKind::LsSvr, 1.0).with_gamma(0.125).with_weights(lambda);
    let elm = FitterConfig::new(ModelKind::Elm, 10.0)
        .with_hidden(HiddenSize::Fraction(0.1))
        .with_weights(lambda);
    let wins: Vec<(bool, bool)> = (0..10u64)
        .into_par_iter()
        .map(|s| {
            let (train, test) = data::gen_sinc(500, 300, derive_seed(s, "contaminated/data")).unwrap();
            let noise = NoiseSpec::new(NoiseKind::Gaussian { mean: 0.0, sd: 0.1 }, derive_seed(s, "contaminated/noise"));
            let train = train.with_noise(&noise).unwrap();
            let train = data::inject_outliers(&train, 0.2, 10.0, derive_seed(s, "contaminated/outliers")).unwrap();
            let rmse = |m: FitterConfig| {
                let m = m.with_hidden_seed(derive_seed(s, "contaminated/hidden"));
                let pred = m.fit(&train).unwrap().predict(test.features()).unwrap();
                eval::metrics(test.targets(), &pred).unwrap().rmse
            };
            (
                rmse(svr.with_kind(ModelKind::IrlsSvr)) < rmse(svr),
                rmse(elm.with_kind(ModelKind::IrlsElm)) < rmse(elm),
            )
        })
        .collect();
    let svr_wins = wins.iter().filter(|w| w.0).count();
    let elm_wins = wins.iter().filter(|w| w.1).count();
    Outcome::new(
        svr_wins >= 9 && elm_wins >= 8,
        format!("IRLS-SVR beats LS-SVR on {svr_wins}/10 (need 9), IRLS-ELM beats ELM on {elm_wins}/10 (need 8)"),
    )
}

fn criterion_8() -> Outcome {
    let base = FitterConfig::new(ModelKind::LsSvr, 8.0)
        .with_gamma(4.0)
        .with_weights(WeightSpec::sigmoid(4.0).unwrap());
    let robust = base.with_kind(ModelKind::IrlsSvr);
    let mut ok = true;
    let mut notes = Vec::new();
    for test in [OutlierTest::Test1, OutlierTest::Test2] {
        let problem = test.problem();
        let full = problem.full().unwrap();
        let n_clean = problem.clean.len();
        let trace = robust.fit(&full).unwrap().trace.unwrap();
        let traj = robustness::weight_trajectory(&trace, &problem.outlier_indices()).unwrap();
        let last = trace.records.last().unwrap();
        let median = robustness::median(&last.weights.as_slice()[..n_clean]);
        let weights_ok = traj
            .iter()
            .all(|t| t.windows(2).all(|w| w[1] <= w[0]) && *t.last().unwrap() < median);

        let grid = robustness::default_grid(&full, DEFAULT_GRID_POINTS).unwrap();
        let mut sc_ok = true;
        let mut worst_ratio = 0.0f64;
        for i in 0..problem.outliers.len() {
            let p = problem.sensitivity(i, |d: &Dataset| base.fit(d), &grid).unwrap();
            let r = problem.sensitivity(i, |d: &Dataset| robust.fit(d), &grid).unwrap();
            sc_ok &= r.max_abs() < p.max_abs();
            worst_ratio = worst_ratio.max(r.max_abs() / p.max_abs());
        }
        ok &= weights_ok && sc_ok;
        notes.push(format!(
            "{}: trajectories {}, max|SC| IRLS/LS at most {worst_ratio:.3}",
            test.name(),
            if weights_ok { "ok" } else { "violated" }
        ));
    }
    Outcome::new(ok, notes.join("; "))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_irls-kbr"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

/// Every output file in `dir` except the manifest, which records a duration.
fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let (train, _) = data::gen_sinc(80, 1, 9).unwrap();
    let csv: String = (0..train.len())
        .map(|i| format!("{},{}\n", train.features()[(i, 0)], train.targets()[i]))
        .collect();
    let csv_path = root.join("toy.csv");
    fs::write(&csv_path, csv).unwrap();
    let csv_arg = csv_path.to_str().unwrap();

    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("weights", vec!["--weight-family", "sigmoid,huber,hampel", "--lambda", "3"]),
        ("synthetic", vec!["--noise", "laplace", "--seeds", "4", "--n-train", "120", "--n-test", "60"]),
        (
            "benchmark",
            vec![
                "--data", csv_arg, "--folds", "4", "--repeats", "2", "--c", "1", "--gamma", "1", "--lambda", "4",
                "--contaminate",
            ],
        ),
        ("benchmark", vec!["--data", csv_arg, "--model", "irls-elm", "--folds", "3", "--repeats", "1", "--c", "10"]),
        ("sensitivity", vec!["--test", "test2"]),
    ];
    let mut compared = 0;
    for (k, (cmd, flags)) in runs.iter().enumerate() {
        let first = root.join(format!("run{k}"));
        let second = root.join(format!("replay{k}"));
        let mut args = vec![*cmd, "--out", first.to_str().unwrap()];
        args.extend(flags);
        if let Err(e) = run_cli(&args) {
            return Outcome::new(false, e);
        }
        let manifest = first.join("manifest.json");
        if let Err(e) = run_cli(&["replay", manifest.to_str().unwrap(), "--out", second.to_str().unwrap(), "--verify"]) {
            return Outcome::new(false, e);
        }
        let (a, b) = (outputs(&first), outputs(&second));
        if a.is_empty() || a != b {
            return Outcome::new(false, format!("{cmd}: replayed outputs differ"));
        }
        compared += a.len();
    }
    Outcome::new(true, format!("{} runs replayed, {compared} files byte-identical", runs.len()))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("unit-weight equivalence", criterion_1, Duration::from_secs(10)),
        ("gradient-loss consistency", criterion_2, Duration::from_secs(1)),
        ("descent", criterion_3, Duration::from_secs(30)),
        ("fixed point", criterion_4, Duration::from_secs(5)),
        ("oracle equivalence", criterion_5, Duration::from_secs(5)),
        ("sinc noise table", criterion_6, Duration::from_secs(600)),
        ("contamination dominance", criterion_7, Duration::from_secs(600)),
        ("robustness diagnostics", criterion_8, Duration::from_secs(120)),
        ("determinism", criterion_9, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s, over the {}s budget", elapsed.as_secs_f64(), budget.as_secs())
        };
        println!(
            "criterion {}: {} {name}: {} ({timing})",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
