//! Cross-module invariants over random instances.

use irls_kbr::data::{self, Dataset};
use irls_kbr::elm;
use irls_kbr::irls::{IrlsConfig, IrlsInit};
use irls_kbr::kernel::KernelSpec;
use irls_kbr::lssvr;
use irls_kbr::model::{FitterConfig, ModelKind, Predict};
use irls_kbr::robustness;
use irls_kbr::weights::{WeightFamily, WeightSpec};
use nalgebra::DVector;
use proptest::prelude::*;

fn instance(xs: &[f64], noise: &[f64]) -> Dataset {
    let y: Vec<f64> = xs.iter().zip(noise).map(|(x, e)| data::sinc(*x) + e).collect();
    Dataset::from_1d(xs, &y, "prop").unwrap()
}

fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-6.0f64..6.0, n),
            prop::collection::vec(prop_oneof![4 => -0.2f64..0.2, 1 => -6.0f64..6.0], n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifting_targets_moves_only_the_bias((xs, noise) in sample(), shift in -5.0f64..5.0) {
        let data = instance(&xs, &noise);
        let moved = data.with_targets(data.targets().add_scalar(shift)).unwrap();
        let k = KernelSpec::new(0.5).unwrap();
        let a = lssvr::fit_lssvr(&data, 3.0, k).unwrap();
        let b = lssvr::fit_lssvr(&moved, 3.0, k).unwrap();
        prop_assert!((a.alpha() - b.alpha()).amax() <= 1e-8 * (1.0 + a.alpha().amax()));
        prop_assert!((b.bias() - a.bias() - shift).abs() <= 1e-8 * (1.0 + shift.abs()));
    }

    #[test]
    fn convex_families_descend(
        (xs, noise) in sample(),
        family in prop_oneof![
            (0.2f64..10.0).prop_map(|lambda| WeightFamily::SigmoidInduced { lambda }),
            (0.1f64..3.0).prop_map(|k| WeightFamily::Huber { k }),
        ],
        zero_start in any::<bool>(),
        log_c in -1.0f64..2.0,
    ) {
        let data = instance(&xs, &noise);
        let init = if zero_start { IrlsInit::Zero } else { IrlsInit::UnweightedSolve };
        let cfg = IrlsConfig::new(WeightSpec::new(family).unwrap()).with_max_iter(60).with_init(init);
        let c = 10f64.powf(log_c);
        let (_, svr) = lssvr::fit_irls_svr(&data, c, KernelSpec::new(1.0).unwrap(), &cfg).unwrap();
        let (_, elm) = elm::fit_irls_elm(&data, c, xs.len() / 2 + 1, 7, &cfg).unwrap();
        prop_assert!(svr.max_risk_increase() <= 1e-10, "svr {}", svr.max_risk_increase());
        prop_assert!(elm.max_risk_increase() <= 1e-10, "elm {}", elm.max_risk_increase());
    }

    #[test]
    fn weights_stay_in_range((xs, noise) in sample(), lambda in 0.5f64..8.0) {
        let data = instance(&xs, &noise);
        let cfg = FitterConfig::new(ModelKind::IrlsSvr, 5.0).with_weights(WeightSpec::sigmoid(lambda).unwrap());
        let trace = cfg.fit(&data).unwrap().trace.unwrap();
        let top = lambda * lambda / 8.0;
        for rec in &trace.records {
            prop_assert!(rec.weights.iter().all(|&w| w > 0.0 && w <= top * (1.0 + 1e-12)));
        }
    }
}

#[test]
fn injected_outliers_lose_weight() {
    let (train, _) = data::gen_sinc(200, 1, 5).unwrap();
    let dirty = data::inject_outliers(&train, 0.1, 10.0, 6).unwrap();
    let outliers = dirty.provenance().outlier_indices.clone();
    assert_eq!(outliers.len(), 20);
    let cfg = FitterConfig::new(ModelKind::IrlsSvr, 1.0)
        .with_gamma(0.5)
        .with_weights(WeightSpec::sigmoid(4.0).unwrap());
    let fitted = cfg.fit(&dirty).unwrap();
    let last = &fitted.trace.as_ref().unwrap().records.last().unwrap().weights;
    let clean: Vec<f64> = (0..dirty.len()).filter(|i| !outliers.contains(i)).map(|i| last[i]).collect();
    let median = robustness::median(&clean);
    // Outliers whose clean label is near zero barely move under scaling.
    let moved: Vec<usize> = outliers
        .iter()
        .copied()
        .filter(|&i| (dirty.targets()[i] - train.targets()[i]).abs() > 1.0)
        .collect();
    assert!(!moved.is_empty());
    for i in moved {
        assert!(last[i] < median, "outlier {i}: {} vs median {median}", last[i]);
    }

    let plain = cfg.with_kind(ModelKind::LsSvr).fit(&dirty).unwrap();
    let clean_y = DVector::from_iterator(train.len(), (0..train.len()).map(|i| data::sinc(train.features()[(i, 0)])));
    let err = |p: DVector<f64>| (p - &clean_y).amax();
    assert!(err(fitted.predict(dirty.features()).unwrap()) < err(plain.predict(dirty.features()).unwrap()));
}
