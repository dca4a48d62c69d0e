use std::time::Instant;

use diagnostica_neural::synth::spike_dataset;
use diagnostica_neural::{accuracy, grad_cam, gradient_check_report, hires_cam, train, FcnConfig, FcnModel, TrainConfig, ANOMALOUS};
use proptest::prelude::*;

#[test]
fn tiny_model_localizes_spikes() {
    let started = Instant::now();
    let train_set: Vec<_> = spike_dataset(100, 200, 128, 8).into_iter().map(|s| (s.series, s.label)).collect();
    let test_set = spike_dataset(200, 100, 128, 8);
    let (model, report) = train(FcnConfig::tiny(128), &TrainConfig::default(), &train_set).unwrap();
    let labelled: Vec<_> = test_set.iter().map(|s| (s.series.clone(), s.label)).collect();
    let acc = accuracy(&model, &labelled).unwrap();

    let (mut hits, mut agree, mut total) = (0, 0, 0);
    for s in test_set.iter().filter(|s| s.label == ANOMALOUS) {
        if model.predict(&s.series).unwrap().best_guess != ANOMALOUS {
            continue;
        }
        let (a, b) = s.window.unwrap();
        let g = grad_cam(&model, &s.series, None).unwrap().argmax();
        let h = hires_cam(&model, &s.series, None).unwrap().argmax();
        total += 1;
        hits += usize::from(g + 4 >= a && g < b + 4);
        agree += usize::from(g.abs_diff(h) <= 8);
    }
    let localized = hits as f64 / total as f64;
    let agreement = agree as f64 / total as f64;
    println!(
        "train acc {:.3}, test acc {acc:.3}, localized {localized:.3}, agreement {agreement:.3}, {:?}",
        report.train_accuracy,
        started.elapsed()
    );
    assert!(acc >= 0.95);
    assert!(localized >= 0.8);
    assert!(agreement >= 0.7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_tiny_models_pass_gradient_check(seed in any::<u64>(), data_seed in any::<u64>()) {
        let model = FcnModel::new(FcnConfig::tiny(32), seed).unwrap().jittered(seed, 0.1);
        let s = &spike_dataset(data_seed, 1, 32, 8)[0];
        let report = gradient_check_report(&model, &s.series, 1e-5).unwrap();
        prop_assert!(report.max_relative_error < 1e-4, "{:?}", report);
        prop_assert!(report.skipped_kinks * 50 < report.compared, "{:?}", report);
    }

    #[test]
    fn heatmaps_stay_in_unit_interval(seed in any::<u64>(), class in 0usize..2) {
        let model = FcnModel::new(FcnConfig::tiny(32), seed).unwrap();
        for s in spike_dataset(seed, 2, 32, 8) {
            for h in [grad_cam(&model, &s.series, Some(class)).unwrap(), hires_cam(&model, &s.series, Some(class)).unwrap()] {
                prop_assert_eq!(h.values.len(), 32);
                prop_assert!(h.values.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
