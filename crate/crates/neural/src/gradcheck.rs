//! Finite-difference checks of the backward pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{cross_entropy, FcnModel, Mode, CLASSES};
use crate::series::NormalizedSeries;
use crate::{NeuralError, Result};

/// Parameters compared per check; smaller models are checked exhaustively.
pub const SAMPLED_PARAMETERS: usize = 400;
pub const SAMPLED_FEATURES: usize = 200;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(NeuralError::Config(format!("epsilon must lie in (0, 1e-2], got {epsilon}")));
    }
    Ok(())
}

fn chosen(total: usize, limit: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if total <= limit {
        (0..total).collect()
    } else {
        let mut idx = sample(rng, total, limit).into_vec();
        idx.sort_unstable();
        idx
    }
}

fn perturbed<T>(model: &FcnModel, index: usize, delta: f64, f: impl Fn(&FcnModel) -> T) -> T {
    let mut m = model.clone();
    m.parameters_mut()[index] += delta;
    f(&m)
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub compared: usize,
    /// Coordinates sitting on a ReLU kink, where one-sided differences
    /// disagree and no derivative exists.
    pub skipped_kinks: usize,
}

#[derive(Default)]
struct Tally {
    worst: f64,
    compared: usize,
    kinks: usize,
}

impl Tally {
    fn record(&mut self, analytic: f64, minus: f64, centre: f64, plus: f64, epsilon: f64) {
        let (forward, backward) = ((plus - centre) / epsilon, (centre - minus) / epsilon);
        if (forward - backward).abs() > 1e-4 * forward.abs().max(backward.abs()).max(1e-6) {
            self.kinks += 1;
            return;
        }
        self.compared += 1;
        self.worst = self.worst.max(relative_error(analytic, (plus - minus) / (2.0 * epsilon)));
    }

    fn finish(self) -> GradientCheck {
        GradientCheck { max_relative_error: self.worst, compared: self.compared, skipped_kinks: self.kinks }
    }
}

/// Largest relative error between the analytic gradient of the best-guess
/// logit and central differences, over a seeded subsample of parameters and
/// last-block feature values. Inference mode.
pub fn gradient_check(model: &FcnModel, v: &NormalizedSeries, epsilon: f64) -> Result<f64> {
    Ok(gradient_check_report(model, v, epsilon)?.max_relative_error)
}

pub fn gradient_check_report(model: &FcnModel, v: &NormalizedSeries, epsilon: f64) -> Result<GradientCheck> {
    check_epsilon(epsilon)?;
    let class = model.predict(v)?.best_guess;
    let (out, dparams, dfeatures) = model.logit_gradients(&v.values, class)?;
    let centre = out.logits[class];
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed() ^ 0x9e37_79b9);
    let mut tally = Tally::default();
    for i in chosen(model.param_count(), SAMPLED_PARAMETERS, &mut rng) {
        let plus = perturbed(model, i, epsilon, |m| m.logit(&v.values, class, Mode::Infer));
        let minus = perturbed(model, i, -epsilon, |m| m.logit(&v.values, class, Mode::Infer));
        tally.record(dparams[i], minus, centre, plus, epsilon);
    }
    for i in chosen(out.features.len(), SAMPLED_FEATURES, &mut rng) {
        let mut a = out.features.clone();
        a[i] += epsilon;
        let plus = model.logits_from_features(&a)[class];
        a[i] -= 2.0 * epsilon;
        let minus = model.logits_from_features(&a)[class];
        tally.record(dfeatures[i], minus, centre, plus, epsilon);
    }
    Ok(tally.finish())
}

/// Same comparison for the mean cross-entropy of a batch in training mode,
/// where normalization uses batch statistics.
pub fn loss_gradient_check(model: &FcnModel, batch: &[&NormalizedSeries], labels: &[usize], epsilon: f64) -> Result<GradientCheck> {
    check_epsilon(epsilon)?;
    if batch.len() != labels.len() || batch.is_empty() || labels.iter().any(|&y| y >= CLASSES) {
        return Err(NeuralError::Config("batch and labels must be non-empty, equally long and binary".into()));
    }
    let xs: Vec<&[f64]> = batch.iter().map(|v| v.values.as_slice()).collect();
    let loss = |m: &FcnModel| -> f64 {
        let cache = m.forward_batch(&xs, Mode::Train).expect("checked length");
        cross_entropy(&cache.logits, labels).0
    };
    let cache = model.forward_batch(&xs, Mode::Train)?;
    let (centre, dlogits) = cross_entropy(&cache.logits, labels);
    let grads = model.backward_batch(&cache, &dlogits);
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed() ^ 0x7f4a_7c15);
    let mut tally = Tally::default();
    for i in chosen(model.param_count(), SAMPLED_PARAMETERS, &mut rng) {
        let plus = perturbed(model, i, epsilon, &loss);
        let minus = perturbed(model, i, -epsilon, &loss);
        tally.record(grads.params[i], minus, centre, plus, epsilon);
    }
    Ok(tally.finish())
}

#[cfg(test)]
mod tests {
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::model::FcnConfig;
    use crate::series::z_normalize;

    fn series(n: usize, seed: u64) -> NormalizedSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        z_normalize(&(0..n).map(|_| normal.sample(&mut rng)).collect::<Vec<_>>().into()).unwrap()
    }

    fn small() -> FcnConfig {
        FcnConfig { input_length: 32, filters: [4, 4, 4], kernels: [8, 5, 3] }
    }

    #[test]
    fn small_model_gradients_match() {
        for seed in 0..3 {
            let m = FcnModel::new(small(), seed).unwrap();
            let err = gradient_check(&m, &series(32, seed + 10), 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn training_mode_loss_gradients_match() {
        let m = FcnModel::new(small(), 4).unwrap().jittered(4, 0.1);
        let (a, b, c) = (series(32, 1), series(32, 2), series(32, 3));
        let report = loss_gradient_check(&m, &[&a, &b, &c], &[0, 1, 1], 1e-6).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
        assert_eq!(report.compared + report.skipped_kinks, m.param_count());
        assert!(report.skipped_kinks * 20 < m.param_count(), "{report:?}");
    }

    #[test]
    fn kinks_are_skipped_not_hidden() {
        let m = FcnModel::new(small(), 14987469157202471902).unwrap();
        let s = &crate::synth::spike_dataset(17799083226983468121, 1, 32, 8)[0];
        let report = gradient_check_report(&m, &s.series, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
        assert!(report.compared > report.skipped_kinks * 10);
    }

    #[test]
    fn epsilon_must_be_positive() {
        let m = FcnModel::new(small(), 0).unwrap();
        assert!(matches!(gradient_check(&m, &series(32, 0), 0.0), Err(NeuralError::Config(_))));
        assert!(matches!(gradient_check(&m, &series(32, 0), 0.5), Err(NeuralError::Config(_))));
    }

    #[test]
    fn zero_model_zero_input() {
        let m = FcnModel::zeros(small()).unwrap();
        let zero = NormalizedSeries { values: vec![0.0; 32], mu: 0.0, sigma: 1.0 };
        assert!(gradient_check(&m, &zero, 1e-5).unwrap() < 1e-9);
    }
}
