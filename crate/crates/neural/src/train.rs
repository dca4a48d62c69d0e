use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{cross_entropy, FcnConfig, FcnModel, Mode, CLASSES};
use crate::series::NormalizedSeries;
use crate::{NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, batch_size: 16, learning_rate: 0.02, momentum: 0.9, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub parameter_count: usize,
}

/// Labelled example: class 0 anomalous, 1 regular.
pub type Example = (NormalizedSeries, usize);

/// Mini-batch gradient descent with momentum on the mean cross-entropy.
pub fn train(arch: FcnConfig, config: &TrainConfig, data: &[Example]) -> Result<(FcnModel, TrainReport)> {
    if config.epochs == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(NeuralError::Config("epochs and batch size must be positive, learning rate > 0, momentum in [0,1)".into()));
    }
    let mut counts = [0usize; CLASSES];
    for (v, y) in data {
        if *y >= CLASSES {
            return Err(NeuralError::Config(format!("label {y} is not binary")));
        }
        if v.len() != arch.input_length {
            return Err(NeuralError::Shape(format!("model expects {} samples, got {}", arch.input_length, v.len())));
        }
        counts[*y] += 1;
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(NeuralError::Config(format!("need at least 2 examples per class, got {counts:?}")));
    }
    let mut model = FcnModel::new(arch, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut velocity = vec![0.0; model.param_count()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| data[i].0.values.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data[i].1).collect();
            let cache = model.forward_batch(&xs, Mode::Train)?;
            let (loss, dlogits) = cross_entropy(&cache.logits, &labels);
            total += loss * batch.len() as f64;
            let grads = model.backward_batch(&cache, &dlogits);
            model.update_running_stats(&cache);
            for ((p, v), g) in model.parameters_mut().iter_mut().zip(&mut velocity).zip(&grads.params) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
        }
        losses.push(total / data.len() as f64);
    }
    let xs: Vec<&[f64]> = data.iter().map(|(v, _)| v.values.as_slice()).collect();
    model.recalibrate(&xs)?;
    let train_accuracy = accuracy(&model, data)?;
    let report = TrainReport { epochs: config.epochs, losses, train_accuracy, parameter_count: model.param_count() };
    Ok((model, report))
}

/// Fraction of examples whose best guess equals the label.
pub fn accuracy(model: &FcnModel, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (v, y) in data {
        if model.predict(v)?.best_guess == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
