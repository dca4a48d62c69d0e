//! Flat-versus-spike series with known spike windows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{ANOMALOUS, REGULAR};
use crate::series::{z_normalize, NormalizedSeries, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSample {
    pub series: NormalizedSeries,
    pub label: usize,
    /// Half-open spike window for anomalous samples.
    pub window: Option<(usize, usize)>,
}

/// Noisy signals with a slow random wave; every other one carries a bump of
/// `width` samples at a random position. Noise level and wave amplitude vary
/// per series so that only the bump separates the classes.
pub fn spike_dataset(seed: u64, count: usize, n: usize, width: usize) -> Vec<SpikeSample> {
    assert!(width >= 1 && width < n, "spike width must fit the series");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("positive std");
    (0..count)
        .map(|i| {
            let level = rng.random_range(-1.0..1.0);
            let sigma = rng.random_range(0.1..0.3);
            let amplitude = rng.random_range(0.0..1.5);
            let period = rng.random_range(2.0..6.0) * n as f64 / 4.0;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let mut values: Vec<f64> = (0..n)
                .map(|t| {
                    let wave = amplitude * (std::f64::consts::TAU * t as f64 / period + phase).sin();
                    level + wave + sigma * unit.sample(&mut rng)
                })
                .collect();
            let (label, window) = if i % 2 == 0 {
                let start = rng.random_range(0..=n - width);
                let height = rng.random_range(2.0..3.5);
                for (j, v) in values[start..start + width].iter_mut().enumerate() {
                    *v += height * (std::f64::consts::PI * (j as f64 + 0.5) / width as f64).sin();
                }
                (ANOMALOUS, Some((start, start + width)))
            } else {
                (REGULAR, None)
            };
            let series = z_normalize(&TimeSeries::new(values)).expect("noisy series is not constant");
            SpikeSample { series, label, window }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_windows_inside() {
        let data = spike_dataset(1, 40, 128, 8);
        assert_eq!(data.iter().filter(|s| s.label == ANOMALOUS).count(), 20);
        for s in &data {
            assert_eq!(s.series.len(), 128);
            match s.window {
                Some((a, b)) => assert!(b - a == 8 && b <= 128 && s.label == ANOMALOUS),
                None => assert_eq!(s.label, REGULAR),
            }
        }
        assert_eq!(spike_dataset(1, 40, 128, 8), data);
    }

    #[test]
    fn bump_is_local() {
        for s in spike_dataset(2, 20, 64, 8).into_iter().filter(|s| s.window.is_some()) {
            let (a, b) = s.window.unwrap();
            let v = &s.series.values;
            let inside = v[a..b].iter().sum::<f64>() / 8.0;
            let edges: Vec<f64> = [a.checked_sub(1), (b < 64).then_some(b)].into_iter().flatten().map(|i| v[i]).collect();
            assert!(edges.iter().all(|e| inside > *e), "{a}..{b}");
        }
    }
}
