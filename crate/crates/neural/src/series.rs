use serde::{Deserialize, Serialize};

use crate::{NeuralError, Result};

/// Shortest series accepted by the classifier.
pub const MIN_LENGTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recording_id: Option<String>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Self {
        TimeSeries { values, component: None, recording_id: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < MIN_LENGTH {
            return Err(NeuralError::Shape(format!("series has {} samples, need at least {MIN_LENGTH}", self.values.len())));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(NeuralError::Shape(format!("sample {i} is not finite")));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for TimeSeries {
    fn from(values: Vec<f64>) -> Self {
        TimeSeries::new(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub values: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

impl NormalizedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Subtracts the mean and divides by the population standard deviation.
pub fn z_normalize(series: &TimeSeries) -> Result<NormalizedSeries> {
    series.validate()?;
    let v = &series.values;
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let sigma = (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
    if sigma == 0.0 || !sigma.is_finite() {
        return Err(NeuralError::DegenerateSeries);
    }
    Ok(NormalizedSeries { values: v.iter().map(|x| (x - mu) / sigma).collect(), mu, sigma })
}

/// Linear interpolation of `values` onto `n` evenly spaced points spanning
/// the same interval.
pub fn interpolate(values: &[f64], n: usize) -> Vec<f64> {
    match (values.len(), n) {
        (_, 0) => Vec::new(),
        (0, _) => vec![0.0; n],
        (1, _) => vec![values[0]; n],
        (m, _) if m == n => values.to_vec(),
        (m, 1) => vec![values[m / 2]],
        (m, _) => (0..n)
            .map(|i| {
                let x = i as f64 * (m - 1) as f64 / (n - 1) as f64;
                let lo = (x.floor() as usize).min(m - 2);
                let frac = x - lo as f64;
                values[lo] * (1.0 - frac) + values[lo + 1] * frac
            })
            .collect(),
    }
}
