//! Class activation maps over the last block's feature maps.

use serde::{Deserialize, Serialize};

use crate::model::FcnModel;
use crate::series::{interpolate, NormalizedSeries};
use crate::{NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CamMethod {
    #[serde(rename = "grad-cam")]
    GradCam,
    #[serde(rename = "hires-cam")]
    HiResCam,
}

impl CamMethod {
    pub const ALL: [CamMethod; 2] = [CamMethod::GradCam, CamMethod::HiResCam];

    pub fn as_str(self) -> &'static str {
        match self {
            CamMethod::GradCam => "grad-cam",
            CamMethod::HiResCam => "hires-cam",
        }
    }
}

impl std::fmt::Display for CamMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CamMethod {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grad-cam" | "gradcam" => Ok(CamMethod::GradCam),
            "hires-cam" | "hirescam" => Ok(CamMethod::HiResCam),
            other => Err(NeuralError::Config(format!("unknown CAM method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub values: Vec<f64>,
    pub method: CamMethod,
    pub target_class: usize,
}

impl Heatmap {
    /// Index of the largest value; the first one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Min-max scaling to [0,1]; a flat map becomes all zeros.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// Relevance from channel-major feature maps `a` and gradients `g` (both
/// `channels x m`), interpolated to `n` samples and scaled to [0,1].
pub fn relevance(a: &[f64], g: &[f64], channels: usize, method: CamMethod, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), g.len(), "feature and gradient maps differ in size");
    let m = if channels == 0 { 0 } else { a.len() / channels };
    let mut l = vec![0.0; m];
    for k in 0..channels {
        let (ak, gk) = (&a[k * m..(k + 1) * m], &g[k * m..(k + 1) * m]);
        match method {
            CamMethod::GradCam => {
                let alpha = gk.iter().sum::<f64>() / m as f64;
                for t in 0..m {
                    l[t] += alpha * ak[t];
                }
            }
            CamMethod::HiResCam => {
                for t in 0..m {
                    l[t] += gk[t] * ak[t];
                }
            }
        }
    }
    for v in &mut l {
        *v = v.max(0.0);
    }
    min_max(&interpolate(&l, n))
}

/// Heatmap for `class`, defaulting to the best guess.
pub fn cam(model: &FcnModel, v: &NormalizedSeries, class: Option<usize>, method: CamMethod) -> Result<Heatmap> {
    let target_class = match class {
        Some(c) => c,
        None => model.predict(v)?.best_guess,
    };
    let (out, _, grads) = model.logit_gradients(&v.values, target_class)?;
    Ok(Heatmap { values: relevance(&out.features, &grads, out.channels, method, v.len()), method, target_class })
}

pub fn grad_cam(model: &FcnModel, v: &NormalizedSeries, class: Option<usize>) -> Result<Heatmap> {
    cam(model, v, class, CamMethod::GradCam)
}

pub fn hires_cam(model: &FcnModel, v: &NormalizedSeries, class: Option<usize>) -> Result<Heatmap> {
    cam(model, v, class, CamMethod::HiResCam)
}
