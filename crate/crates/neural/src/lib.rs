//! Binary time-series classification with a small fully convolutional
//! network, written out by hand so that its gradients can be checked and
//! reused for class activation maps.

pub mod cam;
pub mod gradcheck;
pub mod model;
pub mod report;
pub mod series;
pub mod synth;
pub mod train;

use thiserror::Error;

pub use cam::{cam, grad_cam, hires_cam, CamMethod, Heatmap};
pub use gradcheck::{gradient_check, gradient_check_report, loss_gradient_check, GradientCheck};
pub use model::{FcnConfig, FcnModel, ForwardOutput, Prediction, ANOMALOUS, CLASSES, REGULAR};
pub use report::{render_heatmap_report, HeatmapReport};
pub use series::{interpolate, z_normalize, NormalizedSeries, TimeSeries};
pub use train::{accuracy, train, Example, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("series is constant and cannot be normalized")]
    DegenerateSeries,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;
