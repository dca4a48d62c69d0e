//! Diagnostic circuit: a session state machine that queries the knowledge
//! graph for suspects, asks the user for measurements or inspections, runs
//! classifiers on oscillograms and isolates root causes along `affected_by`.

pub mod classifier;
pub mod rca;
pub mod session;
pub mod state;

use diagnostica_kg::KgError;
use diagnostica_neural::NeuralError;
use thiserror::Error;

pub use classifier::{Classifier, FcnClassifier, ModelRegistry, StubClassifier, Verdict};
pub use rca::{fault_paths, FaultPath};
pub use session::{
    ActionKind, ClassificationRecord, ContextStatus, IsolatedPath, OscillogramOutcome, Outcome, PendingAction, RcaOutcome,
    Session, SessionReport, SessionView, Source, StartRequest, Vehicle,
};
pub use state::{replay, SessionState, Transition, TRANSITIONS};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("series is constant and cannot be classified")]
    DegenerateSeries,
    #[error("model error for {component}: {message}")]
    Model { component: String, message: String },
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Neural(NeuralError),
}

impl From<NeuralError> for CircuitError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::DegenerateSeries => CircuitError::DegenerateSeries,
            other => CircuitError::Neural(other),
        }
    }
}

impl CircuitError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CircuitError::Protocol(_) => "protocol_error",
            CircuitError::DegenerateSeries => "degenerate_series",
            CircuitError::Model { .. } => "model_error",
            CircuitError::Kg(KgError::Validation(_)) => "validation_error",
            CircuitError::Kg(KgError::Integrity(_)) => "integrity_error",
            CircuitError::Kg(_) => "kg_error",
            CircuitError::Neural(NeuralError::Shape(_)) => "shape_error",
            CircuitError::Neural(_) => "neural_error",
        }
    }
}

pub type Result<T, E = CircuitError> = std::result::Result<T, E>;
