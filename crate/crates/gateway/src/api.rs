//! Response envelope and error mapping.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use diagnostica_circuit::CircuitError;
use diagnostica_kg::KgError;
use diagnostica_neural::NeuralError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

/// Exactly one of `payload` and `error` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

fn request_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Successful response with a status code.
pub struct Reply<T>(pub StatusCode, pub T);

impl<T: Serialize> IntoResponse for Reply<T> {
    fn into_response(self) -> Response {
        let body = Envelope { request_id: request_id(), payload: Some(self.1), error: None };
        (self.0, Json(body)).into_response()
    }
}

pub fn ok<T>(payload: T) -> Reply<T> {
    Reply(StatusCode::OK, payload)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), detail: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "protocol_error", message)
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let error = ErrorBody { code: self.code.to_string(), message: self.message, detail: self.detail };
        let body: Envelope<()> = Envelope { request_id: request_id(), payload: None, error: Some(error) };
        (self.status, Json(body)).into_response()
    }
}

impl From<KgError> for ApiError {
    fn from(e: KgError) -> Self {
        match &e {
            KgError::Validation(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", e.to_string()),
            KgError::Integrity(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "integrity_error", e.to_string()),
            KgError::Parse { line, .. } => Self::new(StatusCode::BAD_REQUEST, "parse_error", e.to_string())
                .with_detail(serde_json::json!({ "line": line })),
            KgError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", e.to_string()),
        }
    }
}

impl From<NeuralError> for ApiError {
    fn from(e: NeuralError) -> Self {
        CircuitError::from(e).into()
    }
}

impl From<CircuitError> for ApiError {
    fn from(e: CircuitError) -> Self {
        let status = match &e {
            CircuitError::Protocol(_) => StatusCode::CONFLICT,
            CircuitError::Kg(KgError::Io(_)) | CircuitError::Neural(NeuralError::Io(_)) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

pub type ApiResult<T> = Result<Reply<T>, ApiError>;
