use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use vernqa_core::langbridge::TranslateError;
use vernqa_core::pipeline::PipelineError;

/// Reasons the service refuses to start.
#[derive(Debug, Error)]
pub enum StartupError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing {kind} artifact: {}", .path.display())]
    MissingArtifact { kind: &'static str, path: PathBuf },
    #[error("unreadable artifact {}: {reason}", .path.display())]
    Artifact { path: PathBuf, reason: String },
    #[error("pipeline: {0}")]
    Pipeline(String),
    #[error("store {}: {reason}", .path.display())]
    Store { path: PathBuf, reason: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_ready() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "not_ready",
            "model artifacts are not loaded",
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::EmptyQuestion => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_question", msg)
            }
            PipelineError::Translate(TranslateError::UnsupportedPair { .. }) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unsupported_language",
                msg,
            ),
            PipelineError::NoAnswer => Self::new(StatusCode::NOT_FOUND, "no_answer", msg),
            _ => Self::internal(msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error_code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
