use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use crate::api::ErrorBody;

/// Every failure the service reports. The variant name is the `error`
/// field of the JSON error body.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotError {
    #[error("unknown camera {0}")]
    UnknownCamera(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("frame {frame_index} is not available for {scope}")]
    UnknownFrame { scope: String, frame_index: u64 },
    #[error("the frame selection is empty")]
    EmptyFrameSelection,
    #[error("repetition {0} is outside 1..=5")]
    RepetitionOutOfRange(u8),
    #[error("repetition {repetition} of frame {frame_index} is already recorded")]
    DuplicateRepetition { frame_index: u64, repetition: u8 },
    #[error("row {v_v} is not below the horizon row {v_h}")]
    BelowHorizon { v_v: f64, v_h: f64 },
    #[error("session {0} is complete and accepts no more annotations")]
    SessionClosed(String),
    #[error("camera {0} has no complete sessions")]
    NoCompleteSessions(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl AnnotError {
    pub fn code(&self) -> &'static str {
        match self {
            AnnotError::UnknownCamera(_) => "UnknownCamera",
            AnnotError::UnknownSession(_) => "UnknownSession",
            AnnotError::UnknownFrame { .. } => "UnknownFrame",
            AnnotError::EmptyFrameSelection => "EmptyFrameSelection",
            AnnotError::RepetitionOutOfRange(_) => "RepetitionOutOfRange",
            AnnotError::DuplicateRepetition { .. } => "DuplicateRepetition",
            AnnotError::BelowHorizon { .. } => "BelowHorizon",
            AnnotError::SessionClosed(_) => "SessionClosed",
            AnnotError::NoCompleteSessions(_) => "NoCompleteSessions",
            AnnotError::InvalidRequest(_) => "InvalidRequest",
            AnnotError::Storage(_) => "Storage",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            AnnotError::UnknownCamera(_)
            | AnnotError::UnknownSession(_)
            | AnnotError::UnknownFrame { .. }
            | AnnotError::NoCompleteSessions(_) => StatusCode::NOT_FOUND,
            AnnotError::DuplicateRepetition { .. } | AnnotError::SessionClosed(_) => StatusCode::CONFLICT,
            AnnotError::EmptyFrameSelection | AnnotError::RepetitionOutOfRange(_) | AnnotError::BelowHorizon { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            AnnotError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            AnnotError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for AnnotError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code().into(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
