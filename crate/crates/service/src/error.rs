use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

use gazepipeline_core::config::InvalidConfig;
use gazepipeline_core::pipeline::PipelineError;

/// Error body: `{code, message, detail}`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}"))
    }

    pub fn unknown_trial(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_trial", format!("no trial {id:?} in this session"))
    }

    pub fn unknown_job(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job {id:?}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }
}

impl From<InvalidConfig> for ApiError {
    fn from(e: InvalidConfig) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string())
            .with_detail(serde_json::json!({ "key": e.key, "reason": e.reason }))
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::MissingIasFile { .. } => "missing_ias_file",
            PipelineError::Stimulus(_) => "invalid_stimulus",
            PipelineError::Assign(_) => "assignment_failed",
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
