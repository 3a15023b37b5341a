use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use dgsnap_core::Error;
use serde_json::json;

/// Error body: `{"schema_version", "error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn not_found(what: impl std::fmt::Display) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "NotFound",
            format!("{what} not found"),
        )
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl std::fmt::Display) -> Self {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "Internal",
            message.to_string(),
        )
    }

    /// Ingest failures are client errors regardless of variant.
    pub fn ingest(e: Error) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::CannotDeleteBase | Error::LayerNotTop { .. } => StatusCode::CONFLICT,
            Error::InvalidThresholds(_)
            | Error::InvalidProjectionConfig(_)
            | Error::TooFewPoints(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::SelectionOutOfRange { .. } => StatusCode::RANGE_NOT_SATISFIABLE,
            Error::MalformedRow { .. }
            | Error::NonMonotoneTimestamps { .. }
            | Error::UnknownUnits
            | Error::ScoreRegression { .. }
            | Error::Csv(_)
            | Error::EmptyDataset
            | Error::DuplicateNode(_)
            | Error::InvalidFrame(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = %self.code, "{}", self.message);
        }
        let body = json!({
            "schema_version": dgsnap_core::SCHEMA_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, axum::Json(body)).into_response()
    }
}
