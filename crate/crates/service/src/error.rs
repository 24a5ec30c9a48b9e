use assure_dx_core::error::Error;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Error body returned with every non-2xx status.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
#[error("{}", body.message)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error,
                message: message.into(),
                field: None,
                cap: None,
                target: None,
            },
        }
    }

    /// A request that exceeds a compute guard.
    pub fn limit(field: &str, message: impl Into<String>) -> Self {
        let mut e = ApiError::new(StatusCode::BAD_REQUEST, "limit_exceeded", message);
        e.body.field = Some(field.into());
        e
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Config { field, .. } => {
                let mut a = ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message);
                a.body.field = Some(field);
                a
            }
            Error::Domain(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message),
            Error::NotFound { cap, target } => {
                let mut a = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "not_found", message);
                a.body.cap = Some(cap);
                a.body.target = Some(target);
                a
            }
            Error::Infeasible(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "infeasible", message)
            }
            Error::Cancelled => ApiError::new(StatusCode::GATEWAY_TIMEOUT, "timeout", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
