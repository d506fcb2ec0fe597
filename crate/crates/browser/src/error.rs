use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// A WebDriver error: the protocol's error code, its HTTP status and a
/// message.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct WdError {
    pub code: &'static str,
    pub status: StatusCode,
    pub message: String,
}

impl WdError {
    fn new(code: &'static str, status: StatusCode, message: impl Into<String>) -> Self {
        WdError {
            code,
            status,
            message: message.into(),
        }
    }

    pub fn invalid_argument(m: impl Into<String>) -> Self {
        Self::new("invalid argument", StatusCode::BAD_REQUEST, m)
    }
    pub fn invalid_session(id: &str) -> Self {
        Self::new(
            "invalid session id",
            StatusCode::NOT_FOUND,
            format!("no session {id}"),
        )
    }
    pub fn no_such_element(m: impl Into<String>) -> Self {
        Self::new("no such element", StatusCode::NOT_FOUND, m)
    }
    pub fn no_such_window(m: impl Into<String>) -> Self {
        Self::new("no such window", StatusCode::NOT_FOUND, m)
    }
    pub fn no_such_cookie(name: &str) -> Self {
        Self::new(
            "no such cookie",
            StatusCode::NOT_FOUND,
            format!("no cookie named {name:?}"),
        )
    }
    pub fn stale_element(id: &str) -> Self {
        Self::new(
            "stale element reference",
            StatusCode::NOT_FOUND,
            format!("element {id} is no longer attached to the page"),
        )
    }
    pub fn invalid_selector(m: impl Into<String>) -> Self {
        Self::new("invalid selector", StatusCode::BAD_REQUEST, m)
    }
    pub fn not_interactable(m: impl Into<String>) -> Self {
        Self::new("element not interactable", StatusCode::BAD_REQUEST, m)
    }
    pub fn timeout(m: impl Into<String>) -> Self {
        Self::new("timeout", StatusCode::INTERNAL_SERVER_ERROR, m)
    }
    pub fn unknown_command(m: impl Into<String>) -> Self {
        Self::new("unknown command", StatusCode::NOT_FOUND, m)
    }
    pub fn unknown(m: impl Into<String>) -> Self {
        Self::new("unknown error", StatusCode::INTERNAL_SERVER_ERROR, m)
    }
}

impl IntoResponse for WdError {
    fn into_response(self) -> Response {
        let body =
            json!({"value": {"error": self.code, "message": self.message, "stacktrace": ""}});
        (self.status, Json(body)).into_response()
    }
}
