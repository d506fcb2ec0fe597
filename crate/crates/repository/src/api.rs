use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use url::Url;

use crate::store::{ExecutionReport, ReportOutcome, Store, StoreError};

pub const JSON_UTF8: &str = "application/json; charset=utf-8";

fn json_body(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(CONTENT_TYPE, JSON_UTF8)], body).into_response()
}

fn json_value<T: Serialize>(status: StatusCode, value: &T) -> Response {
    json_body(
        status,
        serde_json::to_vec(value).expect("responses serialize"),
    )
}

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub findings: Option<Vec<dara_core::Finding>>,
}

fn fail(status: StatusCode, code: &str, detail: impl Into<String>) -> Response {
    json_value(
        status,
        &ApiError {
            error: code.into(),
            detail: detail.into(),
            findings: None,
        },
    )
}

impl IntoResponse for StoreError {
    fn into_response(self) -> Response {
        let detail = self.to_string();
        match self {
            StoreError::NotFound(_) => fail(StatusCode::NOT_FOUND, "not-found", detail),
            StoreError::BadName(_) => fail(StatusCode::BAD_REQUEST, "bad-name", detail),
            StoreError::Malformed(_) => fail(StatusCode::BAD_REQUEST, "malformed", detail),
            StoreError::NameMismatch { .. } => {
                fail(StatusCode::BAD_REQUEST, "name-mismatch", detail)
            }
            StoreError::VersionConflict { .. } => {
                fail(StatusCode::CONFLICT, "version-conflict", detail)
            }
            StoreError::HashMismatch => {
                fail(StatusCode::UNPROCESSABLE_ENTITY, "hash-mismatch", detail)
            }
            StoreError::ValidationFailed(findings) => json_value(
                StatusCode::UNPROCESSABLE_ENTITY,
                &ApiError {
                    error: "validation-failed".into(),
                    detail,
                    findings: Some(findings),
                },
            ),
            StoreError::Corrupt { .. } => {
                fail(StatusCode::INTERNAL_SERVER_ERROR, "corrupt", detail)
            }
            StoreError::Io(_) => fail(StatusCode::INTERNAL_SERVER_ERROR, "io", detail),
        }
    }
}

type Shared = Arc<Store>;

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(
    store: &Shared,
    f: impl FnOnce(&Store) -> Result<T, StoreError> + Send + 'static,
) -> Result<T, StoreError> {
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| StoreError::Io(std::io::Error::other(e.to_string())))?
}

async fn list(State(store): State<Shared>) -> Response {
    match blocking(&store, |s| s.list()).await {
        Ok(list) => json_value(StatusCode::OK, &list),
        Err(e) => e.into_response(),
    }
}

async fn get_doc(State(store): State<Shared>, Path(name): Path<String>) -> Response {
    match blocking(&store, move |s| s.get(&name)).await {
        Ok((bytes, _)) => json_body(StatusCode::OK, bytes),
        Err(e) => e.into_response(),
    }
}

async fn put_doc(State(store): State<Shared>, Path(name): Path<String>, body: Bytes) -> Response {
    match blocking(&store, move |s| s.put(&name, &body)).await {
        Ok(stored) => {
            let status = if stored.created {
                StatusCode::CREATED
            } else {
                StatusCode::OK
            };
            json_value(status, &stored)
        }
        Err(e) => e.into_response(),
    }
}

async fn delete_doc(State(store): State<Shared>, Path(name): Path<String>) -> Response {
    match blocking(&store, move |s| s.delete(&name)).await {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn history(State(store): State<Shared>, Path(name): Path<String>) -> Response {
    match blocking(&store, move |s| s.history(&name)).await {
        Ok(h) => json_value(StatusCode::OK, &h),
        Err(e) => e.into_response(),
    }
}

/// Body of a report post. The provider comes from the path; the timestamp
/// defaults to the time of receipt.
#[derive(Debug, Deserialize)]
struct ReportBody {
    #[serde(default)]
    provider: Option<String>,
    outcome: ReportOutcome,
    #[serde(rename = "engineVersion")]
    engine_version: String,
    #[serde(rename = "reportedAt", default)]
    reported_at: Option<chrono::DateTime<Utc>>,
}

async fn post_report(
    State(store): State<Shared>,
    Path(name): Path<String>,
    body: Bytes,
) -> Response {
    let parsed: ReportBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return fail(StatusCode::BAD_REQUEST, "malformed", format!("report: {e}")),
    };
    if let Some(p) = parsed.provider.as_deref().filter(|p| *p != name) {
        return fail(
            StatusCode::BAD_REQUEST,
            "name-mismatch",
            format!("report names provider {p:?}, not {name:?}"),
        );
    }
    let report = ExecutionReport {
        provider: name,
        outcome: parsed.outcome,
        engine_version: parsed.engine_version,
        reported_at: parsed.reported_at.unwrap_or_else(Utc::now),
    };
    let stored = report.clone();
    match blocking(&store, move |s| s.report(&report)).await {
        Ok(()) => json_value(StatusCode::CREATED, &stored),
        Err(e) => e.into_response(),
    }
}

async fn summary(State(store): State<Shared>, Path(name): Path<String>) -> Response {
    match blocking(&store, move |s| s.summary(&name)).await {
        Ok(sum) => json_value(StatusCode::OK, &sum),
        Err(e) => e.into_response(),
    }
}

async fn fallback() -> Response {
    fail(StatusCode::NOT_FOUND, "not-found", "no such route")
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/providers", get(list))
        .route(
            "/providers/{name}",
            get(get_doc).post(put_doc).delete(delete_doc),
        )
        .route("/providers/{name}/history", get(history))
        .route(
            "/providers/{name}/reports",
            axum::routing::post(post_report),
        )
        .route("/providers/{name}/reports/summary", get(summary))
        .route(
            "/status",
            get(|| async { json_value(StatusCode::OK, &json!({"ready": true})) }),
        )
        .fallback(fallback)
        .with_state(store)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A repository service running on a background task.
pub struct RepoServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl RepoServer {
    pub async fn start(store: Arc<Store>, addr: SocketAddr) -> Result<RepoServer, ServeError> {
        let listener = TcpListener::bind(addr).await.map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr),
            _ => ServeError::Io(e),
        })?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(store);
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                tracing::error!("repository stopped: {e}");
            }
        });
        Ok(RepoServer {
            addr,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> Url {
        Url::parse(&format!("http://{}/", self.addr)).expect("socket address forms a url")
    }

    /// Stops accepting requests and waits for in-flight ones.
    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    pub async fn wait(mut self) {
        let _ = (&mut self.task).await;
    }
}

impl Drop for RepoServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
