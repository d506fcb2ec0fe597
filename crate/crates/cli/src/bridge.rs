//! The engine bridge: a local HTTP endpoint through which a page can start
//! runs without reaching the browser-control server itself.
//!
//! | Route | |
//! |---|---|
//! | `POST /runs` | start a run; the response streams its signals as NDJSON |
//! | `GET /status` | readiness and the services the bridge forwards to |
//!
//! A run request is `{provider, timeRange?, dataFormat?, mediaQuality?,
//! extras?, cookies?}`. Failures before the first engine step are answered
//! with an error body instead of a stream. Like the repository, the bridge
//! has no authentication and should only listen on localhost.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use dara_core::workflow::TimeRangeSelection;
use dara_engine::{ExecutionSignal, SignalSink, WebDriver};
use dara_repository::{ApiError, RepoClient, JSON_UTF8};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio_stream::wrappers::UnboundedReceiverStream;
use tokio_stream::StreamExt;
use tower_http::cors::CorsLayer;
use url::Url;

use crate::runner::{prepare, run_prepared, RunFailure, RunRequest, Selections, Timeouts};

pub const NDJSON: &str = "application/x-ndjson";

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunBody {
    pub provider: String,
    #[serde(default)]
    pub time_range: Option<String>,
    #[serde(default)]
    pub data_format: Option<String>,
    #[serde(default)]
    pub media_quality: Option<String>,
    #[serde(default)]
    pub extras: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub cookies: BTreeMap<String, String>,
}

impl RunBody {
    fn into_request(self, timeouts: Timeouts) -> Result<RunRequest, String> {
        let time_range = self
            .time_range
            .as_deref()
            .map(str::parse::<TimeRangeSelection>)
            .transpose()?;
        Ok(RunRequest {
            provider: self.provider,
            selections: Selections {
                time_range,
                data_format: self.data_format,
                media_quality: self.media_quality,
                extras: self.extras,
            },
            cookies: self.cookies.into_iter().collect(),
            timeouts,
        })
    }
}

struct Bridge {
    repo: RepoClient,
    driver: WebDriver,
    timeouts: Timeouts,
}

fn error(status: StatusCode, code: &str, detail: String) -> Response {
    let body = ApiError {
        error: code.into(),
        detail,
        findings: None,
    };
    (
        status,
        [(CONTENT_TYPE, JSON_UTF8)],
        serde_json::to_vec(&body).expect("errors serialize"),
    )
        .into_response()
}

fn failure_status(f: &RunFailure) -> StatusCode {
    match f {
        RunFailure::RepositoryUnreachable(_)
        | RunFailure::BrowserUnreachable(_)
        | RunFailure::Session(_) => StatusCode::BAD_GATEWAY,
        RunFailure::NotFound(_) => StatusCode::NOT_FOUND,
        RunFailure::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

struct ChannelSink(mpsc::UnboundedSender<ExecutionSignal>);

impl SignalSink for ChannelSink {
    fn emit(&self, signal: &ExecutionSignal) {
        // The client may have gone away; the run continues regardless.
        let _ = self.0.send(signal.clone());
    }
}

async fn start_run(State(bridge): State<Arc<Bridge>>, body: Bytes) -> Response {
    let parsed: RunBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => {
            return error(
                StatusCode::BAD_REQUEST,
                "malformed",
                format!("run request: {e}"),
            )
        }
    };
    let req = match parsed.into_request(bridge.timeouts) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad-selection", e),
    };
    let prepared = match prepare(&bridge.repo, &bridge.driver, &req).await {
        Ok(p) => p,
        Err(f) => return error(failure_status(&f), f.code(), f.to_string()),
    };
    let (tx, rx) = mpsc::unbounded_channel();
    let repo = bridge.repo.clone();
    tokio::spawn(async move {
        let sink = ChannelSink(tx);
        let (result, warning) = run_prepared(prepared, &repo, &sink).await;
        if let Some(w) = warning {
            tracing::warn!(run = %result.run_id, "{w}");
        }
    });
    let lines = UnboundedReceiverStream::new(rx).map(|s| {
        let mut line = serde_json::to_vec(&s).expect("signals serialize");
        line.push(b'\n');
        Ok::<_, Infallible>(Bytes::from(line))
    });
    (
        StatusCode::OK,
        [(CONTENT_TYPE, NDJSON)],
        Body::from_stream(lines),
    )
        .into_response()
}

pub fn router(repo: Url, browser: Url, timeouts: Timeouts) -> Router {
    let status = serde_json::json!({
        "ready": true,
        "repository": repo.as_str(),
        "browser": browser.as_str(),
        "engineVersion": crate::runner::engine_version(),
    });
    let bridge = Arc::new(Bridge {
        repo: RepoClient::new(repo),
        driver: WebDriver::new(browser),
        timeouts,
    });
    Router::new()
        .route("/runs", post(start_run))
        .route(
            "/status",
            get(move || {
                let status = status.clone();
                async move { ([(CONTENT_TYPE, JSON_UTF8)], status.to_string()) }
            }),
        )
        .fallback(|| async { error(StatusCode::NOT_FOUND, "not-found", "no such route".into()) })
        .layer(CorsLayer::permissive())
        .with_state(bridge)
}

/// A bridge running on a background task.
pub struct BridgeServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl BridgeServer {
    pub async fn start(addr: SocketAddr, app: Router) -> std::io::Result<BridgeServer> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                tracing::error!("bridge stopped: {e}");
            }
        });
        Ok(BridgeServer {
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

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for BridgeServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
