use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Form, Path, State};
use axum::http::header::{COOKIE, LOCATION, SET_COOKIE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use url::Url;

use crate::pages;
use crate::scenario::{FailureMode, Scenario};

pub const SESSION_COOKIE: &str = "dara_sandbox_session";
pub const SESSION_TOKEN: &str = "signed-in";
pub const TEST_USER: &str = "tester";
pub const TEST_PASSWORD: &str = "sandbox";

/// A request form submission as the site received it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub scenario: String,
    pub fields: BTreeMap<String, String>,
    #[serde(rename = "receivedAt")]
    pub received_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error("scenario {0:?} listed twice")]
    DuplicateScenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Site {
    scenarios: BTreeMap<String, Scenario>,
    journal: Mutex<Vec<Submission>>,
    /// Start-page serves per scenario.
    serves: Mutex<BTreeMap<String, u64>>,
}

type Shared = Arc<Site>;

impl Site {
    #[allow(clippy::result_large_err)]
    fn scenario(&self, name: &str) -> Result<&Scenario, Response> {
        self.scenarios.get(name).ok_or_else(|| {
            (StatusCode::NOT_FOUND, Html(format!("no scenario {name:?}"))).into_response()
        })
    }

    fn current_generation(&self, name: &str) -> u64 {
        let serves = self.serves.lock().expect("poisoned");
        serves.get(name).copied().unwrap_or(0).saturating_sub(1)
    }
}

fn signed_in(headers: &HeaderMap) -> bool {
    let expected = format!("{SESSION_COOKIE}={SESSION_TOKEN}");
    headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .any(|pair| pair.trim() == expected)
}

fn redirect(status: StatusCode, to: String) -> Response {
    (status, [(LOCATION, to)]).into_response()
}

/// Applies the scenario's latency, then the login guard.
async fn enter(s: &Scenario, headers: &HeaderMap) -> Result<(), Response> {
    let latency = s.latency_ms();
    if latency > 0 {
        tokio::time::sleep(Duration::from_millis(latency)).await;
    }
    if s.requires_login && !signed_in(headers) {
        return Err(redirect(
            StatusCode::SEE_OTHER,
            format!("/{}/login", s.name),
        ));
    }
    Ok(())
}

macro_rules! guard {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(resp) => return resp,
        }
    };
}

async fn index(State(site): State<Shared>) -> Html<String> {
    let items: String = site
        .scenarios
        .keys()
        .map(|n| format!("<li><a href=\"/{n}/privacy\">{n}</a></li>"))
        .collect();
    Html(format!("<!DOCTYPE html><html><head><title>Sandbox</title></head><body><ul>{items}</ul></body></html>"))
}

async fn journal(State(site): State<Shared>) -> Json<Vec<Submission>> {
    Json(site.journal.lock().expect("poisoned").clone())
}

async fn privacy(
    State(site): State<Shared>,
    Path(name): Path<String>,
    headers: HeaderMap,
) -> Response {
    let s = guard!(site.scenario(&name));
    guard!(enter(s, &headers).await);
    if s.failure == FailureMode::RedirectLoop {
        return redirect(StatusCode::FOUND, format!("/{name}/privacy/loop"));
    }
    *site
        .serves
        .lock()
        .expect("poisoned")
        .entry(name)
        .or_insert(0) += 1;
    Html(pages::privacy(s).html()).into_response()
}

async fn privacy_loop(
    State(site): State<Shared>,
    Path(name): Path<String>,
    headers: HeaderMap,
) -> Response {
    let s = guard!(site.scenario(&name));
    guard!(enter(s, &headers).await);
    redirect(StatusCode::FOUND, format!("/{name}/privacy"))
}

async fn dsar(
    State(site): State<Shared>,
    Path(name): Path<String>,
    headers: HeaderMap,
) -> Response {
    let s = guard!(site.scenario(&name));
    guard!(enter(s, &headers).await);
    Html(pages::dsar(s, site.current_generation(&name)).html()).into_response()
}

async fn confirm(
    State(site): State<Shared>,
    Path(name): Path<String>,
    headers: HeaderMap,
    Form(fields): Form<Vec<(String, String)>>,
) -> Response {
    let s = guard!(site.scenario(&name));
    guard!(enter(s, &headers).await);
    let submission = Submission {
        scenario: name.clone(),
        fields: fields.into_iter().collect(),
        received_at: Utc::now(),
    };
    tracing::info!(scenario = %name, fields = ?submission.fields, "request received");
    site.journal.lock().expect("poisoned").push(submission);
    Html(pages::confirm().html()).into_response()
}

async fn login_page(State(site): State<Shared>, Path(name): Path<String>) -> Response {
    let s = guard!(site.scenario(&name));
    let latency = s.latency_ms();
    tokio::time::sleep(Duration::from_millis(latency)).await;
    Html(pages::login(s).html()).into_response()
}

#[derive(Deserialize)]
struct Credentials {
    #[serde(default)]
    username: String,
    #[serde(default)]
    password: String,
}

async fn login_submit(
    State(site): State<Shared>,
    Path(name): Path<String>,
    Form(creds): Form<Credentials>,
) -> Response {
    let s = guard!(site.scenario(&name));
    if creds.username != TEST_USER || creds.password != TEST_PASSWORD {
        return (StatusCode::UNAUTHORIZED, Html(pages::login(s).html())).into_response();
    }
    let cookie = format!("{SESSION_COOKIE}={SESSION_TOKEN}; Path=/; HttpOnly");
    (
        StatusCode::SEE_OTHER,
        [(SET_COOKIE, cookie), (LOCATION, format!("/{name}/privacy"))],
    )
        .into_response()
}

fn router(site: Shared) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/__journal", get(journal))
        .route("/{scenario}/privacy", get(privacy))
        .route("/{scenario}/privacy/loop", get(privacy_loop))
        .route("/{scenario}/privacy/dsar", get(dsar))
        .route("/{scenario}/login", get(login_page).post(login_submit))
        .route("/{scenario}/confirm", axum::routing::post(confirm))
        .with_state(site)
}

/// A running sandbox site.
pub struct SandboxServer {
    addr: SocketAddr,
    site: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl SandboxServer {
    /// Serves `scenarios` on `addr`; port 0 picks a free port.
    pub async fn start(
        scenarios: Vec<Scenario>,
        addr: SocketAddr,
    ) -> Result<SandboxServer, SandboxError> {
        let mut by_name = BTreeMap::new();
        for s in scenarios {
            let name = s.name.clone();
            if by_name.insert(name.clone(), s).is_some() {
                return Err(SandboxError::DuplicateScenario(name));
            }
        }
        let listener = TcpListener::bind(addr).await.map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => SandboxError::PortInUse(addr),
            _ => SandboxError::Io(e),
        })?;
        let addr = listener.local_addr()?;
        let site = Arc::new(Site {
            scenarios: by_name,
            journal: Mutex::new(Vec::new()),
            serves: Mutex::new(BTreeMap::new()),
        });
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(site.clone());
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                tracing::error!("sandbox stopped: {e}");
            }
        });
        Ok(SandboxServer {
            addr,
            site,
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

    /// Start URL of a scenario.
    pub fn start_url(&self, scenario: &str) -> Url {
        self.url()
            .join(&format!("{scenario}/privacy"))
            .expect("scenario path joins")
    }

    pub fn scenario(&self, name: &str) -> Option<&Scenario> {
        self.site.scenarios.get(name)
    }

    pub fn scenarios(&self) -> impl Iterator<Item = &Scenario> {
        self.site.scenarios.values()
    }

    /// Submissions in arrival order.
    pub fn journal(&self) -> Vec<Submission> {
        self.site.journal.lock().expect("poisoned").clone()
    }

    /// The generation the next run of `scenario` will see.
    pub fn next_generation(&self, scenario: &str) -> u64 {
        self.site
            .serves
            .lock()
            .expect("poisoned")
            .get(scenario)
            .copied()
            .unwrap_or(0)
    }

    /// Stops serving and returns the final journal.
    pub async fn stop(mut self) -> Vec<Submission> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
        self.journal()
    }
}

impl Drop for SandboxServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
