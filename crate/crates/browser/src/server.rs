//! The WebDriver HTTP endpoints.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{oneshot, Mutex as AsyncMutex};
use url::Url;

use crate::dom::Locator;
use crate::error::WdError;
use crate::fetch::Cookie;
use crate::session::{Session, Timeouts};

/// Key of a web element reference in WebDriver JSON.
pub const ELEMENT_KEY: &str = "element-6066-11e4-a52f-4f735466cecf";

type Shared = Arc<AsyncMutex<Session>>;

#[derive(Default)]
struct Browser {
    sessions: Mutex<HashMap<String, Shared>>,
}

impl Browser {
    fn session(&self, id: &str) -> Result<Shared, WdError> {
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| WdError::invalid_session(id))
    }
}

type AppState = Arc<Browser>;
type WdResult = Result<Json<Value>, WdError>;

fn ok(value: Value) -> WdResult {
    Ok(Json(json!({ "value": value })))
}

fn args(body: &Bytes) -> Result<Value, WdError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(json!({}));
    }
    serde_json::from_slice(body)
        .map_err(|e| WdError::invalid_argument(format!("body is not JSON: {e}")))
}

fn str_arg<'a>(v: &'a Value, key: &str) -> Result<&'a str, WdError> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| WdError::invalid_argument(format!("missing string field {key:?}")))
}

fn element_json(id: String) -> Value {
    json!({ ELEMENT_KEY: id })
}

pub fn router() -> Router {
    let state: AppState = Arc::new(Browser::default());
    Router::new()
        .route("/status", get(status))
        .route("/session", post(new_session))
        .route("/session/{sid}", axum::routing::delete(delete_session))
        .route(
            "/session/{sid}/timeouts",
            get(get_timeouts).post(set_timeouts),
        )
        .route("/session/{sid}/url", get(get_url).post(navigate))
        .route("/session/{sid}/back", post(back))
        .route("/session/{sid}/refresh", post(refresh))
        .route("/session/{sid}/title", get(title))
        .route("/session/{sid}/source", get(source))
        .route(
            "/session/{sid}/window",
            get(window_handle).post(switch_window).delete(close_window),
        )
        .route("/session/{sid}/window/handles", get(window_handles))
        .route("/session/{sid}/window/new", post(new_window))
        .route("/session/{sid}/element", post(find_element))
        .route("/session/{sid}/elements", post(find_elements))
        .route(
            "/session/{sid}/element/{eid}/element",
            post(find_element_from),
        )
        .route(
            "/session/{sid}/element/{eid}/elements",
            post(find_elements_from),
        )
        .route("/session/{sid}/element/{eid}/click", post(click))
        .route("/session/{sid}/element/{eid}/clear", post(clear))
        .route("/session/{sid}/element/{eid}/value", post(send_keys))
        .route("/session/{sid}/element/{eid}/text", get(text))
        .route("/session/{sid}/element/{eid}/name", get(tag_name))
        .route(
            "/session/{sid}/element/{eid}/attribute/{name}",
            get(attribute),
        )
        .route(
            "/session/{sid}/element/{eid}/property/{name}",
            get(property),
        )
        .route("/session/{sid}/element/{eid}/selected", get(selected))
        .route("/session/{sid}/element/{eid}/enabled", get(enabled))
        .route("/session/{sid}/element/{eid}/displayed", get(displayed))
        .route(
            "/session/{sid}/cookie",
            get(all_cookies).post(add_cookie).delete(delete_all_cookies),
        )
        .route(
            "/session/{sid}/cookie/{name}",
            get(named_cookie).delete(delete_cookie),
        )
        .fallback(unknown_command)
        .with_state(state)
}

async fn unknown_command(uri: axum::http::Uri) -> Response {
    WdError::unknown_command(format!("no command at {uri}")).into_response()
}

async fn status() -> WdResult {
    ok(json!({"ready": true, "message": "dara-browser ready"}))
}

async fn new_session(State(browser): State<AppState>, body: Bytes) -> WdResult {
    args(&body)?;
    let client = reqwest::Client::builder()
        .redirect(reqwest::redirect::Policy::none())
        .user_agent(concat!("dara-browser/", env!("CARGO_PKG_VERSION")))
        .build()
        .map_err(|e| WdError::unknown(format!("session not created: {e}")))?;
    let session = Session::new(client);
    let id = session.id.clone();
    let timeouts = session.timeouts;
    browser
        .sessions
        .lock()
        .expect("session table poisoned")
        .insert(id.clone(), Arc::new(AsyncMutex::new(session)));
    tracing::debug!(session = %id, "session created");
    ok(json!({
        "sessionId": id,
        "capabilities": {
            "browserName": "dara-browser",
            "browserVersion": env!("CARGO_PKG_VERSION"),
            "platformName": std::env::consts::OS,
            "acceptInsecureCerts": false,
            "pageLoadStrategy": "normal",
            "timeouts": timeouts,
        }
    }))
}

async fn delete_session(State(browser): State<AppState>, Path(sid): Path<String>) -> WdResult {
    browser
        .sessions
        .lock()
        .expect("session table poisoned")
        .remove(&sid)
        .ok_or_else(|| WdError::invalid_session(&sid))?;
    ok(Value::Null)
}

async fn get_timeouts(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let timeouts = s.lock().await.timeouts;
    ok(serde_json::to_value(timeouts).expect("timeouts serialize"))
}

async fn set_timeouts(State(b): State<AppState>, Path(sid): Path<String>, body: Bytes) -> WdResult {
    let v = args(&body)?;
    let s = b.session(&sid)?;
    let mut s = s.lock().await;
    let mut t: Timeouts = s.timeouts;
    for (key, slot) in [
        ("implicit", &mut t.implicit),
        ("pageLoad", &mut t.page_load),
        ("script", &mut t.script),
    ] {
        if let Some(raw) = v.get(key) {
            *slot = raw.as_u64().ok_or_else(|| {
                WdError::invalid_argument(format!("{key} must be a non-negative integer"))
            })?;
        }
    }
    s.timeouts = t;
    ok(Value::Null)
}

async fn navigate(State(b): State<AppState>, Path(sid): Path<String>, body: Bytes) -> WdResult {
    let v = args(&body)?;
    let url = str_arg(&v, "url")?;
    Url::parse(url).map_err(|e| WdError::invalid_argument(format!("bad url {url:?}: {e}")))?;
    let s = b.session(&sid)?;
    s.lock().await.navigate(url).await?;
    ok(Value::Null)
}

async fn get_url(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let s = s.lock().await;
    ok(json!(s.page()?.url.as_str()))
}

async fn back(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    s.lock().await.back().await?;
    ok(Value::Null)
}

async fn refresh(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    s.lock().await.refresh().await?;
    ok(Value::Null)
}

async fn title(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let s = s.lock().await;
    ok(json!(s.page()?.title()))
}

async fn source(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let s = s.lock().await;
    ok(json!(s.page()?.source()))
}

async fn window_handle(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let s = s.lock().await;
    ok(json!(s.current_handle()?))
}

async fn window_handles(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let s = s.lock().await;
    ok(json!(s.handles()))
}

async fn switch_window(
    State(b): State<AppState>,
    Path(sid): Path<String>,
    body: Bytes,
) -> WdResult {
    let v = args(&body)?;
    let handle = str_arg(&v, "handle")?;
    let s = b.session(&sid)?;
    s.lock().await.switch_to(handle)?;
    ok(Value::Null)
}

async fn close_window(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let remaining = s.lock().await.close_window()?;
    ok(json!(remaining))
}

async fn new_window(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let handle = s.lock().await.open_window();
    ok(json!({"handle": handle, "type": "tab"}))
}

fn locator(v: &Value) -> Result<(Locator, String), WdError> {
    let using = str_arg(v, "using")?;
    let locator = Locator::from_w3c(using)
        .ok_or_else(|| WdError::invalid_argument(format!("unknown location strategy {using:?}")))?;
    Ok((locator, str_arg(v, "value")?.to_string()))
}

async fn find(b: &AppState, sid: &str, from: Option<&str>, body: &Bytes, many: bool) -> WdResult {
    let v = args(body)?;
    let (locator, value) = locator(&v)?;
    let s = b.session(sid)?;
    let found = s.lock().await.find(locator, &value, from).await?;
    if many {
        ok(Value::Array(found.into_iter().map(element_json).collect()))
    } else {
        let first = found
            .into_iter()
            .next()
            .ok_or_else(|| WdError::no_such_element(format!("no element matches {value:?}")))?;
        ok(element_json(first))
    }
}

async fn find_element(State(b): State<AppState>, Path(sid): Path<String>, body: Bytes) -> WdResult {
    find(&b, &sid, None, &body, false).await
}

async fn find_elements(
    State(b): State<AppState>,
    Path(sid): Path<String>,
    body: Bytes,
) -> WdResult {
    find(&b, &sid, None, &body, true).await
}

async fn find_element_from(
    State(b): State<AppState>,
    Path((sid, eid)): Path<(String, String)>,
    body: Bytes,
) -> WdResult {
    find(&b, &sid, Some(&eid), &body, false).await
}

async fn find_elements_from(
    State(b): State<AppState>,
    Path((sid, eid)): Path<(String, String)>,
    body: Bytes,
) -> WdResult {
    find(&b, &sid, Some(&eid), &body, true).await
}

async fn click(State(b): State<AppState>, Path((sid, eid)): Path<(String, String)>) -> WdResult {
    let s = b.session(&sid)?;
    s.lock().await.click(&eid).await?;
    ok(Value::Null)
}

async fn clear(State(b): State<AppState>, Path((sid, eid)): Path<(String, String)>) -> WdResult {
    let s = b.session(&sid)?;
    s.lock().await.clear(&eid)?;
    ok(Value::Null)
}

async fn send_keys(
    State(b): State<AppState>,
    Path((sid, eid)): Path<(String, String)>,
    body: Bytes,
) -> WdResult {
    let v = args(&body)?;
    let text = str_arg(&v, "text")?;
    let s = b.session(&sid)?;
    s.lock().await.send_keys(&eid, text)?;
    ok(Value::Null)
}

/// Runs `f` on the page and node behind an element reference.
async fn inspect(
    b: &AppState,
    sid: &str,
    eid: &str,
    f: impl FnOnce(&crate::dom::Page, ego_tree::NodeId) -> Value,
) -> WdResult {
    let s = b.session(sid)?;
    let s = s.lock().await;
    let node = s.resolve(eid)?;
    ok(f(s.page()?, node))
}

async fn text(State(b): State<AppState>, Path((sid, eid)): Path<(String, String)>) -> WdResult {
    inspect(&b, &sid, &eid, |p, n| json!(p.text(n))).await
}

async fn tag_name(State(b): State<AppState>, Path((sid, eid)): Path<(String, String)>) -> WdResult {
    inspect(&b, &sid, &eid, |p, n| json!(p.tag(n))).await
}

async fn attribute(
    State(b): State<AppState>,
    Path((sid, eid, name)): Path<(String, String, String)>,
) -> WdResult {
    inspect(&b, &sid, &eid, |p, n| match p.attr(n, &name) {
        Some(v) => json!(v),
        None => Value::Null,
    })
    .await
}

async fn property(
    State(b): State<AppState>,
    Path((sid, eid, name)): Path<(String, String, String)>,
) -> WdResult {
    inspect(&b, &sid, &eid, |p, n| match name.as_str() {
        "value" => json!(p.value(n)),
        "checked" | "selected" => json!(p.is_selected(n)),
        "disabled" => json!(!p.is_enabled(n)),
        "tagName" => json!(p.tag(n).to_ascii_uppercase()),
        "textContent" | "innerText" => json!(p.text(n)),
        other => p.attr(n, other).map(Value::from).unwrap_or(Value::Null),
    })
    .await
}

async fn selected(State(b): State<AppState>, Path((sid, eid)): Path<(String, String)>) -> WdResult {
    inspect(&b, &sid, &eid, |p, n| json!(p.is_selected(n))).await
}

async fn enabled(State(b): State<AppState>, Path((sid, eid)): Path<(String, String)>) -> WdResult {
    inspect(&b, &sid, &eid, |p, n| json!(p.is_enabled(n))).await
}

async fn displayed(
    State(b): State<AppState>,
    Path((sid, eid)): Path<(String, String)>,
) -> WdResult {
    inspect(&b, &sid, &eid, |p, n| {
        let hidden_input = p.tag(n) == "input"
            && p.attr(n, "type")
                .is_some_and(|t| t.eq_ignore_ascii_case("hidden"));
        json!(!hidden_input && p.attr(n, "hidden").is_none())
    })
    .await
}

async fn all_cookies(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    let cookies = s.lock().await.cookies()?;
    ok(serde_json::to_value(cookies).expect("cookies serialize"))
}

async fn named_cookie(
    State(b): State<AppState>,
    Path((sid, name)): Path<(String, String)>,
) -> WdResult {
    let s = b.session(&sid)?;
    let cookie = s
        .lock()
        .await
        .cookies()?
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| WdError::no_such_cookie(&name))?;
    ok(serde_json::to_value(cookie).expect("cookie serializes"))
}

async fn add_cookie(State(b): State<AppState>, Path(sid): Path<String>, body: Bytes) -> WdResult {
    let v = args(&body)?;
    let raw = v
        .get("cookie")
        .cloned()
        .ok_or_else(|| WdError::invalid_argument("missing field \"cookie\""))?;
    let cookie: Cookie = serde_json::from_value(raw)
        .map_err(|e| WdError::invalid_argument(format!("bad cookie: {e}")))?;
    let s = b.session(&sid)?;
    s.lock().await.add_cookie(cookie)?;
    ok(Value::Null)
}

async fn delete_cookie(
    State(b): State<AppState>,
    Path((sid, name)): Path<(String, String)>,
) -> WdResult {
    let s = b.session(&sid)?;
    s.lock().await.delete_cookie(&name);
    ok(Value::Null)
}

async fn delete_all_cookies(State(b): State<AppState>, Path(sid): Path<String>) -> WdResult {
    let s = b.session(&sid)?;
    s.lock().await.delete_cookies();
    ok(Value::Null)
}

/// A browser server running on a background task.
pub struct BrowserServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl BrowserServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub async fn start(addr: SocketAddr) -> std::io::Result<BrowserServer> {
        let listener = TcpListener::bind(addr).await?;
        Ok(Self::from_listener(listener))
    }

    pub fn from_listener(listener: TcpListener) -> BrowserServer {
        let addr = listener
            .local_addr()
            .expect("bound listener has an address");
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, router())
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                tracing::error!("browser server stopped: {e}");
            }
        });
        BrowserServer {
            addr,
            shutdown: Some(tx),
            task,
        }
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

    /// Serves until the task ends; used by long-running processes.
    pub async fn wait(mut self) {
        let _ = (&mut self.task).await;
    }
}

impl Drop for BrowserServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
