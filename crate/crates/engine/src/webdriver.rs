//! Client side of the W3C WebDriver HTTP protocol.

use std::time::Duration;

use reqwest::Method;
use serde_json::{json, Value};
use url::Url;

pub const ELEMENT_KEY: &str = "element-6066-11e4-a52f-4f735466cecf";

pub const DEFAULT_PAGE_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_ELEMENT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_RUN_CEILING_MS: u64 = 120_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DriverError {
    /// The control server could not be reached or dropped the connection.
    #[error("browser-control server unreachable: {0}")]
    Unreachable(String),
    /// The server answered with something that is not a WebDriver response.
    #[error("malformed browser-control response: {0}")]
    Protocol(String),
    /// A well-formed WebDriver error.
    #[error("{code}: {message}")]
    Command { code: String, message: String },
}

impl DriverError {
    pub fn code(&self) -> Option<&str> {
        match self {
            DriverError::Command { code, .. } => Some(code),
            _ => None,
        }
    }

    /// Whether the error means the session itself is gone.
    pub fn is_session_lost(&self) -> bool {
        matches!(self, DriverError::Unreachable(_))
            || matches!(self.code(), Some("invalid session id" | "no such window"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Css,
    XPath,
}

impl Strategy {
    fn as_w3c(self) -> &'static str {
        match self {
            Strategy::Css => "css selector",
            Strategy::XPath => "xpath",
        }
    }
}

/// An element reference returned by the server.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ElementId(pub String);

/// Connection to a WebDriver server.
#[derive(Debug, Clone)]
pub struct WebDriver {
    http: reqwest::Client,
    base: Url,
}

impl WebDriver {
    pub fn new(base: Url) -> Self {
        let http = reqwest::Client::builder()
            .build()
            .expect("default http client builds");
        WebDriver { http, base }
    }

    pub fn endpoint(&self) -> &Url {
        &self.base
    }

    async fn call(
        &self,
        method: Method,
        path: &str,
        body: Option<Value>,
    ) -> Result<Value, DriverError> {
        let url = self
            .base
            .join(path.trim_start_matches('/'))
            .map_err(|e| DriverError::Protocol(format!("bad command path {path}: {e}")))?;
        let mut req = self.http.request(method, url);
        if let Some(body) = body {
            req = req.json(&body);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| DriverError::Unreachable(e.to_string()))?;
        let status = resp.status();
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| DriverError::Unreachable(e.to_string()))?;
        let mut parsed: Value = serde_json::from_slice(&bytes)
            .map_err(|e| DriverError::Protocol(format!("HTTP {status}: body is not JSON ({e})")))?;
        let value = parsed
            .get_mut("value")
            .map(Value::take)
            .ok_or_else(|| DriverError::Protocol(format!("HTTP {status}: no \"value\" member")))?;
        if status.is_success() {
            return Ok(value);
        }
        let code = value.get("error").and_then(Value::as_str);
        match code {
            Some(code) => Err(DriverError::Command {
                code: code.to_string(),
                message: value
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
            }),
            None => Err(DriverError::Protocol(format!(
                "HTTP {status} without an error code"
            ))),
        }
    }

    pub async fn status(&self) -> Result<Value, DriverError> {
        self.call(Method::GET, "status", None).await
    }

    /// Creates a session and applies the given timeouts to it.
    pub async fn new_session(
        &self,
        page_timeout_ms: u64,
        element_timeout_ms: u64,
    ) -> Result<Session, DriverError> {
        let v = self
            .call(
                Method::POST,
                "session",
                Some(json!({"capabilities": {"alwaysMatch": {}}})),
            )
            .await?;
        let id = v
            .get("sessionId")
            .and_then(Value::as_str)
            .ok_or_else(|| DriverError::Protocol("new session response lacks sessionId".into()))?
            .to_string();
        let session = Session {
            driver: self.clone(),
            session_id: id,
            page_timeout_ms,
            element_timeout_ms,
            run_ceiling_ms: DEFAULT_RUN_CEILING_MS,
        };
        session
            .cmd(
                Method::POST,
                "timeouts",
                Some(json!({"pageLoad": page_timeout_ms, "implicit": 0})),
            )
            .await?;
        Ok(session)
    }
}

/// A live WebDriver session. One workflow run uses a session exclusively.
#[derive(Debug)]
pub struct Session {
    driver: WebDriver,
    pub session_id: String,
    pub page_timeout_ms: u64,
    pub element_timeout_ms: u64,
    /// Upper bound on a whole run.
    pub run_ceiling_ms: u64,
}

impl Session {
    pub fn remote_endpoint(&self) -> &Url {
        self.driver.endpoint()
    }

    async fn cmd(
        &self,
        method: Method,
        path: &str,
        body: Option<Value>,
    ) -> Result<Value, DriverError> {
        let full = if path.is_empty() {
            format!("session/{}", self.session_id)
        } else {
            format!("session/{}/{path}", self.session_id)
        };
        let body = match (&method, body) {
            (&Method::POST, None) => Some(json!({})),
            (_, b) => b,
        };
        self.driver.call(method, &full, body).await
    }

    pub async fn navigate(&self, url: &str) -> Result<(), DriverError> {
        self.cmd(Method::POST, "url", Some(json!({ "url": url })))
            .await
            .map(drop)
    }

    pub async fn current_url(&self) -> Result<String, DriverError> {
        let v = self.cmd(Method::GET, "url", None).await?;
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| DriverError::Protocol("url is not a string".into()))
    }

    pub async fn find_elements(
        &self,
        strategy: Strategy,
        expression: &str,
        from: Option<&ElementId>,
    ) -> Result<Vec<ElementId>, DriverError> {
        let path = match from {
            Some(e) => format!("element/{}/elements", e.0),
            None => "elements".to_string(),
        };
        let v = self
            .cmd(
                Method::POST,
                &path,
                Some(json!({"using": strategy.as_w3c(), "value": expression})),
            )
            .await?;
        let items = v
            .as_array()
            .ok_or_else(|| DriverError::Protocol("elements response is not an array".into()))?;
        items
            .iter()
            .map(|item| {
                item.get(ELEMENT_KEY)
                    .and_then(Value::as_str)
                    .map(|s| ElementId(s.to_string()))
                    .ok_or_else(|| DriverError::Protocol("element reference lacks its key".into()))
            })
            .collect()
    }

    pub async fn click(&self, e: &ElementId) -> Result<(), DriverError> {
        self.cmd(Method::POST, &format!("element/{}/click", e.0), None)
            .await
            .map(drop)
    }

    pub async fn clear(&self, e: &ElementId) -> Result<(), DriverError> {
        self.cmd(Method::POST, &format!("element/{}/clear", e.0), None)
            .await
            .map(drop)
    }

    pub async fn send_keys(&self, e: &ElementId, text: &str) -> Result<(), DriverError> {
        self.cmd(
            Method::POST,
            &format!("element/{}/value", e.0),
            Some(json!({ "text": text })),
        )
        .await
        .map(drop)
    }

    pub async fn property(&self, e: &ElementId, name: &str) -> Result<Value, DriverError> {
        self.cmd(
            Method::GET,
            &format!("element/{}/property/{name}", e.0),
            None,
        )
        .await
    }

    pub async fn tag_name(&self, e: &ElementId) -> Result<String, DriverError> {
        let v = self
            .cmd(Method::GET, &format!("element/{}/name", e.0), None)
            .await?;
        Ok(v.as_str().unwrap_or_default().to_ascii_lowercase())
    }

    pub async fn window_handle(&self) -> Result<String, DriverError> {
        let v = self.cmd(Method::GET, "window", None).await?;
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| DriverError::Protocol("window handle is not a string".into()))
    }

    pub async fn window_handles(&self) -> Result<Vec<String>, DriverError> {
        let v = self.cmd(Method::GET, "window/handles", None).await?;
        serde_json::from_value(v).map_err(|e| DriverError::Protocol(format!("window handles: {e}")))
    }

    pub async fn new_tab(&self) -> Result<String, DriverError> {
        let v = self
            .cmd(Method::POST, "window/new", Some(json!({"type": "tab"})))
            .await?;
        v.get("handle")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| DriverError::Protocol("new window response lacks handle".into()))
    }

    pub async fn switch_to(&self, handle: &str) -> Result<(), DriverError> {
        self.cmd(Method::POST, "window", Some(json!({ "handle": handle })))
            .await
            .map(drop)
    }

    pub async fn close_window(&self) -> Result<Vec<String>, DriverError> {
        let v = self.cmd(Method::DELETE, "window", None).await?;
        serde_json::from_value(v).map_err(|e| DriverError::Protocol(format!("window handles: {e}")))
    }

    pub async fn add_cookie(&self, name: &str, value: &str) -> Result<(), DriverError> {
        self.cmd(
            Method::POST,
            "cookie",
            Some(json!({"cookie": {"name": name, "value": value}})),
        )
        .await
        .map(drop)
    }

    pub async fn delete(self) -> Result<(), DriverError> {
        self.cmd(Method::DELETE, "", None).await.map(drop)
    }

    /// Polls for at least one match until `timeout` passes.
    pub async fn wait_for(
        &self,
        strategy: Strategy,
        expression: &str,
        from: Option<&ElementId>,
        timeout: Duration,
    ) -> Result<Option<ElementId>, DriverError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            if let Some(first) = self
                .find_elements(strategy, expression, from)
                .await?
                .into_iter()
                .next()
            {
                return Ok(Some(first));
            }
            if tokio::time::Instant::now() >= deadline {
                return Ok(None);
            }
            tokio::time::sleep(Duration::from_millis(50).min(timeout)).await;
        }
    }
}

/// Quotes `s` as an XPath string literal.
pub fn xpath_literal(s: &str) -> String {
    if !s.contains('\'') {
        format!("'{s}'")
    } else if !s.contains('"') {
        format!("\"{s}\"")
    } else {
        let parts: Vec<String> = s.split('\'').map(|p| format!("'{p}'")).collect();
        format!("concat({})", parts.join(", \"'\", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_survive_quotes() {
        assert_eq!(xpath_literal("json"), "'json'");
        assert_eq!(xpath_literal("it's"), "\"it's\"");
        assert_eq!(xpath_literal("a'b\"c"), "concat('a', \"'\", 'b\"c')");
    }

    #[test]
    fn session_loss_classification() {
        assert!(DriverError::Unreachable("refused".into()).is_session_lost());
        let gone = DriverError::Command {
            code: "invalid session id".into(),
            message: String::new(),
        };
        assert!(gone.is_session_lost());
        let missing = DriverError::Command {
            code: "no such element".into(),
            message: String::new(),
        };
        assert!(!missing.is_session_lost());
        assert!(!DriverError::Protocol("x".into()).is_session_lost());
    }
}
