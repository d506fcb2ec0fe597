//! Page loading: HTTP with manual redirect handling and a cookie store.

use std::time::Duration;

use reqwest::header::{CONTENT_TYPE, COOKIE, LOCATION, SET_COOKIE};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::dom::{Method, Request};

pub const MAX_REDIRECTS: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoadError {
    #[error("page load timed out after {0} ms")]
    Timeout(u64),
    #[error("too many redirects (more than {MAX_REDIRECTS}) starting at {0}")]
    TooManyRedirects(Url),
    #[error("unsupported url scheme in {0}")]
    UnsupportedScheme(Url),
    #[error("network error loading {url}: {detail}")]
    Network { url: Url, detail: String },
}

/// A cookie in WebDriver's JSON shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cookie {
    pub name: String,
    pub value: String,
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default, rename = "httpOnly")]
    pub http_only: bool,
    #[serde(default)]
    pub secure: bool,
}

impl Cookie {
    fn matches(&self, url: &Url) -> bool {
        let host = url.host_str().unwrap_or_default();
        let domain_ok = match &self.domain {
            Some(d) => {
                let d = d.trim_start_matches('.');
                host == d || host.ends_with(&format!(".{d}"))
            }
            None => false,
        };
        let path = self.path.as_deref().unwrap_or("/");
        domain_ok && url.path().starts_with(path)
    }
}

#[derive(Debug, Default, Clone)]
pub struct CookieStore {
    cookies: Vec<Cookie>,
}

impl CookieStore {
    pub fn all(&self) -> &[Cookie] {
        &self.cookies
    }

    pub fn for_url(&self, url: &Url) -> Vec<&Cookie> {
        self.cookies.iter().filter(|c| c.matches(url)).collect()
    }

    pub fn insert(&mut self, cookie: Cookie) {
        self.cookies.retain(|c| {
            !(c.name == cookie.name && c.domain == cookie.domain && c.path == cookie.path)
        });
        self.cookies.push(cookie);
    }

    pub fn remove(&mut self, name: &str) {
        self.cookies.retain(|c| c.name != name);
    }

    pub fn clear(&mut self) {
        self.cookies.clear();
    }

    /// Applies one `Set-Cookie` header received from `url`. Only the
    /// attributes that affect matching are honoured.
    pub fn apply_set_cookie(&mut self, url: &Url, header: &str) {
        let mut parts = header.split(';');
        let Some((name, value)) = parts.next().and_then(|kv| kv.split_once('=')) else {
            return;
        };
        let mut cookie = Cookie {
            name: name.trim().to_string(),
            value: value.trim().to_string(),
            domain: url.host_str().map(str::to_string),
            path: Some("/".into()),
            http_only: false,
            secure: false,
        };
        let mut expired = false;
        for attr in parts {
            let (key, val) = attr.split_once('=').unwrap_or((attr, ""));
            match key.trim().to_ascii_lowercase().as_str() {
                "path" => cookie.path = Some(val.trim().to_string()),
                "domain" => cookie.domain = Some(val.trim().trim_start_matches('.').to_string()),
                "max-age" => expired = val.trim().parse::<i64>().is_ok_and(|s| s <= 0),
                "httponly" => cookie.http_only = true,
                "secure" => cookie.secure = true,
                _ => {}
            }
        }
        if expired {
            self.cookies
                .retain(|c| !(c.name == cookie.name && c.domain == cookie.domain));
        } else {
            self.insert(cookie);
        }
    }
}

#[derive(Debug)]
pub struct Loaded {
    pub url: Url,
    pub status: u16,
    pub body: String,
}

/// Performs `request`, following redirects by hand so cookies set on the
/// way are kept and loops are bounded. The timeout covers the whole chain.
pub async fn load(
    client: &reqwest::Client,
    cookies: &mut CookieStore,
    request: Request,
    timeout: Duration,
) -> Result<Loaded, LoadError> {
    let started = request.url.clone();
    match tokio::time::timeout(timeout, follow(client, cookies, request)).await {
        Ok(result) => result,
        Err(_) => {
            tracing::debug!(url = %started, "page load timed out");
            Err(LoadError::Timeout(timeout.as_millis() as u64))
        }
    }
}

async fn follow(
    client: &reqwest::Client,
    cookies: &mut CookieStore,
    mut request: Request,
) -> Result<Loaded, LoadError> {
    let first = request.url.clone();
    for _ in 0..=MAX_REDIRECTS {
        if !matches!(request.url.scheme(), "http" | "https") {
            return Err(LoadError::UnsupportedScheme(request.url));
        }
        let mut builder = match request.method {
            Method::Get => client.get(request.url.clone()),
            Method::Post => client
                .post(request.url.clone())
                .header(CONTENT_TYPE, "application/x-www-form-urlencoded")
                .body(request.body.clone().unwrap_or_default()),
        };
        let header: Vec<String> = cookies
            .for_url(&request.url)
            .iter()
            .map(|c| format!("{}={}", c.name, c.value))
            .collect();
        if !header.is_empty() {
            builder = builder.header(COOKIE, header.join("; "));
        }
        let network = |e: reqwest::Error, url: &Url| LoadError::Network {
            url: url.clone(),
            detail: e.to_string(),
        };
        let response = builder.send().await.map_err(|e| network(e, &request.url))?;
        for value in response.headers().get_all(SET_COOKIE) {
            if let Ok(text) = value.to_str() {
                cookies.apply_set_cookie(&request.url, text);
            }
        }
        let status = response.status();
        if status.is_redirection() {
            if let Some(target) = response
                .headers()
                .get(LOCATION)
                .and_then(|l| l.to_str().ok())
                .and_then(|l| request.url.join(l).ok())
            {
                let keep_method = matches!(
                    status,
                    StatusCode::TEMPORARY_REDIRECT | StatusCode::PERMANENT_REDIRECT
                );
                request = if keep_method {
                    Request {
                        url: target,
                        ..request
                    }
                } else {
                    Request::get(target)
                };
                continue;
            }
        }
        let url = request.url.clone();
        let body = response.text().await.map_err(|e| network(e, &url))?;
        return Ok(Loaded {
            url,
            status: status.as_u16(),
            body,
        });
    }
    Err(LoadError::TooManyRedirects(first))
}
