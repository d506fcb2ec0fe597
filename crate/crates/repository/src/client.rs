use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use url::Url;

use crate::api::{ApiError, JSON_UTF8};
use crate::store::{ExecutionReport, HistoryEntry, ProviderSummary, ReportSummary, Stored};
use dara_core::{parse_document_bytes, DarpalDocument};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("repository unreachable at {url}: {detail}")]
    Unreachable { url: String, detail: String },
    #[error("repository answered {status}: {}: {}", .body.error, .body.detail)]
    Api { status: u16, body: ApiError },
    #[error("unexpected repository response: {0}")]
    Protocol(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// HTTP client for the repository service.
#[derive(Debug, Clone)]
pub struct RepoClient {
    http: reqwest::Client,
    base: Url,
}

impl RepoClient {
    pub fn new(base: Url) -> RepoClient {
        RepoClient {
            http: reqwest::Client::new(),
            base,
        }
    }

    pub fn base(&self) -> &Url {
        &self.base
    }

    async fn send(
        &self,
        method: Method,
        path: &str,
        body: Option<Vec<u8>>,
    ) -> Result<(StatusCode, Vec<u8>), ClientError> {
        let url = self
            .base
            .join(path)
            .map_err(|e| ClientError::Protocol(format!("bad path {path}: {e}")))?;
        let mut req = self.http.request(method, url.clone());
        if let Some(body) = body {
            req = req
                .header(reqwest::header::CONTENT_TYPE, JSON_UTF8)
                .body(body);
        }
        let unreachable = |e: reqwest::Error| ClientError::Unreachable {
            url: url.to_string(),
            detail: e.to_string(),
        };
        let resp = req.send().await.map_err(unreachable)?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(unreachable)?.to_vec();
        if status.is_success() {
            return Ok((status, bytes));
        }
        match serde_json::from_slice::<ApiError>(&bytes) {
            Ok(body) => Err(ClientError::Api {
                status: status.as_u16(),
                body,
            }),
            Err(_) => Err(ClientError::Protocol(format!(
                "HTTP {status} without an error body"
            ))),
        }
    }

    async fn json<T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<Vec<u8>>,
    ) -> Result<T, ClientError> {
        let (_, bytes) = self.send(method, path, body).await?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    pub async fn list(&self) -> Result<Vec<ProviderSummary>, ClientError> {
        self.json(Method::GET, "providers", None).await
    }

    /// The stored bytes and the parsed document.
    pub async fn get(&self, provider: &str) -> Result<(Vec<u8>, DarpalDocument), ClientError> {
        let (_, bytes) = self
            .send(Method::GET, &format!("providers/{provider}"), None)
            .await?;
        let doc = parse_document_bytes(&bytes).map_err(|e| ClientError::Protocol(e.to_string()))?;
        Ok((bytes, doc))
    }

    pub async fn put_bytes(&self, provider: &str, bytes: Vec<u8>) -> Result<Stored, ClientError> {
        self.json(Method::POST, &format!("providers/{provider}"), Some(bytes))
            .await
    }

    pub async fn put(&self, doc: &DarpalDocument) -> Result<Stored, ClientError> {
        let provider = doc.provider().unwrap_or_default();
        self.put_bytes(&provider, doc.to_json_pretty().into_bytes())
            .await
    }

    pub async fn delete(&self, provider: &str) -> Result<(), ClientError> {
        self.send(Method::DELETE, &format!("providers/{provider}"), None)
            .await
            .map(drop)
    }

    pub async fn history(&self, provider: &str) -> Result<Vec<HistoryEntry>, ClientError> {
        self.json(Method::GET, &format!("providers/{provider}/history"), None)
            .await
    }

    pub async fn report(&self, report: &ExecutionReport) -> Result<ExecutionReport, ClientError> {
        let body = serde_json::to_vec(report).expect("reports serialize");
        self.json(
            Method::POST,
            &format!("providers/{}/reports", report.provider),
            Some(body),
        )
        .await
    }

    pub async fn summary(&self, provider: &str) -> Result<ReportSummary, ClientError> {
        self.json(
            Method::GET,
            &format!("providers/{provider}/reports/summary"),
            None,
        )
        .await
    }
}
