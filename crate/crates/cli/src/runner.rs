//! The run pipeline shared by `dara run` and the engine bridge: fetch,
//! verify, bind, open a session, execute, report.

use std::collections::BTreeMap;

use dara_core::verify_hash;
use dara_core::workflow::{
    bind_parameters, BoundWorkflow, ParameterSelection, SignalKind, TimeRangeSelection,
};
use dara_core::DarpalDocument;
use dara_engine::{
    execute, DriverError, ExecutionResult, ExecutionSignal, Outcome, Session, SignalSink,
    WebDriver, DEFAULT_ELEMENT_TIMEOUT_MS, DEFAULT_PAGE_TIMEOUT_MS, DEFAULT_RUN_CEILING_MS,
};
use dara_repository::{ClientError, ExecutionReport, RepoClient, ReportOutcome};
use url::Url;

use crate::exit::Exit;

/// Value of `engineVersion` in posted reports.
pub fn engine_version() -> String {
    format!("dara-engine/{}", env!("CARGO_PKG_VERSION"))
}

/// The user's choices; unset ones fall back to the document.
#[derive(Debug, Clone, Default)]
pub struct Selections {
    pub time_range: Option<TimeRangeSelection>,
    pub data_format: Option<String>,
    pub media_quality: Option<String>,
    pub extras: BTreeMap<String, Vec<String>>,
}

impl Selections {
    /// Without a choice the time range is all-time and the format is the
    /// first one the provider lists.
    pub fn resolve(&self, doc: &DarpalDocument) -> ParameterSelection {
        let format = self.data_format.clone().unwrap_or_else(|| {
            doc.request_parameter
                .data_format
                .as_ref()
                .and_then(|f| f.first().cloned())
                .unwrap_or_default()
        });
        let mut sel = ParameterSelection::new(
            self.time_range
                .clone()
                .unwrap_or(TimeRangeSelection::AllTime),
            format,
        );
        sel.media_quality = self.media_quality.clone();
        sel.extras = self.extras.clone();
        sel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeouts {
    pub page_ms: u64,
    pub element_ms: u64,
    pub ceiling_ms: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            page_ms: DEFAULT_PAGE_TIMEOUT_MS,
            element_ms: DEFAULT_ELEMENT_TIMEOUT_MS,
            ceiling_ms: DEFAULT_RUN_CEILING_MS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub provider: String,
    pub selections: Selections,
    /// Set on the start page's origin before the run, for sessions that
    /// must already be signed in.
    pub cookies: Vec<(String, String)>,
    pub timeouts: Timeouts,
}

/// Why a run never started.
#[derive(Debug, thiserror::Error)]
pub enum RunFailure {
    #[error("{0}")]
    RepositoryUnreachable(String),
    #[error("{0}")]
    BrowserUnreachable(String),
    #[error("provider {0:?} not found in the repository")]
    NotFound(String),
    #[error("{0}")]
    Rejected(String),
    #[error("browser session: {0}")]
    Session(String),
}

impl RunFailure {
    pub fn exit(&self) -> Exit {
        match self {
            RunFailure::RepositoryUnreachable(_) => Exit::RepositoryUnreachable,
            RunFailure::BrowserUnreachable(_) => Exit::BrowserUnreachable,
            _ => Exit::Error,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            RunFailure::RepositoryUnreachable(_) => "repository-unreachable",
            RunFailure::BrowserUnreachable(_) => "browser-unreachable",
            RunFailure::NotFound(_) => "not-found",
            RunFailure::Rejected(_) => "rejected",
            RunFailure::Session(_) => "session-failed",
        }
    }
}

pub struct Prepared {
    pub workflow: BoundWorkflow,
    pub session: Session,
}

fn driver_failure(e: DriverError) -> RunFailure {
    match e {
        DriverError::Unreachable(_) => RunFailure::BrowserUnreachable(e.to_string()),
        other => RunFailure::Session(other.to_string()),
    }
}

/// Everything up to the first engine step. The repository is asked before
/// the browser, so a dead repository never opens a session.
pub async fn prepare(
    repo: &RepoClient,
    driver: &WebDriver,
    req: &RunRequest,
) -> Result<Prepared, RunFailure> {
    let doc = match repo.get(&req.provider).await {
        Ok((_, doc)) => doc,
        Err(ClientError::Unreachable { url, detail }) => {
            return Err(RunFailure::RepositoryUnreachable(format!(
                "repository unreachable at {url}: {detail}"
            )))
        }
        Err(ClientError::Api { status: 404, .. }) => {
            return Err(RunFailure::NotFound(req.provider.clone()))
        }
        Err(e) => return Err(RunFailure::Rejected(e.to_string())),
    };
    if !matches!(verify_hash(&doc), Ok(true)) {
        return Err(RunFailure::Rejected(format!(
            "document for {} fails its hash check",
            req.provider
        )));
    }
    let container = doc
        .workflow_container()
        .ok_or_else(|| RunFailure::Rejected(format!("{} has no workflow", req.provider)))?;
    let workflow = bind_parameters(container, &doc, &req.selections.resolve(&doc))
        .map_err(|e| RunFailure::Rejected(e.to_string()))?;

    driver.status().await.map_err(driver_failure)?;
    let mut session = driver
        .new_session(req.timeouts.page_ms, req.timeouts.element_ms)
        .await
        .map_err(driver_failure)?;
    session.run_ceiling_ms = req.timeouts.ceiling_ms;
    if !req.cookies.is_empty() {
        let origin = Url::parse(&workflow.start_url)
            .and_then(|u| u.join("/"))
            .map_err(|e| RunFailure::Rejected(format!("startUrl: {e}")))?;
        session
            .navigate(origin.as_str())
            .await
            .map_err(driver_failure)?;
        for (name, value) in &req.cookies {
            session
                .add_cookie(name, value)
                .await
                .map_err(driver_failure)?;
        }
    }
    Ok(Prepared { workflow, session })
}

fn report_outcome(o: Outcome) -> ReportOutcome {
    match o {
        Outcome::Success => ReportOutcome::Success,
        Outcome::InteractionRequired => ReportOutcome::InteractionRequired,
        Outcome::Error => ReportOutcome::Error,
    }
}

/// Executes and reports. A failed report post is returned as a warning; it
/// does not change the outcome.
///
/// On success the session is closed. Otherwise it stays open so the user can
/// take over in the browser.
pub async fn run_prepared(
    prepared: Prepared,
    repo: &RepoClient,
    sink: &dyn SignalSink,
) -> (ExecutionResult, Option<String>) {
    let Prepared {
        workflow,
        mut session,
    } = prepared;
    let result = execute(&workflow, &mut session, sink).await;
    if result.outcome == Outcome::Success {
        if let Err(e) = session.delete().await {
            tracing::warn!("closing session: {e}");
        }
    }
    let report = ExecutionReport {
        provider: workflow.provider.clone(),
        outcome: report_outcome(result.outcome),
        engine_version: engine_version(),
        reported_at: chrono::Utc::now(),
    };
    let warning = repo
        .report(&report)
        .await
        .err()
        .map(|e| format!("report not recorded: {e}"));
    (result, warning)
}

/// The record of a run that never started: a single error signal.
pub fn failed_result(provider: &str, detail: &str) -> ExecutionResult {
    let run_id = uuid::Uuid::new_v4().to_string();
    ExecutionResult {
        run_id: run_id.clone(),
        provider: provider.to_string(),
        outcome: Outcome::Error,
        failed_block: None,
        signals: vec![ExecutionSignal {
            run_id,
            kind: SignalKind::Error,
            block_id: None,
            timestamp: chrono::Utc::now(),
            detail: detail.to_string(),
        }],
        trace: Vec::new(),
        duration_ms: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_come_from_the_document() {
        let doc = dara_core::parse_document(dara_sandbox::FIXTURE).unwrap();
        let sel = Selections::default().resolve(&doc);
        assert_eq!(sel.time_range, TimeRangeSelection::AllTime);
        assert_eq!(sel.data_format, "json");
    }

    #[test]
    fn failed_result_is_well_formed() {
        let r = failed_result("x", "nope");
        assert!(dara_engine::is_well_formed(&r.signal_kinds()));
        assert_eq!(r.outcome, Outcome::Error);
    }
}
