//! Live execution of a bound workflow over a WebDriver session.

use std::time::{Duration, Instant};

use dara_core::workflow::{BlockKind, BoundWorkflow, SelectorStrategy, SignalKind, WorkflowBlock};
use uuid::Uuid;

use crate::result::{End, ExecutionResult, Outcome, Recorder};
use crate::signal::SignalSink;
use crate::webdriver::{xpath_literal, DriverError, ElementId, Session, Strategy};

/// Submit controls of a form, relative to the form element.
pub const SUBMIT_CONTROLS: &str = ".//*[(self::button and (not(@type) or @type='submit')) \
     or (self::input and (@type='submit' or @type='image'))]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Ok,
    MissingElement(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("browser session lost: {0}")]
    SessionLost(String),
    #[error("navigation to {url} failed: {detail}")]
    NavigationFailed { url: String, detail: String },
    #[error("protocol error: {0}")]
    ProtocolError(String),
}

fn lift(e: DriverError) -> Result<StepOutcome, EngineError> {
    if e.is_session_lost() {
        return Err(EngineError::SessionLost(e.to_string()));
    }
    match e {
        DriverError::Protocol(m) => Err(EngineError::ProtocolError(m)),
        DriverError::Unreachable(m) => Err(EngineError::SessionLost(m)),
        DriverError::Command { code, message } => {
            Ok(StepOutcome::Failed(format!("{code}: {message}")))
        }
    }
}

/// Maps a failed page load. Timeouts are left for a human to look at; any
/// other failure is an error.
fn navigation(url: &str, e: DriverError) -> Result<StepOutcome, EngineError> {
    match e.code() {
        Some("timeout") => Ok(StepOutcome::Failed(format!("loading {url} timed out"))),
        Some(_) => Err(EngineError::NavigationFailed {
            url: url.to_string(),
            detail: e.to_string(),
        }),
        None => lift(e),
    }
}

macro_rules! driver {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return lift(err),
        }
    };
}

fn strategy(block: &WorkflowBlock) -> Option<(Strategy, &str)> {
    block.selector.as_ref().map(|s| {
        let strategy = match s.strategy {
            SelectorStrategy::Xpath => Strategy::XPath,
            SelectorStrategy::Css => Strategy::Css,
        };
        (strategy, s.expression.as_str())
    })
}

fn element_timeout(session: &Session, block: &WorkflowBlock) -> Duration {
    Duration::from_millis(block.timeout_ms.unwrap_or(session.element_timeout_ms))
}

async fn resolve(
    session: &Session,
    block: &WorkflowBlock,
    timeout: Duration,
) -> Result<Option<ElementId>, DriverError> {
    let Some((strategy, expr)) = strategy(block) else {
        return Ok(None);
    };
    session.wait_for(strategy, expr, None, timeout).await
}

fn missing(block: &WorkflowBlock, timeout: Duration) -> StepOutcome {
    let selector = block
        .selector
        .as_ref()
        .map(ToString::to_string)
        .unwrap_or_default();
    StepOutcome::MissingElement(format!(
        "{selector} not found within {} ms",
        timeout.as_millis()
    ))
}

/// Performs one block's effect. Control flow (signals, branching) is left
/// to the caller; for branch-on-element, `MissingElement` means "take the
/// branch".
pub async fn step(session: &Session, block: &WorkflowBlock) -> Result<StepOutcome, EngineError> {
    match block.kind {
        BlockKind::Navigate => {
            let url = block.url.as_deref().unwrap_or_default();
            match session.navigate(url).await {
                Ok(()) => Ok(StepOutcome::Ok),
                Err(e) => navigation(url, e),
            }
        }
        BlockKind::WaitForElement => {
            let timeout = element_timeout(session, block);
            Ok(match driver!(resolve(session, block, timeout).await) {
                Some(_) => StepOutcome::Ok,
                None => missing(block, timeout),
            })
        }
        BlockKind::BranchOnElement => {
            let timeout = Duration::from_millis(block.timeout_ms.unwrap_or(0));
            Ok(match driver!(resolve(session, block, timeout).await) {
                Some(_) => StepOutcome::Ok,
                None => missing(block, timeout),
            })
        }
        BlockKind::Click => {
            let timeout = element_timeout(session, block);
            let Some(el) = driver!(resolve(session, block, timeout).await) else {
                return Ok(missing(block, timeout));
            };
            match session.click(&el).await {
                Ok(()) => Ok(StepOutcome::Ok),
                Err(e) if e.code() == Some("timeout") => Ok(StepOutcome::Failed(e.to_string())),
                Err(e) => lift(e),
            }
        }
        BlockKind::FillField => {
            let timeout = element_timeout(session, block);
            let Some(el) = driver!(resolve(session, block, timeout).await) else {
                return Ok(missing(block, timeout));
            };
            let value = block.value.as_deref().unwrap_or_default();
            driver!(session.clear(&el).await);
            driver!(session.send_keys(&el, value).await);
            Ok(StepOutcome::Ok)
        }
        BlockKind::SelectOption => {
            let timeout = element_timeout(session, block);
            let Some(select) = driver!(resolve(session, block, timeout).await) else {
                return Ok(missing(block, timeout));
            };
            let value = block.value.as_deref().unwrap_or_default();
            let lit = xpath_literal(value);
            let options = driver!(
                session
                    .find_elements(
                        Strategy::XPath,
                        &format!(".//option[@value={lit} or normalize-space(.)={lit}]"),
                        Some(&select),
                    )
                    .await
            );
            let Some(option) = options.into_iter().next() else {
                return Ok(StepOutcome::Failed(format!("no option {value:?}")));
            };
            driver!(session.click(&option).await);
            Ok(StepOutcome::Ok)
        }
        BlockKind::Submit => {
            let timeout = element_timeout(session, block);
            let form = match strategy(block) {
                Some(_) => {
                    let Some(el) = driver!(resolve(session, block, timeout).await) else {
                        return Ok(missing(block, timeout));
                    };
                    driver!(
                        session
                            .find_elements(Strategy::XPath, "ancestor-or-self::form[1]", Some(&el))
                            .await
                    )
                    .into_iter()
                    .next()
                }
                None => driver!(
                    session
                        .wait_for(Strategy::XPath, "//form", None, timeout)
                        .await
                ),
            };
            let Some(form) = form else {
                return Ok(StepOutcome::MissingElement("no form to submit".into()));
            };
            let Some(control) = driver!(
                session
                    .wait_for(Strategy::XPath, SUBMIT_CONTROLS, Some(&form), timeout)
                    .await
            ) else {
                return Ok(StepOutcome::MissingElement(format!(
                    "form has no submit control within {} ms",
                    timeout.as_millis()
                )));
            };
            match session.click(&control).await {
                Ok(()) => Ok(StepOutcome::Ok),
                Err(e) if e.code() == Some("timeout") => Ok(StepOutcome::Failed(e.to_string())),
                Err(e) => lift(e),
            }
        }
        BlockKind::AssertUrl => {
            let expected = block.url.as_deref().unwrap_or_default();
            let current = driver!(session.current_url().await);
            Ok(if current.starts_with(expected) {
                StepOutcome::Ok
            } else {
                StepOutcome::Failed(format!("at {current}, expected {expected}"))
            })
        }
        BlockKind::Delay => {
            tokio::time::sleep(Duration::from_millis(block.timeout_ms.unwrap_or(0))).await;
            Ok(StepOutcome::Ok)
        }
        BlockKind::EmitSignal => Ok(StepOutcome::Ok),
    }
}

/// Index of the block whose success confirms the start page is the
/// expected one (not a login portal).
pub fn gate_index(blocks: &[WorkflowBlock]) -> Option<usize> {
    blocks
        .iter()
        .position(|b| matches!(b.kind, BlockKind::AssertUrl | BlockKind::WaitForElement))
}

/// Runs `workflow` in a new tab of `session`.
///
/// On success the tab is closed and the previous one is current again. When
/// a run stops for interaction or an error the tab stays open and current.
pub async fn execute(
    workflow: &BoundWorkflow,
    session: &mut Session,
    sink: &dyn SignalSink,
) -> ExecutionResult {
    let clock = Instant::now();
    let mut rec = Recorder::new(Uuid::new_v4().to_string(), sink, chrono::Utc::now);
    let ceiling = Duration::from_millis(session.run_ceiling_ms);
    let current = std::sync::Mutex::new(None::<String>);
    let end =
        match tokio::time::timeout(ceiling, drive(workflow, session, &mut rec, &current)).await {
            Ok(end) => end,
            Err(_) => End::new(
                Outcome::InteractionRequired,
                current.lock().expect("poisoned").as_deref(),
                format!("run exceeded {} ms", ceiling.as_millis()),
            ),
        };
    tracing::info!(provider = %workflow.provider, outcome = %end.outcome, "run finished");
    rec.finish(end, &workflow.provider, clock.elapsed().as_millis() as u64)
}

async fn drive(
    workflow: &BoundWorkflow,
    session: &Session,
    rec: &mut Recorder<'_>,
    current: &std::sync::Mutex<Option<String>>,
) -> End {
    let fatal =
        |e: EngineError, block: Option<&str>| End::new(Outcome::Error, block, e.to_string());
    let setup = async {
        let original = session.window_handle().await?;
        let tab = session.new_tab().await?;
        session.switch_to(&tab).await?;
        Ok::<_, DriverError>(original)
    };
    let original = match setup.await {
        Ok(h) => h,
        Err(e) => {
            let e = lift(e)
                .err()
                .unwrap_or_else(|| EngineError::ProtocolError("cannot open a tab".into()));
            return fatal(e, None);
        }
    };

    match session.navigate(&workflow.start_url).await {
        Ok(()) => {}
        Err(e) => {
            return match navigation(&workflow.start_url, e) {
                Ok(StepOutcome::Failed(d) | StepOutcome::MissingElement(d)) => {
                    End::new(Outcome::InteractionRequired, None, d)
                }
                Ok(StepOutcome::Ok) => unreachable!("navigation errors never map to Ok"),
                Err(e) => fatal(e, None),
            }
        }
    }

    let blocks = &workflow.blocks;
    let gate = gate_index(blocks);
    if gate.is_none() {
        rec.start(None, "start page loaded");
    }
    let mut i = 0;
    while i < blocks.len() {
        let block = &blocks[i];
        *current.lock().expect("poisoned") = Some(block.id.clone());
        rec.trace.push(block.id.clone());
        if block.kind == BlockKind::EmitSignal {
            match block.signal_kind() {
                Some(SignalKind::StartedExecution) => {
                    rec.start(Some(&block.id), "emitted by workflow")
                }
                Some(kind) => {
                    let outcome = Outcome::from_signal(kind).expect("terminal kind");
                    if outcome == Outcome::Success {
                        close_tab(session, &original).await;
                    }
                    return End::new(outcome, Some(&block.id), "emitted by workflow");
                }
                None => {}
            }
            i += 1;
            continue;
        }
        match step(session, block).await {
            Ok(StepOutcome::Ok) => {
                if Some(i) == gate {
                    rec.start(Some(&block.id), "start page confirmed");
                }
                i += 1;
            }
            Ok(StepOutcome::MissingElement(_)) if block.kind == BlockKind::BranchOnElement => {
                let target = block.on_missing.as_deref().unwrap_or_default();
                match blocks.iter().position(|b| b.id == target) {
                    Some(j) => i = j,
                    None => {
                        return End::new(
                            Outcome::Error,
                            Some(&block.id),
                            format!("no block {target:?}"),
                        )
                    }
                }
            }
            Ok(StepOutcome::MissingElement(d) | StepOutcome::Failed(d)) => {
                return End::new(Outcome::InteractionRequired, Some(&block.id), d)
            }
            Err(e) => return fatal(e, Some(&block.id)),
        }
    }
    close_tab(session, &original).await;
    rec.start(None, "workflow completed");
    End::new(Outcome::Success, None, "workflow completed")
}

async fn close_tab(session: &Session, original: &str) {
    let closed = async {
        session.close_window().await?;
        session.switch_to(original).await
    };
    if let Err(e) = closed.await {
        tracing::warn!("could not close the run's tab: {e}");
    }
}
