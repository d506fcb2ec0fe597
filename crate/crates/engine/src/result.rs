use chrono::{DateTime, Utc};
use dara_core::workflow::SignalKind;
use serde::{Deserialize, Serialize};

use crate::signal::{ExecutionSignal, SignalSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    InteractionRequired,
    Error,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        self.signal().as_str()
    }

    pub fn signal(self) -> SignalKind {
        match self {
            Outcome::Success => SignalKind::Success,
            Outcome::InteractionRequired => SignalKind::InteractionRequired,
            Outcome::Error => SignalKind::Error,
        }
    }

    pub fn from_signal(kind: SignalKind) -> Option<Outcome> {
        match kind {
            SignalKind::StartedExecution => None,
            SignalKind::Success => Some(Outcome::Success),
            SignalKind::InteractionRequired => Some(Outcome::InteractionRequired),
            SignalKind::Error => Some(Outcome::Error),
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "success" => Ok(Outcome::Success),
            "interaction-required" => Ok(Outcome::InteractionRequired),
            "error" => Ok(Outcome::Error),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    #[serde(rename = "runId")]
    pub run_id: String,
    pub provider: String,
    pub outcome: Outcome,
    #[serde(rename = "failedBlock")]
    pub failed_block: Option<String>,
    pub signals: Vec<ExecutionSignal>,
    /// Ids of the blocks visited, in order, including the block a run
    /// stopped at.
    pub trace: Vec<String>,
    #[serde(rename = "durationMs")]
    pub duration_ms: u64,
}

impl ExecutionResult {
    /// The part of a result two executions of the same workflow on the same
    /// pages must agree on.
    pub fn triple(&self) -> (Outcome, Option<String>, Vec<String>) {
        (self.outcome, self.failed_block.clone(), self.trace.clone())
    }

    pub fn signal_kinds(&self) -> Vec<SignalKind> {
        self.signals.iter().map(|s| s.kind).collect()
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct End {
    pub outcome: Outcome,
    pub block: Option<String>,
    pub detail: String,
}

impl End {
    pub fn new(outcome: Outcome, block: Option<&str>, detail: impl Into<String>) -> Self {
        End {
            outcome,
            block: block.map(str::to_string),
            detail: detail.into(),
        }
    }
}

/// Signal bookkeeping for one run: forwards to the sink, keeps a copy, and
/// guarantees started-execution is sent at most once and timestamps never
/// go backwards.
pub(crate) struct Recorder<'a> {
    pub run_id: String,
    sink: &'a dyn SignalSink,
    clock: Box<dyn FnMut() -> DateTime<Utc> + Send + 'a>,
    last: Option<DateTime<Utc>>,
    pub signals: Vec<ExecutionSignal>,
    pub started: bool,
    pub trace: Vec<String>,
}

impl<'a> Recorder<'a> {
    pub fn new(
        run_id: String,
        sink: &'a dyn SignalSink,
        clock: impl FnMut() -> DateTime<Utc> + Send + 'a,
    ) -> Self {
        Recorder {
            run_id,
            sink,
            clock: Box::new(clock),
            last: None,
            signals: Vec::new(),
            started: false,
            trace: Vec::new(),
        }
    }

    fn emit(&mut self, kind: SignalKind, block: Option<&str>, detail: &str) {
        let mut now = (self.clock)();
        if let Some(last) = self.last {
            now = now.max(last);
        }
        self.last = Some(now);
        let signal = ExecutionSignal {
            run_id: self.run_id.clone(),
            kind,
            block_id: block.map(str::to_string),
            timestamp: now,
            detail: detail.to_string(),
        };
        self.sink.emit(&signal);
        self.signals.push(signal);
    }

    pub fn start(&mut self, block: Option<&str>, detail: &str) {
        if !self.started {
            self.started = true;
            self.emit(SignalKind::StartedExecution, block, detail);
        }
    }

    pub fn finish(mut self, end: End, provider: &str, duration_ms: u64) -> ExecutionResult {
        self.emit(end.outcome.signal(), end.block.as_deref(), &end.detail);
        ExecutionResult {
            run_id: self.run_id,
            provider: provider.to_string(),
            outcome: end.outcome,
            failed_block: end.block.filter(|_| end.outcome != Outcome::Success),
            signals: self.signals,
            trace: self.trace,
            duration_ms,
        }
    }
}
