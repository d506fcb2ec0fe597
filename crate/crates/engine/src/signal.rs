//! Lifecycle signals and the sinks that receive them.

use std::io::Write;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use dara_core::workflow::SignalKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSignal {
    #[serde(rename = "runId")]
    pub run_id: String,
    pub kind: SignalKind,
    #[serde(rename = "blockId", default, skip_serializing_if = "Option::is_none")]
    pub block_id: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub detail: String,
}

/// Receives signals, possibly from several concurrent runs.
pub trait SignalSink: Send + Sync {
    fn emit(&self, signal: &ExecutionSignal);
}

impl<F> SignalSink for F
where
    F: Fn(&ExecutionSignal) + Send + Sync,
{
    fn emit(&self, signal: &ExecutionSignal) {
        self(signal)
    }
}

/// Discards every signal.
pub struct NullSink;

impl SignalSink for NullSink {
    fn emit(&self, _: &ExecutionSignal) {}
}

/// Keeps every signal in arrival order.
#[derive(Default)]
pub struct CollectingSink {
    signals: Mutex<Vec<ExecutionSignal>>,
}

impl CollectingSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn signals(&self) -> Vec<ExecutionSignal> {
        self.signals.lock().expect("sink poisoned").clone()
    }
}

impl SignalSink for CollectingSink {
    fn emit(&self, signal: &ExecutionSignal) {
        self.signals
            .lock()
            .expect("sink poisoned")
            .push(signal.clone());
    }
}

/// Writes one JSON object per line and flushes after each.
pub struct NdjsonSink<W: Write + Send> {
    out: Mutex<W>,
    pretty: bool,
}

impl<W: Write + Send> NdjsonSink<W> {
    pub fn new(out: W) -> Self {
        NdjsonSink {
            out: Mutex::new(out),
            pretty: false,
        }
    }

    /// Human-readable lines instead of JSON.
    pub fn pretty(out: W) -> Self {
        NdjsonSink {
            out: Mutex::new(out),
            pretty: true,
        }
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().expect("sink poisoned")
    }
}

impl<W: Write + Send> SignalSink for NdjsonSink<W> {
    fn emit(&self, signal: &ExecutionSignal) {
        let line = if self.pretty {
            let block = signal
                .block_id
                .as_deref()
                .map(|b| format!(" [{b}]"))
                .unwrap_or_default();
            format!(
                "{} {:<20}{} {}",
                signal.timestamp.format("%H:%M:%S%.3f"),
                signal.kind.as_str(),
                block,
                signal.detail
            )
        } else {
            serde_json::to_string(signal).expect("signals serialize")
        };
        let mut out = self.out.lock().expect("sink poisoned");
        // A closed stdout must not abort the run.
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    }
}

/// Forwards to several sinks in order.
pub struct FanOut<'a>(pub Vec<&'a dyn SignalSink>);

impl SignalSink for FanOut<'_> {
    fn emit(&self, signal: &ExecutionSignal) {
        for sink in &self.0 {
            sink.emit(signal);
        }
    }
}

/// Checks a signal sequence against `started-execution? terminal` with
/// exactly one terminal signal at the end.
pub fn is_well_formed(kinds: &[SignalKind]) -> bool {
    match kinds {
        [last] => last.is_terminal(),
        [SignalKind::StartedExecution, last] => last.is_terminal(),
        _ => false,
    }
}
