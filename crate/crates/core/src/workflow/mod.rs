//! Block vocabulary of the `dara-engine/1` automation engine.
//!
//! A workflow is a linear list of blocks executed in order. The only control
//! flow is `branch-on-element`, which jumps forward to `onMissing` when its
//! element is absent.

mod bind;
mod template;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use bind::{bind_parameters, BindError, BoundWorkflow, ParameterSelection, TimeRangeSelection};
pub use template::{ParamPath, Segment, Template, TemplateError};
pub use validate::validate_workflow;

pub const DARA_ENGINE: &str = "dara-engine/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Navigate,
    WaitForElement,
    Click,
    FillField,
    SelectOption,
    Submit,
    AssertUrl,
    EmitSignal,
    Delay,
    BranchOnElement,
}

impl BlockKind {
    pub fn requires_selector(self) -> bool {
        matches!(
            self,
            BlockKind::WaitForElement
                | BlockKind::Click
                | BlockKind::FillField
                | BlockKind::SelectOption
                | BlockKind::BranchOnElement
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Navigate => "navigate",
            BlockKind::WaitForElement => "wait-for-element",
            BlockKind::Click => "click",
            BlockKind::FillField => "fill-field",
            BlockKind::SelectOption => "select-option",
            BlockKind::Submit => "submit",
            BlockKind::AssertUrl => "assert-url",
            BlockKind::EmitSignal => "emit-signal",
            BlockKind::Delay => "delay",
            BlockKind::BranchOnElement => "branch-on-element",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorStrategy {
    #[default]
    Xpath,
    Css,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selector {
    #[serde(default)]
    pub strategy: SelectorStrategy,
    pub expression: String,
}

impl Selector {
    pub fn xpath(expression: impl Into<String>) -> Self {
        Selector {
            strategy: SelectorStrategy::Xpath,
            expression: expression.into(),
        }
    }

    pub fn css(expression: impl Into<String>) -> Self {
        Selector {
            strategy: SelectorStrategy::Css,
            expression: expression.into(),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strategy {
            SelectorStrategy::Xpath => write!(f, "xpath:{}", self.expression),
            SelectorStrategy::Css => write!(f, "css:{}", self.expression),
        }
    }
}

/// Lifecycle signal kinds. The last three are terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    StartedExecution,
    Success,
    InteractionRequired,
    Error,
}

impl SignalKind {
    pub fn is_terminal(self) -> bool {
        !matches!(self, SignalKind::StartedExecution)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::StartedExecution => "started-execution",
            SignalKind::Success => "success",
            SignalKind::InteractionRequired => "interaction-required",
            SignalKind::Error => "error",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "started-execution" => Ok(SignalKind::StartedExecution),
            "success" => Ok(SignalKind::Success),
            "interaction-required" => Ok(SignalKind::InteractionRequired),
            "error" => Ok(SignalKind::Error),
            other => Err(format!("unknown signal {other:?}")),
        }
    }
}

/// One automation step.
///
/// `timeoutMs` is the element/page wait for blocks that wait, and the sleep
/// length for `delay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowBlock {
    pub id: String,
    pub kind: BlockKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(rename = "timeoutMs", default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(rename = "onMissing", default, skip_serializing_if = "Option::is_none")]
    pub on_missing: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl WorkflowBlock {
    pub fn new(id: impl Into<String>, kind: BlockKind) -> Self {
        WorkflowBlock {
            id: id.into(),
            kind,
            selector: None,
            value: None,
            signal: None,
            url: None,
            timeout_ms: None,
            on_missing: None,
            extra: Map::new(),
        }
    }

    pub fn with_selector(mut self, selector: Selector) -> Self {
        self.selector = Some(selector);
        self
    }

    pub fn with_value(mut self, value: impl Into<String>) -> Self {
        self.value = Some(value.into());
        self
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = Some(url.into());
        self
    }

    pub fn with_signal(mut self, signal: SignalKind) -> Self {
        self.signal = Some(signal.as_str().to_string());
        self
    }

    pub fn with_timeout(mut self, ms: u64) -> Self {
        self.timeout_ms = Some(ms);
        self
    }

    pub fn with_on_missing(mut self, id: impl Into<String>) -> Self {
        self.on_missing = Some(id.into());
        self
    }

    pub fn from_value(value: &Value) -> Result<Self, String> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                e.inner().to_string()
            } else {
                format!("{path}: {}", e.inner())
            }
        })
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("blocks serialize")
    }

    /// Parsed signal name of an `emit-signal` block.
    pub fn signal_kind(&self) -> Option<SignalKind> {
        self.signal.as_deref().and_then(|s| s.parse().ok())
    }
}

/// Deserializes every block of a container, failing on the first malformed
/// one. Use [`validate_workflow`] for a full report.
pub fn parse_blocks(workflow: &[Value]) -> Result<Vec<WorkflowBlock>, String> {
    workflow
        .iter()
        .enumerate()
        .map(|(i, v)| WorkflowBlock::from_value(v).map_err(|e| format!("workflow[{i}]: {e}")))
        .collect()
}
