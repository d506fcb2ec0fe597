use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Text,
    Select,
    Checkbox,
}

/// One control of the request form. The id doubles as the submitted name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormField {
    #[serde(rename = "fieldId")]
    pub field_id: String,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

impl FormField {
    pub fn text(id: &str) -> Self {
        FormField {
            field_id: id.into(),
            kind: FieldKind::Text,
            options: Vec::new(),
        }
    }

    pub fn select(id: &str, options: &[&str]) -> Self {
        FormField {
            field_id: id.into(),
            kind: FieldKind::Select,
            options: options.iter().map(|o| o.to_string()).collect(),
        }
    }

    pub fn checkbox(id: &str) -> Self {
        FormField {
            field_id: id.into(),
            kind: FieldKind::Checkbox,
            options: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FailureMode {
    None,
    /// The form never offers a submit control.
    Captcha,
    /// Form element ids change from the second serve on.
    DomDrift,
    /// Every page answers after a fixed delay.
    Slow {
        #[serde(rename = "latencyMs")]
        latency_ms: u64,
    },
    /// The start page redirects in a cycle.
    RedirectLoop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(rename = "requiresLogin")]
    pub requires_login: bool,
    #[serde(rename = "formFields")]
    pub form_fields: Vec<FormField>,
    #[serde(rename = "failureMode")]
    pub failure: FailureMode,
}

pub const DATA_FORMATS: [&str; 3] = ["json", "csv", "html"];

/// Built-in latency of the `slow` scenario.
pub const DEFAULT_SLOW_MS: u64 = 400;

pub const BUILTIN: [&str; 6] = [
    "happy-path",
    "captcha",
    "dom-drift",
    "slow",
    "redirect-loop",
    "login-required",
];

impl Scenario {
    /// The standard form: time range, optional custom dates, data format.
    pub fn standard_fields() -> Vec<FormField> {
        vec![
            FormField::select("timeRange", &["all-time", "custom"]),
            FormField::text("rangeStart"),
            FormField::text("rangeEnd"),
            FormField::select("dataFormat", &DATA_FORMATS),
        ]
    }

    pub fn new(name: &str, failure: FailureMode) -> Self {
        Scenario {
            name: name.into(),
            requires_login: false,
            form_fields: Self::standard_fields(),
            failure,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        Some(match name {
            "happy-path" => Scenario::new(name, FailureMode::None),
            "captcha" => Scenario::new(name, FailureMode::Captcha),
            "dom-drift" => Scenario::new(name, FailureMode::DomDrift),
            "slow" => Scenario::new(
                name,
                FailureMode::Slow {
                    latency_ms: DEFAULT_SLOW_MS,
                },
            ),
            "redirect-loop" => Scenario::new(name, FailureMode::RedirectLoop),
            "login-required" => Scenario {
                requires_login: true,
                ..Scenario::new(name, FailureMode::None)
            },
            _ => return None,
        })
    }

    pub fn all_builtin() -> Vec<Self> {
        BUILTIN
            .iter()
            .filter_map(|n| Scenario::builtin(n))
            .collect()
    }

    pub fn latency_ms(&self) -> u64 {
        match self.failure {
            FailureMode::Slow { latency_ms } => latency_ms,
            _ => 0,
        }
    }

    pub fn formats(&self) -> Vec<String> {
        self.form_fields
            .iter()
            .find(|f| f.field_id == "dataFormat")
            .map(|f| f.options.clone())
            .unwrap_or_default()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Parses a scenario flag: a built-in name, `slow:MS`, or `NAME=BUILTIN`
/// to serve a built-in under another path segment.
impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (alias, spec) = match s.split_once('=') {
            Some((a, b)) => (Some(a), b),
            None => (None, s),
        };
        let mut scenario = match spec.split_once(':') {
            Some(("slow", ms)) => {
                let latency_ms = ms.parse().map_err(|e| format!("bad latency {ms:?}: {e}"))?;
                Scenario::new("slow", FailureMode::Slow { latency_ms })
            }
            Some((other, _)) => return Err(format!("{other:?} takes no argument")),
            None => Scenario::builtin(spec).ok_or_else(|| {
                format!("unknown scenario {spec:?}; known: {}", BUILTIN.join(", "))
            })?,
        };
        if let Some(alias) = alias {
            let ok = !alias.is_empty()
                && !alias.starts_with("__")
                && alias
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(format!("bad scenario name {alias:?}"));
            }
            scenario.name = alias.into();
        }
        Ok(scenario)
    }
}
