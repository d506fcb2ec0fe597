use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.path, self.severity, self.message)
    }
}

/// Outcome of a validation pass. `valid` is kept in sync with the findings:
/// it is false exactly when some finding has error severity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub findings: Vec<Finding>,
}

impl Default for ValidationReport {
    fn default() -> Self {
        ValidationReport {
            valid: true,
            findings: Vec::new(),
        }
    }
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, path.into(), message.into());
    }

    pub fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, path.into(), message.into());
    }

    fn push(&mut self, severity: Severity, path: String, message: String) {
        if severity == Severity::Error {
            self.valid = false;
        }
        self.findings.push(Finding {
            path,
            severity,
            message,
        });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    pub fn has_error_at(&self, path: &str) -> bool {
        self.errors().any(|f| f.path == path)
    }

    /// Appends `other`, prefixing each of its paths with `prefix.`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: ValidationReport) {
        for finding in other.findings {
            let path = if prefix.is_empty() {
                finding.path
            } else if finding.path.is_empty() {
                prefix.to_string()
            } else {
                format!("{prefix}.{}", finding.path)
            };
            self.push(finding.severity, path, finding.message);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_tracks_error_findings() {
        let mut report = ValidationReport::new();
        report.warning("a", "just a warning");
        assert!(report.valid);
        report.error("b", "broken");
        assert!(!report.valid);
        assert_eq!(report.errors().count(), 1);
        assert_eq!(report.findings[1].to_string(), "b: error: broken");
    }

    #[test]
    fn merge_prefixes_paths() {
        let mut inner = ValidationReport::new();
        inner.error("workflow[0].id", "empty id");
        let mut outer = ValidationReport::new();
        outer.merge_prefixed("requestInterface.webinterface.workflowContainer", inner);
        assert!(
            outer.has_error_at("requestInterface.webinterface.workflowContainer.workflow[0].id")
        );
        assert!(!outer.valid);
    }
}
