//! In-memory model of a DARPAL document.
//!
//! Every struct keeps the fields it does not know about in an `extra` map so
//! that documents written against a newer schema survive a parse/serialize
//! cycle untouched. Mandatory fields are `Option`s: a parsed document may be
//! incomplete, and it is [`crate::validate_document`] that reports what is
//! missing, with the exact document path.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// The only `$schemaVersion` this crate understands.
pub const SCHEMA_VERSION: &str = "1.0";

/// One provider's full data request process specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarpalDocument {
    #[serde(
        rename = "$schemaVersion",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub schema_version: Option<String>,
    pub meta: Meta,
    #[serde(rename = "requestParameter")]
    pub request_parameter: RequestParameter,
    #[serde(rename = "requestInterface")]
    pub request_interface: RequestInterface,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(rename = "_hash", default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestParameter {
    #[serde(rename = "timeRange", default, skip_serializing_if = "Option::is_none")]
    pub time_range: Option<TimeRange>,
    #[serde(
        rename = "dataFormat",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub data_format: Option<Vec<String>>,
    #[serde(
        rename = "mediaQuality",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub media_quality: Option<Vec<String>>,
    /// Provider-specific parameter descriptors, keyed by parameter name
    /// (for instance `categories`).
    #[serde(
        rename = "additionalProperties",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub additional_properties: Option<Map<String, Value>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl RequestParameter {
    /// Option list declared by an additional-property descriptor, if the
    /// descriptor carries one.
    pub fn extra_options(&self, name: &str) -> Option<Vec<&str>> {
        let descriptor = self.additional_properties.as_ref()?.get(name)?;
        let options = descriptor.get("options")?.as_array()?;
        Some(options.iter().filter_map(Value::as_str).collect())
    }

    pub fn declares_extra(&self, name: &str) -> bool {
        self.additional_properties
            .as_ref()
            .is_some_and(|props| props.contains_key(name))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    #[serde(rename = "allTime", default, skip_serializing_if = "Option::is_none")]
    pub all_time: Option<bool>,
    #[serde(
        rename = "customRange",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub custom_range: Option<bool>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestInterface {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual: Option<ManualInterface>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub webinterface: Option<WebInterface>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api: Option<ApiInterface>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Authentication means accepted by an interface, e.g. `password`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthenticationSpec {
    pub methods: Vec<String>,
}

/// Identifiers with a known meaning. Others are accepted with a warning.
pub const RECOMMENDED_AUTHENTICATION: &[&str] = &[
    "password",
    "id-card",
    "email-verification",
    "account-login",
    "none",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManualInterface {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub email: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authentication: Option<AuthenticationSpec>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WebInterface {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<bool>,
    #[serde(rename = "startUrl", default, skip_serializing_if = "Option::is_none")]
    pub start_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authentication: Option<AuthenticationSpec>,
    #[serde(
        rename = "workflowContainer",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub workflow_container: Option<WorkflowContainer>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApiInterface {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Legacy spelling of `endpoint`. Accepted, reported as a warning.
    #[serde(
        rename = "endpointUrl",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authentication: Option<AuthenticationSpec>,
    #[serde(
        rename = "apiParameters",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub api_parameters: Option<Value>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ApiInterface {
    /// The endpoint, whichever spelling the document used.
    pub fn endpoint(&self) -> Option<&str> {
        self.endpoint.as_deref().or(self.endpoint_url.as_deref())
    }
}

/// Engine-tagged automation steps. The blocks stay opaque JSON objects at
/// this layer; [`crate::workflow`] gives them meaning for `dara-engine/1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowContainer {
    #[serde(rename = "automationEngine", default)]
    pub automation_engine: String,
    #[serde(default)]
    pub workflow: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl DarpalDocument {
    /// A structurally complete document with every branch unavailable and
    /// no hash yet.
    pub fn minimal(name: &str, version: &str) -> Self {
        DarpalDocument {
            schema_version: Some(SCHEMA_VERSION.to_string()),
            meta: Meta {
                name: Some(name.to_string()),
                version: Some(version.to_string()),
                hash: None,
                extra: Map::new(),
            },
            request_parameter: RequestParameter {
                time_range: Some(TimeRange {
                    all_time: Some(true),
                    custom_range: Some(false),
                    extra: Map::new(),
                }),
                data_format: Some(vec!["json".to_string()]),
                ..Default::default()
            },
            request_interface: RequestInterface {
                manual: Some(ManualInterface {
                    available: Some(false),
                    ..Default::default()
                }),
                webinterface: Some(WebInterface {
                    available: Some(false),
                    ..Default::default()
                }),
                api: Some(ApiInterface {
                    available: Some(false),
                    ..Default::default()
                }),
                extra: Map::new(),
            },
            extra: Map::new(),
        }
    }

    pub fn name(&self) -> Option<&str> {
        self.meta.name.as_deref()
    }

    /// Normalized provider key derived from `meta.name`.
    pub fn provider(&self) -> Option<String> {
        self.name().map(normalize_provider_name)
    }

    pub fn web_interface(&self) -> Option<&WebInterface> {
        self.request_interface.webinterface.as_ref()
    }

    pub fn workflow_container(&self) -> Option<&WorkflowContainer> {
        self.web_interface()?.workflow_container.as_ref()
    }

    /// Pretty-printed JSON, the on-disk `.darpal.json` form.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }
}

/// Lowercase-kebab form of a provider name: `"Google Takeout"` becomes
/// `"google-takeout"`.
pub fn normalize_provider_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_dash = false;
    for ch in name.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.push(ch);
        } else {
            pending_dash = true;
        }
    }
    out
}

/// `true` for non-empty strings of lowercase ASCII letters and digits
/// separated by single dashes.
pub fn is_lowercase_kebab(s: &str) -> bool {
    !s.is_empty()
        && s.split('-').all(|part| {
            !part.is_empty()
                && part
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_names_normalize_to_kebab() {
        assert_eq!(normalize_provider_name("Google"), "google");
        assert_eq!(normalize_provider_name("Google Takeout"), "google-takeout");
        assert_eq!(normalize_provider_name("  LinkedIn  "), "linkedin");
        assert_eq!(
            normalize_provider_name("Deutsche Bahn (DB)"),
            "deutsche-bahn-db"
        );
        assert!(is_lowercase_kebab(&normalize_provider_name(
            "Sandbox: Happy Path"
        )));
    }

    #[test]
    fn kebab_check() {
        assert!(is_lowercase_kebab("id-card"));
        assert!(is_lowercase_kebab("password"));
        assert!(!is_lowercase_kebab("ID-card"));
        assert!(!is_lowercase_kebab("id--card"));
        assert!(!is_lowercase_kebab("-id"));
        assert!(!is_lowercase_kebab(""));
    }

    #[test]
    fn endpoint_alias_is_read_through() {
        let api = ApiInterface {
            endpoint_url: Some("https://api.example.com".into()),
            ..Default::default()
        };
        assert_eq!(api.endpoint(), Some("https://api.example.com"));
    }
}
