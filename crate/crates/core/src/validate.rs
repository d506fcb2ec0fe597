use serde_json::Value;
use url::Url;

use crate::document::{
    is_lowercase_kebab, AuthenticationSpec, DarpalDocument, WorkflowContainer,
    RECOMMENDED_AUTHENTICATION, SCHEMA_VERSION,
};
use crate::report::ValidationReport;
use crate::version::Version;

/// Paths of the fields a valid document must carry. Deleting any one of them
/// from a valid document makes it invalid with an error at that path.
pub const MANDATORY_PATHS: [&str; 11] = [
    "$schemaVersion",
    "meta.name",
    "meta.version",
    "meta._hash",
    "requestParameter.timeRange",
    "requestParameter.timeRange.allTime",
    "requestParameter.timeRange.customRange",
    "requestParameter.dataFormat",
    "requestInterface.manual.available",
    "requestInterface.webinterface.available",
    "requestInterface.api.available",
];

pub const HASH_PATH: &str = "meta._hash";

/// Checks mandatory fields and cross-field rules. Validation failures are
/// report content; this never fails.
pub fn validate_document(doc: &DarpalDocument) -> ValidationReport {
    let mut report = ValidationReport::new();
    check_identification(doc, &mut report);
    check_meta(doc, &mut report);
    check_request_parameter(doc, &mut report);
    check_request_interface(doc, &mut report);
    report
}

fn check_identification(doc: &DarpalDocument, report: &mut ValidationReport) {
    match doc.schema_version.as_deref() {
        None => report.error("$schemaVersion", "missing document schema version"),
        Some(SCHEMA_VERSION) => {}
        Some(other) => report.error(
            "$schemaVersion",
            format!("unsupported schema version {other:?}, expected {SCHEMA_VERSION:?}"),
        ),
    }
}

fn check_meta(doc: &DarpalDocument, report: &mut ValidationReport) {
    let meta = &doc.meta;
    match meta.name.as_deref() {
        None => report.error("meta.name", "missing provider name"),
        Some(name) if name.trim().is_empty() => report.error("meta.name", "provider name is empty"),
        Some(_) => {}
    }
    match meta.version.as_deref() {
        None => report.error("meta.version", "missing document version"),
        Some(v) => {
            if let Err(e) = v.parse::<Version>() {
                report.error("meta.version", e.to_string());
            }
        }
    }
    match meta.hash.as_deref() {
        None => report.error(HASH_PATH, "missing document hash"),
        Some(h) if !is_hex_digest(h) => {
            report.error(HASH_PATH, "hash must be 64 lowercase hex characters")
        }
        Some(_) => {}
    }
}

pub(crate) fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn check_request_parameter(doc: &DarpalDocument, report: &mut ValidationReport) {
    let params = &doc.request_parameter;
    match &params.time_range {
        None => report.error("requestParameter.timeRange", "missing time range"),
        Some(range) => {
            if range.all_time.is_none() {
                report.error("requestParameter.timeRange.allTime", "missing flag");
            }
            if range.custom_range.is_none() {
                report.error("requestParameter.timeRange.customRange", "missing flag");
            }
            if range.all_time == Some(false) && range.custom_range == Some(false) {
                report.error(
                    "requestParameter.timeRange",
                    "at least one of allTime and customRange must be true",
                );
            }
        }
    }
    match &params.data_format {
        None => report.error("requestParameter.dataFormat", "missing data format list"),
        Some(formats) if formats.is_empty() => {
            report.error("requestParameter.dataFormat", "data format list is empty")
        }
        Some(formats) => check_identifiers("requestParameter.dataFormat", formats, report),
    }
    if let Some(qualities) = &params.media_quality {
        if qualities.is_empty() {
            report.warning(
                "requestParameter.mediaQuality",
                "media quality list is empty",
            );
        }
        check_identifiers("requestParameter.mediaQuality", qualities, report);
    }
    if let Some(props) = &params.additional_properties {
        for (name, descriptor) in props {
            let path = format!("requestParameter.additionalProperties.{name}");
            let Some(descriptor) = descriptor.as_object() else {
                report.error(path, "parameter descriptor must be an object");
                continue;
            };
            match descriptor.get("options") {
                None => {}
                Some(Value::Array(options)) => {
                    if options.is_empty() {
                        report.warning(format!("{path}.options"), "option list is empty");
                    }
                    if !options
                        .iter()
                        .all(|o| o.as_str().is_some_and(|s| !s.is_empty()))
                    {
                        report.error(
                            format!("{path}.options"),
                            "options must be non-empty strings",
                        );
                    }
                }
                Some(_) => report.error(format!("{path}.options"), "options must be a list"),
            }
        }
    }
}

fn check_identifiers(path: &str, values: &[String], report: &mut ValidationReport) {
    for (i, value) in values.iter().enumerate() {
        if value.trim().is_empty() {
            report.error(format!("{path}[{i}]"), "identifier is empty");
        }
    }
}

fn check_request_interface(doc: &DarpalDocument, report: &mut ValidationReport) {
    let interface = &doc.request_interface;
    let mut any_available = false;

    match &interface.manual {
        None => report.error("requestInterface.manual", "missing manual interface branch"),
        Some(manual) => {
            let base = "requestInterface.manual";
            if manual.available.is_none() {
                report.error(format!("{base}.available"), "missing availability flag");
            }
            if manual.available == Some(true) {
                any_available = true;
                let contacts = [&manual.address, &manual.email, &manual.phone];
                if contacts
                    .iter()
                    .all(|c| c.as_deref().is_none_or(|s| s.trim().is_empty()))
                {
                    report.error(base, "manual interface needs an address, email or phone");
                }
                if let Some(email) = manual.email.as_deref() {
                    if !email.contains('@') {
                        report.warning(format!("{base}.email"), "does not look like an address");
                    }
                }
            }
            check_authentication(base, manual.authentication.as_ref(), report);
        }
    }

    match &interface.webinterface {
        None => report.error(
            "requestInterface.webinterface",
            "missing web interface branch",
        ),
        Some(web) => {
            let base = "requestInterface.webinterface";
            if web.available.is_none() {
                report.error(format!("{base}.available"), "missing availability flag");
            }
            if web.available == Some(true) {
                any_available = true;
                match web.start_url.as_deref() {
                    None => report.error(format!("{base}.startUrl"), "missing start URL"),
                    Some(raw) => {
                        if let Err(msg) = check_absolute_url(raw) {
                            report.error(format!("{base}.startUrl"), msg);
                        }
                    }
                }
                if web.workflow_container.is_none() {
                    report.warning(
                        format!("{base}.workflowContainer"),
                        "web interface has no workflow; it cannot be automated",
                    );
                }
            }
            check_authentication(base, web.authentication.as_ref(), report);
            if let Some(container) = &web.workflow_container {
                check_container(&format!("{base}.workflowContainer"), container, report);
            }
        }
    }

    match &interface.api {
        None => report.error("requestInterface.api", "missing api interface branch"),
        Some(api) => {
            let base = "requestInterface.api";
            if api.available.is_none() {
                report.error(format!("{base}.available"), "missing availability flag");
            }
            if api.endpoint.is_none() && api.endpoint_url.is_some() {
                report.warning(
                    format!("{base}.endpointUrl"),
                    "`endpointUrl` is a legacy alias, use `endpoint`",
                );
            }
            if api.available == Some(true) {
                any_available = true;
                match api.endpoint() {
                    None => report.error(format!("{base}.endpoint"), "missing endpoint"),
                    Some(raw) => {
                        if let Err(msg) = check_absolute_url(raw) {
                            report.error(format!("{base}.endpoint"), msg);
                        }
                    }
                }
            }
            check_authentication(base, api.authentication.as_ref(), report);
        }
    }

    if !any_available {
        report.warning("requestInterface", "no interface branch is available");
    }
}

fn check_absolute_url(raw: &str) -> Result<(), String> {
    let url = Url::parse(raw).map_err(|e| format!("not an absolute URL: {e}"))?;
    if url.cannot_be_a_base() || url.host_str().is_none() {
        return Err("URL has no host".into());
    }
    Ok(())
}

fn check_authentication(
    base: &str,
    auth: Option<&AuthenticationSpec>,
    report: &mut ValidationReport,
) {
    let Some(auth) = auth else { return };
    for (i, method) in auth.methods.iter().enumerate() {
        let path = format!("{base}.authentication[{i}]");
        if !is_lowercase_kebab(method) {
            report.error(
                path,
                format!("{method:?} is not a lowercase-kebab identifier"),
            );
        } else if !RECOMMENDED_AUTHENTICATION.contains(&method.as_str()) {
            report.warning(
                path,
                format!("unrecognized authentication method {method:?}"),
            );
        }
    }
}

fn check_container(base: &str, container: &WorkflowContainer, report: &mut ValidationReport) {
    if container.automation_engine.trim().is_empty() {
        report.error(
            format!("{base}.automationEngine"),
            "missing automation engine",
        );
    }
    for (i, block) in container.workflow.iter().enumerate() {
        if !block.is_object() {
            report.error(
                format!("{base}.workflow[{i}]"),
                "workflow entries must be objects",
            );
        }
    }
    if let Some(v) = container.version.as_deref() {
        if let Err(e) = v.parse::<Version>() {
            report.error(format!("{base}.version"), e.to_string());
        }
    }
}
