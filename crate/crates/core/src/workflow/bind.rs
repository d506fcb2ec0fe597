use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::canonical::compute_hash;
use crate::document::{DarpalDocument, WorkflowContainer};
use crate::parse::DocumentError;
use crate::report::ValidationReport;
use crate::workflow::{
    validate_workflow, BlockKind, ParamPath, Template, WorkflowBlock, DARA_ENGINE,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeRangeSelection {
    AllTime,
    Custom { start: NaiveDate, end: NaiveDate },
}

impl FromStr for TimeRangeSelection {
    type Err = String;

    /// `all`, `all-time`, or `START..END` with ISO dates.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" || s == "all-time" {
            return Ok(TimeRangeSelection::AllTime);
        }
        let (start, end) = s
            .split_once("..")
            .ok_or_else(|| format!("expected `all` or START..END, got {s:?}"))?;
        let parse = |d: &str| {
            NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|e| format!("bad date {d:?}: {e}"))
        };
        Ok(TimeRangeSelection::Custom {
            start: parse(start)?,
            end: parse(end)?,
        })
    }
}

impl fmt::Display for TimeRangeSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeRangeSelection::AllTime => f.write_str("all-time"),
            TimeRangeSelection::Custom { start, end } => write!(f, "{start}..{end}"),
        }
    }
}

/// The user's customization of a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSelection {
    #[serde(rename = "timeRange")]
    pub time_range: TimeRangeSelection,
    #[serde(rename = "dataFormat")]
    pub data_format: String,
    #[serde(
        rename = "mediaQuality",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub media_quality: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, Vec<String>>,
}

impl ParameterSelection {
    pub fn new(time_range: TimeRangeSelection, data_format: impl Into<String>) -> Self {
        ParameterSelection {
            time_range,
            data_format: data_format.into(),
            media_quality: None,
            extras: BTreeMap::new(),
        }
    }

    /// Checks every choice against the option sets the document declares.
    pub fn check_against(&self, doc: &DarpalDocument) -> Result<(), BindError> {
        let params = &doc.request_parameter;
        let out_of_range = |field: &str, detail: String| BindError::SelectionOutOfRange {
            field: field.to_string(),
            detail,
        };

        let formats = params.data_format.as_deref().unwrap_or_default();
        if !formats.contains(&self.data_format) {
            return Err(out_of_range(
                "dataFormat",
                format!("{:?} not among {formats:?}", self.data_format),
            ));
        }

        let range = params.time_range.clone().unwrap_or_default();
        match &self.time_range {
            TimeRangeSelection::AllTime if range.all_time != Some(true) => {
                return Err(out_of_range(
                    "timeRange",
                    "provider does not offer all-time copies".into(),
                ))
            }
            TimeRangeSelection::Custom { .. } if range.custom_range != Some(true) => {
                return Err(out_of_range(
                    "timeRange",
                    "provider does not offer custom ranges".into(),
                ))
            }
            TimeRangeSelection::Custom { start, end } if start > end => {
                return Err(out_of_range(
                    "timeRange",
                    format!("start {start} is after end {end}"),
                ))
            }
            _ => {}
        }

        if let Some(quality) = &self.media_quality {
            let declared = params.media_quality.as_deref().unwrap_or_default();
            if !declared.contains(quality) {
                return Err(out_of_range(
                    "mediaQuality",
                    format!("{quality:?} not among {declared:?}"),
                ));
            }
        }

        for (name, values) in &self.extras {
            let field = format!("additionalProperties.{name}");
            if !params.declares_extra(name) {
                return Err(out_of_range(&field, "parameter not declared".into()));
            }
            if let Some(options) = params.extra_options(name) {
                if let Some(bad) = values.iter().find(|v| !options.contains(&v.as_str())) {
                    return Err(out_of_range(
                        &field,
                        format!("{bad:?} not among {options:?}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn render(&self, doc: &DarpalDocument, path: &ParamPath) -> Option<String> {
        let params = &doc.request_parameter;
        let (start, end) = match &self.time_range {
            TimeRangeSelection::AllTime => (String::new(), String::new()),
            TimeRangeSelection::Custom { start, end } => (start.to_string(), end.to_string()),
        };
        Some(match path {
            ParamPath::TimeRange => self.time_range.to_string(),
            ParamPath::TimeRangeKind => match self.time_range {
                TimeRangeSelection::AllTime => "all-time".into(),
                TimeRangeSelection::Custom { .. } => "custom".into(),
            },
            ParamPath::TimeRangeStart => start,
            ParamPath::TimeRangeEnd => end,
            ParamPath::DataFormat => self.data_format.clone(),
            ParamPath::MediaQuality => {
                params.media_quality.as_ref()?;
                self.media_quality.clone().unwrap_or_default()
            }
            ParamPath::Extra(name) => {
                if !params.declares_extra(name) {
                    return None;
                }
                self.extras
                    .get(name)
                    .map(|v| v.join(","))
                    .unwrap_or_default()
            }
        })
    }
}

/// A workflow with every placeholder substituted, ready to execute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundWorkflow {
    pub provider: String,
    #[serde(rename = "sourceHash")]
    pub source_hash: String,
    #[serde(rename = "startUrl")]
    pub start_url: String,
    pub blocks: Vec<WorkflowBlock>,
}

impl BoundWorkflow {
    /// The bound blocks wrapped back into a `dara-engine/1` container.
    pub fn to_container(&self) -> WorkflowContainer {
        WorkflowContainer {
            automation_engine: DARA_ENGINE.into(),
            workflow: self.blocks.iter().map(WorkflowBlock::to_value).collect(),
            ..Default::default()
        }
    }

    pub fn block(&self, id: &str) -> Option<&WorkflowBlock> {
        self.blocks.iter().find(|b| b.id == id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BindError {
    #[error("workflow targets engine {found:?}, expected {DARA_ENGINE}")]
    EngineMismatch { found: String },
    #[error("workflow does not validate ({} error(s))", .0.errors().count())]
    InvalidWorkflow(ValidationReport),
    #[error("document has no usable web interface: {0}")]
    NoWebInterface(String),
    #[error("unknown placeholder {{{{param.{param}}}}} at {path}")]
    UnknownPlaceholder { path: String, param: String },
    #[error("selection out of range for {field}: {detail}")]
    SelectionOutOfRange { field: String, detail: String },
    #[error(transparent)]
    Document(#[from] DocumentError),
}

/// Merges `selection` into the container's workflow.
///
/// Blocks keep their ids and order. Relative `url`s are resolved against the
/// document's start URL.
pub fn bind_parameters(
    container: &WorkflowContainer,
    doc: &DarpalDocument,
    selection: &ParameterSelection,
) -> Result<BoundWorkflow, BindError> {
    if container.automation_engine != DARA_ENGINE {
        return Err(BindError::EngineMismatch {
            found: container.automation_engine.clone(),
        });
    }
    let report = validate_workflow(container);
    if !report.valid {
        return Err(BindError::InvalidWorkflow(report));
    }
    selection.check_against(doc)?;

    let start_raw = doc
        .web_interface()
        .and_then(|w| w.start_url.as_deref())
        .ok_or_else(|| BindError::NoWebInterface("missing startUrl".into()))?;
    let start_url =
        Url::parse(start_raw).map_err(|e| BindError::NoWebInterface(format!("startUrl: {e}")))?;
    let source_hash = compute_hash(doc)?;
    let provider = doc.provider().unwrap_or_default();

    let mut blocks = Vec::with_capacity(container.workflow.len());
    for (i, raw) in container.workflow.iter().enumerate() {
        let mut block = WorkflowBlock::from_value(raw).map_err(|e| {
            let mut report = ValidationReport::new();
            report.error(format!("workflow[{i}]"), e);
            BindError::InvalidWorkflow(report)
        })?;
        let substitute = |field: &str, text: &str| -> Result<String, BindError> {
            let template = Template::parse(text).map_err(|e| {
                let mut report = ValidationReport::new();
                report.error(format!("workflow[{i}].{field}"), e.to_string());
                BindError::InvalidWorkflow(report)
            })?;
            template.render(|param| {
                selection
                    .render(doc, param)
                    .ok_or_else(|| BindError::UnknownPlaceholder {
                        path: format!("workflow[{i}].{field}"),
                        param: param.to_string(),
                    })
            })
        };
        if let Some(value) = &block.value {
            block.value = Some(substitute("value", value)?);
        }
        if let Some(url) = &block.url {
            let rendered = substitute("url", url)?;
            block.url = Some(resolve_url(&start_url, block.kind, rendered));
        }
        blocks.push(block);
    }

    Ok(BoundWorkflow {
        provider,
        source_hash,
        start_url: start_url.to_string(),
        blocks,
    })
}

fn resolve_url(base: &Url, kind: BlockKind, rendered: String) -> String {
    if !matches!(kind, BlockKind::Navigate | BlockKind::AssertUrl) || Url::parse(&rendered).is_ok()
    {
        return rendered;
    }
    match base.join(&rendered) {
        Ok(url) => url.to_string(),
        Err(_) => rendered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::with_embedded_hash;
    use crate::document::WebInterface;
    use crate::workflow::{Selector, SignalKind};
    use serde_json::json;

    fn doc_with(blocks: Vec<WorkflowBlock>, custom_range: bool) -> DarpalDocument {
        let mut doc = DarpalDocument::minimal("Example Shop", "1.0");
        doc.request_parameter
            .time_range
            .as_mut()
            .unwrap()
            .custom_range = Some(custom_range);
        doc.request_parameter.data_format = Some(vec!["json".into(), "html".into()]);
        doc.request_parameter.additional_properties = Some(
            json!({"categories": {"options": ["orders", "profile"]}})
                .as_object()
                .unwrap()
                .clone(),
        );
        doc.request_interface.webinterface = Some(WebInterface {
            available: Some(true),
            start_url: Some("https://shop.example/privacy/dsar".into()),
            workflow_container: Some(WorkflowContainer {
                automation_engine: DARA_ENGINE.into(),
                workflow: blocks.iter().map(WorkflowBlock::to_value).collect(),
                ..Default::default()
            }),
            ..Default::default()
        });
        with_embedded_hash(&doc).unwrap()
    }

    fn fill(id: &str, value: &str) -> WorkflowBlock {
        WorkflowBlock::new(id, BlockKind::FillField)
            .with_selector(Selector::xpath(format!("//input[@id='{id}']")))
            .with_value(value)
    }

    #[test]
    fn direct_substitution() {
        let doc = doc_with(vec![fill("f", "{{param.dataFormat}}")], false);
        let sel = ParameterSelection::new(TimeRangeSelection::AllTime, "json");
        let bound = bind_parameters(doc.workflow_container().unwrap(), &doc, &sel).unwrap();
        assert_eq!(bound.blocks[0].value.as_deref(), Some("json"));
        assert_eq!(bound.provider, "example-shop");
        assert_eq!(bound.source_hash, doc.meta.hash.clone().unwrap());
    }

    #[test]
    fn custom_range_needs_declared_capability() {
        let doc = doc_with(vec![fill("f", "{{param.timeRange}}")], false);
        let sel = ParameterSelection::new("2023-01-01..2023-02-01".parse().unwrap(), "json");
        match bind_parameters(doc.workflow_container().unwrap(), &doc, &sel) {
            Err(BindError::SelectionOutOfRange { field, .. }) => assert_eq!(field, "timeRange"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn start_after_end_rejected() {
        let doc = doc_with(vec![], true);
        let sel = ParameterSelection::new("2023-05-01..2023-02-01".parse().unwrap(), "json");
        assert!(matches!(
            sel.check_against(&doc),
            Err(BindError::SelectionOutOfRange { .. })
        ));
    }

    #[test]
    fn undeclared_placeholders_rejected() {
        let doc = doc_with(vec![fill("q", "{{param.mediaQuality}}")], false);
        let sel = ParameterSelection::new(TimeRangeSelection::AllTime, "json");
        match bind_parameters(doc.workflow_container().unwrap(), &doc, &sel) {
            Err(BindError::UnknownPlaceholder { path, param }) => {
                assert_eq!(path, "workflow[0].value");
                assert_eq!(param, "mediaQuality");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extras_checked_and_joined() {
        let doc = doc_with(
            vec![fill("c", "{{param.additionalProperties.categories}}")],
            false,
        );
        let mut sel = ParameterSelection::new(TimeRangeSelection::AllTime, "html");
        sel.extras
            .insert("categories".into(), vec!["orders".into(), "profile".into()]);
        let bound = bind_parameters(doc.workflow_container().unwrap(), &doc, &sel).unwrap();
        assert_eq!(bound.blocks[0].value.as_deref(), Some("orders,profile"));

        sel.extras
            .insert("categories".into(), vec!["photos".into()]);
        assert!(matches!(
            sel.check_against(&doc),
            Err(BindError::SelectionOutOfRange { .. })
        ));
    }

    #[test]
    fn relative_urls_resolve_against_start_url() {
        let doc = doc_with(
            vec![
                WorkflowBlock::new("a", BlockKind::AssertUrl).with_url("/privacy/confirm"),
                WorkflowBlock::new("s", BlockKind::EmitSignal).with_signal(SignalKind::Success),
            ],
            false,
        );
        let sel = ParameterSelection::new(TimeRangeSelection::AllTime, "json");
        let bound = bind_parameters(doc.workflow_container().unwrap(), &doc, &sel).unwrap();
        assert_eq!(
            bound.blocks[0].url.as_deref(),
            Some("https://shop.example/privacy/confirm")
        );
    }

    #[test]
    fn foreign_engine_mismatch() {
        let mut doc = doc_with(vec![], false);
        let web = doc.request_interface.webinterface.as_mut().unwrap();
        web.workflow_container.as_mut().unwrap().automation_engine = "automa/other".into();
        let doc = with_embedded_hash(&doc).unwrap();
        let sel = ParameterSelection::new(TimeRangeSelection::AllTime, "json");
        assert!(matches!(
            bind_parameters(doc.workflow_container().unwrap(), &doc, &sel),
            Err(BindError::EngineMismatch { .. })
        ));
    }

    #[test]
    fn time_range_parses_from_cli_form() {
        assert_eq!(
            "all".parse::<TimeRangeSelection>().unwrap(),
            TimeRangeSelection::AllTime
        );
        let custom: TimeRangeSelection = "2022-01-01..2022-12-31".parse().unwrap();
        assert_eq!(custom.to_string(), "2022-01-01..2022-12-31");
        assert!("2022-01-01".parse::<TimeRangeSelection>().is_err());
        assert!("2022-13-01..2022-12-31"
            .parse::<TimeRangeSelection>()
            .is_err());
    }
}
