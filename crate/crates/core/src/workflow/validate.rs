use std::collections::HashMap;

use crate::document::WorkflowContainer;
use crate::report::ValidationReport;
use crate::workflow::{BlockKind, SignalKind, Template, WorkflowBlock, DARA_ENGINE};

/// Checks a container's blocks against the `dara-engine/1` rules.
///
/// Paths in the report are relative to the container (`workflow[2].id`).
/// Containers for other engines are passed through with a single warning.
pub fn validate_workflow(container: &WorkflowContainer) -> ValidationReport {
    let mut report = ValidationReport::new();
    if container.automation_engine != DARA_ENGINE {
        report.warning(
            "automationEngine",
            format!(
                "engine {:?} is not {DARA_ENGINE}; blocks not checked",
                container.automation_engine
            ),
        );
        return report;
    }
    if container.workflow.is_empty() {
        report.warning("workflow", "workflow is empty");
        return report;
    }

    let mut blocks: Vec<(usize, WorkflowBlock)> = Vec::new();
    for (i, raw) in container.workflow.iter().enumerate() {
        match WorkflowBlock::from_value(raw) {
            Ok(block) => blocks.push((i, block)),
            Err(e) => report.error(format!("workflow[{i}]"), format!("malformed block: {e}")),
        }
    }

    let mut first_position: HashMap<&str, usize> = HashMap::new();
    for (i, block) in &blocks {
        if block.id.trim().is_empty() {
            report.error(format!("workflow[{i}].id"), "block id is empty");
            continue;
        }
        if let Some(first) = first_position.get(block.id.as_str()) {
            report.error(
                format!("workflow[{i}].id"),
                format!(
                    "duplicate block id {:?} at positions {first} and {i}",
                    block.id
                ),
            );
        } else {
            first_position.insert(&block.id, *i);
        }
    }

    for (i, block) in &blocks {
        check_block(*i, block, &first_position, &mut report);
    }
    report
}

fn check_block(
    i: usize,
    block: &WorkflowBlock,
    positions: &HashMap<&str, usize>,
    report: &mut ValidationReport,
) {
    let at = |field: &str| format!("workflow[{i}].{field}");
    let kind = block.kind;

    match &block.selector {
        Some(selector) if selector.expression.trim().is_empty() => {
            report.error(at("selector.expression"), "selector expression is empty")
        }
        None if kind.requires_selector() => {
            report.error(at("selector"), format!("{kind} block needs a selector"))
        }
        _ => {}
    }

    let needs_value = matches!(kind, BlockKind::FillField | BlockKind::SelectOption);
    if needs_value && block.value.is_none() {
        report.error(at("value"), format!("{kind} block needs a value"));
    }
    if let Some(value) = &block.value {
        if let Err(e) = Template::parse(value) {
            report.error(at("value"), e.to_string());
        }
    }

    let needs_url = matches!(kind, BlockKind::Navigate | BlockKind::AssertUrl);
    match &block.url {
        None if needs_url => report.error(at("url"), format!("{kind} block needs a url")),
        Some(url) => {
            if let Err(e) = Template::parse(url) {
                report.error(at("url"), e.to_string());
            }
        }
        None => {}
    }

    match (kind, &block.signal) {
        (BlockKind::EmitSignal, None) => report.error(at("signal"), "emit-signal needs a signal"),
        (BlockKind::EmitSignal, Some(name)) => {
            if name.parse::<SignalKind>().is_err() {
                report.error(at("signal"), format!("unknown signal {name:?}"));
            }
        }
        (_, Some(_)) => report.warning(at("signal"), format!("ignored on {kind} block")),
        (_, None) => {}
    }

    if block.timeout_ms == Some(0) {
        report.error(at("timeoutMs"), "timeout must be positive");
    }
    if kind == BlockKind::Delay && block.timeout_ms.is_none() {
        report.error(at("timeoutMs"), "delay block needs a duration in timeoutMs");
    }

    match (kind, &block.on_missing) {
        (BlockKind::BranchOnElement, None) => report.error(
            at("onMissing"),
            "branch-on-element needs an onMissing target",
        ),
        (BlockKind::BranchOnElement, Some(target)) => match positions.get(target.as_str()) {
            None => report.error(at("onMissing"), format!("no block with id {target:?}")),
            Some(&pos) if pos <= i => report.error(
                at("onMissing"),
                format!("onMissing target {target:?} must come after the branch"),
            ),
            Some(_) => {}
        },
        (_, Some(_)) => report.warning(at("onMissing"), format!("ignored on {kind} block")),
        (_, None) => {}
    }
}
