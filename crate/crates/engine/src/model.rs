//! An in-memory page model and a reference interpreter over it.
//!
//! The interpreter gives the block vocabulary a second, network-free
//! implementation. It has its own selector matcher, restricted to the
//! selector forms recorded workflows use, and works on flat element records
//! rather than a parsed document.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeDelta, Utc};
use dara_core::workflow::{BlockKind, BoundWorkflow, SelectorStrategy, SignalKind, WorkflowBlock};
use serde::{Deserialize, Serialize};

use crate::result::{End, ExecutionResult, Outcome, Recorder};
use crate::run::gate_index;
use crate::signal::NullSink;
use crate::webdriver::{DEFAULT_ELEMENT_TIMEOUT_MS, DEFAULT_PAGE_TIMEOUT_MS};

const MAX_REDIRECTS: usize = 20;

/// One element of a scripted page.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ElementRecord {
    pub tag: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    /// Normalized text content.
    #[serde(default)]
    pub text: String,
    /// Index of the parent record; None for top-level records.
    #[serde(default)]
    pub parent: Option<usize>,
    /// URL loaded when a link is clicked or a form is submitted.
    #[serde(default)]
    pub target: Option<String>,
}

impl ElementRecord {
    pub fn new(tag: &str) -> Self {
        ElementRecord {
            tag: tag.to_string(),
            ..Default::default()
        }
    }

    pub fn attr(mut self, name: &str, value: &str) -> Self {
        self.attrs.insert(name.to_string(), value.to_string());
        self
    }

    pub fn text(mut self, text: &str) -> Self {
        self.text = text.to_string();
        self
    }

    pub fn parent(mut self, index: usize) -> Self {
        self.parent = Some(index);
        self
    }

    pub fn target(mut self, url: &str) -> Self {
        self.target = Some(url.to_string());
        self
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.attrs.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PageSnapshot {
    /// URL without query string.
    pub url: String,
    #[serde(default)]
    pub elements: Vec<ElementRecord>,
    #[serde(rename = "latencyMs", default)]
    pub latency_ms: u64,
    /// When set the page cannot be loaded.
    #[serde(default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageModel {
    pub pages: Vec<PageSnapshot>,
    /// Server-side redirects, from URL to URL, both without query string.
    #[serde(default)]
    pub redirects: BTreeMap<String, String>,
    #[serde(rename = "pageTimeoutMs")]
    pub page_timeout_ms: u64,
    #[serde(rename = "elementTimeoutMs")]
    pub element_timeout_ms: u64,
}

impl Default for PageModel {
    fn default() -> Self {
        PageModel {
            pages: Vec::new(),
            redirects: BTreeMap::new(),
            page_timeout_ms: DEFAULT_PAGE_TIMEOUT_MS,
            element_timeout_ms: DEFAULT_ELEMENT_TIMEOUT_MS,
        }
    }
}

enum Load {
    Loaded(usize),
    TimedOut(String),
    Failed(String),
}

impl PageModel {
    fn load(&self, url: &str) -> Load {
        let mut at = strip_query(url).to_string();
        for _ in 0..=MAX_REDIRECTS {
            if let Some(next) = self.redirects.get(&at) {
                at = strip_query(next).to_string();
                continue;
            }
            return match self.pages.iter().position(|p| p.url == at) {
                None => Load::Failed(format!("{at} is not part of the model")),
                Some(i) if self.pages[i].failure.is_some() => {
                    Load::Failed(self.pages[i].failure.clone().unwrap_or_default())
                }
                Some(i) if self.pages[i].latency_ms > self.page_timeout_ms => {
                    Load::TimedOut(format!("loading {url} timed out"))
                }
                Some(i) => Load::Loaded(i),
            };
        }
        Load::Failed(format!("too many redirects starting at {url}"))
    }
}

fn strip_query(url: &str) -> &str {
    url.split(['?', '#']).next().unwrap_or(url)
}

// ---------------------------------------------------------------------------
// Selector matching

#[derive(Debug, Clone, PartialEq)]
enum Cond {
    AttrEq(String, String),
    AttrPresent(String),
    AttrAbsent(String),
    AttrContains(String, String),
    AttrStartsWith(String, String),
    TextEq(String),
    Class(String),
}

#[derive(Debug, Clone, PartialEq)]
struct SimpleStep {
    /// Whether the step may be any descendant (`//`, CSS space) rather than
    /// a direct child (`/`, CSS `>`).
    deep: bool,
    tag: Option<String>,
    conds: Vec<Cond>,
}

fn parse_simple_xpath(expr: &str) -> Result<Vec<SimpleStep>, String> {
    let mut rest = expr.trim();
    if let Some(r) = rest.strip_prefix('.') {
        rest = r;
    }
    let mut steps = Vec::new();
    while !rest.is_empty() {
        let deep = if let Some(r) = rest.strip_prefix("//") {
            rest = r;
            true
        } else if let Some(r) = rest.strip_prefix('/') {
            rest = r;
            false
        } else {
            return Err(format!("expected `/` at {rest:?}"));
        };
        let name_end = rest.find(['[', '/']).unwrap_or(rest.len());
        let name = rest[..name_end].trim();
        rest = &rest[name_end..];
        let tag = match name {
            "*" => None,
            n if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') => {
                Some(n.to_ascii_lowercase())
            }
            n => return Err(format!("unsupported node test {n:?}")),
        };
        let mut conds = Vec::new();
        while let Some(r) = rest.strip_prefix('[') {
            let close = matching_bracket(r).ok_or("unterminated predicate")?;
            for part in split_and(&r[..close]) {
                conds.push(parse_cond(part.trim())?);
            }
            rest = &r[close + 1..];
        }
        steps.push(SimpleStep { deep, tag, conds });
    }
    if steps.is_empty() {
        return Err("empty selector".into());
    }
    Ok(steps)
}

fn matching_bracket(s: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in s.char_indices() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(c),
            (None, ']') => return Some(i),
            _ => {}
        }
    }
    None
}

fn split_and(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut quote: Option<char> = None;
    let mut start = 0;
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < s.len() {
        let c = bytes[i] as char;
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None if s[i..].starts_with(" and ") => {
                parts.push(&s[start..i]);
                i += 5;
                start = i;
                continue;
            }
            None => {}
        }
        i += 1;
    }
    parts.push(&s[start..]);
    parts
}

fn unquote(s: &str) -> Result<String, String> {
    let s = s.trim();
    let inner = s
        .strip_prefix('\'')
        .and_then(|r| r.strip_suffix('\''))
        .or_else(|| s.strip_prefix('"').and_then(|r| r.strip_suffix('"')))
        .ok_or_else(|| format!("expected a string literal, got {s:?}"))?;
    Ok(inner.to_string())
}

fn two_args(inner: &str) -> Result<(String, String), String> {
    let (a, b) = inner.split_once(',').ok_or("expected two arguments")?;
    let attr = a
        .trim()
        .strip_prefix('@')
        .ok_or_else(|| format!("expected an attribute, got {a:?}"))?;
    Ok((attr.to_ascii_lowercase(), unquote(b)?))
}

fn parse_cond(p: &str) -> Result<Cond, String> {
    if let Some((lhs, rhs)) = p.split_once('=') {
        let lhs = lhs.trim();
        let value = unquote(rhs)?;
        if let Some(attr) = lhs.strip_prefix('@') {
            return Ok(Cond::AttrEq(attr.to_ascii_lowercase(), value));
        }
        if matches!(
            lhs,
            "text()" | "normalize-space()" | "normalize-space(.)" | "."
        ) {
            return Ok(Cond::TextEq(value));
        }
        return Err(format!("unsupported comparison {p:?}"));
    }
    if let Some(attr) = p.strip_prefix('@') {
        return Ok(Cond::AttrPresent(attr.to_ascii_lowercase()));
    }
    if let Some(inner) = p.strip_prefix("not(@").and_then(|r| r.strip_suffix(')')) {
        return Ok(Cond::AttrAbsent(inner.to_ascii_lowercase()));
    }
    if let Some(inner) = p
        .strip_prefix("contains(")
        .and_then(|r| r.strip_suffix(')'))
    {
        let (a, v) = two_args(inner)?;
        return Ok(Cond::AttrContains(a, v));
    }
    if let Some(inner) = p
        .strip_prefix("starts-with(")
        .and_then(|r| r.strip_suffix(')'))
    {
        let (a, v) = two_args(inner)?;
        return Ok(Cond::AttrStartsWith(a, v));
    }
    Err(format!("unsupported predicate {p:?}"))
}

fn parse_simple_css(expr: &str) -> Result<Vec<SimpleStep>, String> {
    let mut steps = Vec::new();
    let mut deep = true;
    for token in expr.split_whitespace() {
        if token == ">" {
            deep = false;
            continue;
        }
        let mut tag = None;
        let mut conds = Vec::new();
        let mut rest = token;
        let head_end = rest.find(['#', '.', '[']).unwrap_or(rest.len());
        match &rest[..head_end] {
            "" | "*" => {}
            t if t.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') => {
                tag = Some(t.to_ascii_lowercase())
            }
            t => return Err(format!("unsupported css {t:?}")),
        }
        rest = &rest[head_end..];
        while !rest.is_empty() {
            let (sigil, body) = rest.split_at(1);
            match sigil {
                "#" | "." => {
                    let end = body.find(['#', '.', '[']).unwrap_or(body.len());
                    let name = body[..end].to_string();
                    conds.push(if sigil == "#" {
                        Cond::AttrEq("id".into(), name)
                    } else {
                        Cond::Class(name)
                    });
                    rest = &body[end..];
                }
                "[" => {
                    let close = body.find(']').ok_or("unterminated attribute selector")?;
                    let inner = &body[..close];
                    conds.push(match inner.split_once('=') {
                        Some((a, v)) => Cond::AttrEq(
                            a.to_ascii_lowercase(),
                            v.trim_matches(|c| c == '"' || c == '\'').to_string(),
                        ),
                        None => Cond::AttrPresent(inner.to_ascii_lowercase()),
                    });
                    rest = &body[close + 1..];
                }
                _ => return Err(format!("unsupported css at {rest:?}")),
            }
        }
        steps.push(SimpleStep { deep, tag, conds });
        deep = true;
    }
    if steps.is_empty() {
        return Err("empty selector".into());
    }
    Ok(steps)
}

fn cond_holds(el: &ElementRecord, cond: &Cond) -> bool {
    match cond {
        Cond::AttrEq(a, v) => el.get(a) == Some(v.as_str()),
        Cond::AttrPresent(a) => el.get(a).is_some(),
        Cond::AttrAbsent(a) => el.get(a).is_none(),
        Cond::AttrContains(a, v) => el.get(a).is_some_and(|x| x.contains(v.as_str())),
        Cond::AttrStartsWith(a, v) => el.get(a).is_some_and(|x| x.starts_with(v.as_str())),
        Cond::TextEq(v) => el.text == *v,
        Cond::Class(c) => el
            .get("class")
            .is_some_and(|x| x.split_whitespace().any(|k| k == c)),
    }
}

fn step_holds(el: &ElementRecord, step: &SimpleStep) -> bool {
    step.tag.as_ref().is_none_or(|t| el.tag == *t) && step.conds.iter().all(|c| cond_holds(el, c))
}

struct Matcher<'a> {
    elements: &'a [ElementRecord],
}

impl Matcher<'_> {
    fn ancestors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.elements[i].parent, move |&p| self.elements[p].parent)
    }

    /// Whether `i` is selected by `steps` evaluated from `scope` (None: the
    /// document).
    fn matches(&self, i: usize, steps: &[SimpleStep], scope: Option<usize>) -> bool {
        let Some((last, init)) = steps.split_last() else {
            return false;
        };
        if !step_holds(&self.elements[i], last) {
            return false;
        }
        let parent = self.elements[i].parent;
        if init.is_empty() {
            return match (last.deep, scope) {
                (true, None) => true,
                (true, Some(s)) => self.ancestors(i).any(|a| a == s),
                (false, None) => parent.is_none() || self.elements[i].tag == "html",
                (false, Some(s)) => parent == Some(s),
            };
        }
        if last.deep {
            self.ancestors(i).any(|a| self.matches(a, init, scope))
        } else {
            parent.is_some_and(|p| self.matches(p, init, scope))
        }
    }

    fn select(&self, steps: &[SimpleStep], scope: Option<usize>) -> Vec<usize> {
        (0..self.elements.len())
            .filter(|&i| self.matches(i, steps, scope))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Interpretation

struct State<'m> {
    model: &'m PageModel,
    page: Option<usize>,
    url: String,
}

enum Effect {
    Ok,
    Missing(String),
    Failed(String),
    Fatal(String),
}

impl<'m> State<'m> {
    fn elements(&self) -> &'m [ElementRecord] {
        self.page
            .map(|p| self.model.pages[p].elements.as_slice())
            .unwrap_or(&[])
    }

    fn goto(&mut self, url: &str, nav_fatal: bool) -> Effect {
        match self.model.load(url) {
            Load::Loaded(i) => {
                self.page = Some(i);
                self.url = self.model.pages[i].url.clone();
                Effect::Ok
            }
            Load::TimedOut(d) => Effect::Failed(d),
            Load::Failed(d) if nav_fatal => {
                Effect::Fatal(format!("navigation to {url} failed: {d}"))
            }
            Load::Failed(d) => Effect::Failed(d),
        }
    }

    fn find(&self, block: &WorkflowBlock) -> Result<Option<usize>, String> {
        let Some(sel) = &block.selector else {
            return Ok(None);
        };
        let steps = match sel.strategy {
            SelectorStrategy::Xpath => parse_simple_xpath(&sel.expression)?,
            SelectorStrategy::Css => parse_simple_css(&sel.expression)?,
        };
        let m = Matcher {
            elements: self.elements(),
        };
        Ok(m.select(&steps, None).into_iter().next())
    }

    fn form_of(&self, i: usize) -> Option<usize> {
        let els = self.elements();
        std::iter::successors(Some(i), |&x| els[x].parent).find(|&x| els[x].tag == "form")
    }

    fn submit_control(&self, form: usize) -> Option<usize> {
        let els = self.elements();
        let m = Matcher { elements: els };
        (0..els.len()).find(|&i| {
            let e = &els[i];
            let is_submit = match e.tag.as_str() {
                "button" => e.get("type").is_none_or(|t| t == "submit"),
                "input" => matches!(e.get("type"), Some("submit" | "image")),
                _ => false,
            };
            is_submit && m.ancestors(i).any(|a| a == form)
        })
    }

    fn click(&mut self, i: usize) -> Effect {
        let els = self.elements();
        let link = std::iter::successors(Some(i), |&x| els[x].parent)
            .find(|&x| els[x].tag == "a" && els[x].target.is_some());
        if let Some(a) = link {
            let target = els[a].target.clone().unwrap_or_default();
            return self.goto(&target, true);
        }
        let e = &els[i];
        let submits = match e.tag.as_str() {
            "button" => e.get("type").is_none_or(|t| t == "submit"),
            "input" => matches!(e.get("type"), Some("submit" | "image")),
            _ => false,
        };
        if submits {
            if let Some(target) = self.form_of(i).and_then(|f| els[f].target.clone()) {
                return self.goto(&target, true);
            }
        }
        Effect::Ok
    }

    fn apply(&mut self, block: &WorkflowBlock) -> Effect {
        let missing = || {
            let sel = block
                .selector
                .as_ref()
                .map(ToString::to_string)
                .unwrap_or_default();
            Effect::Missing(format!("{sel} not found"))
        };
        let found = match self.find(block) {
            Ok(f) => f,
            Err(e) => return Effect::Failed(format!("invalid selector: {e}")),
        };
        match block.kind {
            BlockKind::Navigate => {
                let url = block.url.clone().unwrap_or_default();
                self.goto(&url, true)
            }
            BlockKind::WaitForElement | BlockKind::BranchOnElement => match found {
                Some(_) => Effect::Ok,
                None => missing(),
            },
            BlockKind::Click => match found {
                Some(i) => self.click(i),
                None => missing(),
            },
            BlockKind::FillField => match found {
                Some(i) => {
                    let e = &self.elements()[i];
                    let checkable = matches!(e.get("type"), Some("checkbox" | "radio"));
                    match e.tag.as_str() {
                        "textarea" => Effect::Ok,
                        "input" if !checkable => Effect::Ok,
                        "input" => self.click(i),
                        other => Effect::Failed(format!(
                            "element <{other}> is not keyboard-interactable"
                        )),
                    }
                }
                None => missing(),
            },
            BlockKind::SelectOption => match found {
                Some(i) => {
                    let value = block.value.as_deref().unwrap_or_default();
                    let m = Matcher {
                        elements: self.elements(),
                    };
                    let has = self.elements().iter().enumerate().any(|(j, e)| {
                        e.tag == "option"
                            && m.ancestors(j).any(|a| a == i)
                            && (e.get("value") == Some(value) || e.text == value)
                    });
                    if has {
                        Effect::Ok
                    } else {
                        Effect::Failed(format!("no option {value:?}"))
                    }
                }
                None => missing(),
            },
            BlockKind::Submit => {
                let form = match (&block.selector, found) {
                    (Some(_), None) => return missing(),
                    (Some(_), Some(i)) => self.form_of(i),
                    (None, _) => self.elements().iter().position(|e| e.tag == "form"),
                };
                let Some(form) = form else {
                    return Effect::Missing("no form to submit".into());
                };
                match self.submit_control(form) {
                    Some(c) => self.click(c),
                    None => Effect::Missing("form has no submit control".into()),
                }
            }
            BlockKind::AssertUrl => {
                let expected = block.url.as_deref().unwrap_or_default();
                if self.url.starts_with(expected) {
                    Effect::Ok
                } else {
                    Effect::Failed(format!("at {}, expected {expected}", self.url))
                }
            }
            BlockKind::Delay | BlockKind::EmitSignal => Effect::Ok,
        }
    }
}

/// Interprets `workflow` against `model`. A pure function of its inputs:
/// timestamps and the run id are derived, not read from the clock.
pub fn reference_interpret(workflow: &BoundWorkflow, model: &PageModel) -> ExecutionResult {
    let epoch = DateTime::<Utc>::UNIX_EPOCH;
    let mut tick = 0i64;
    let sink = NullSink;
    let mut rec = Recorder::new(
        format!("reference:{}", workflow.source_hash),
        &sink,
        move || {
            tick += 1;
            epoch + TimeDelta::milliseconds(tick)
        },
    );
    let end = interpret(workflow, model, &mut rec);
    let mut result = rec.finish(end, &workflow.provider, 0);
    result.duration_ms = workflow
        .blocks
        .iter()
        .filter(|b| b.kind == BlockKind::Delay)
        .filter_map(|b| b.timeout_ms)
        .sum();
    result
}

fn interpret(workflow: &BoundWorkflow, model: &PageModel, rec: &mut Recorder<'_>) -> End {
    let mut state = State {
        model,
        page: None,
        url: "about:blank".into(),
    };
    match state.goto(&workflow.start_url, true) {
        Effect::Ok => {}
        Effect::Failed(d) | Effect::Missing(d) => {
            return End::new(Outcome::InteractionRequired, None, d)
        }
        Effect::Fatal(d) => return End::new(Outcome::Error, None, d),
    }
    let blocks = &workflow.blocks;
    let gate = gate_index(blocks);
    if gate.is_none() {
        rec.start(None, "start page loaded");
    }
    let mut i = 0;
    while i < blocks.len() {
        let block = &blocks[i];
        rec.trace.push(block.id.clone());
        if block.kind == BlockKind::EmitSignal {
            match block.signal_kind() {
                Some(SignalKind::StartedExecution) => {
                    rec.start(Some(&block.id), "emitted by workflow")
                }
                Some(kind) => {
                    let outcome = Outcome::from_signal(kind).expect("terminal kind");
                    return End::new(outcome, Some(&block.id), "emitted by workflow");
                }
                None => {}
            }
            i += 1;
            continue;
        }
        match state.apply(block) {
            Effect::Ok => {
                if Some(i) == gate {
                    rec.start(Some(&block.id), "start page confirmed");
                }
                i += 1;
            }
            Effect::Missing(_) if block.kind == BlockKind::BranchOnElement => {
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
            Effect::Missing(d) | Effect::Failed(d) => {
                return End::new(Outcome::InteractionRequired, Some(&block.id), d)
            }
            Effect::Fatal(d) => return End::new(Outcome::Error, Some(&block.id), d),
        }
    }
    rec.start(None, "workflow completed");
    End::new(Outcome::Success, None, "workflow completed")
}
