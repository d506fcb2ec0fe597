//! Page content for every scenario.
//!
//! Pages are built once as element trees. The HTTP site renders them to
//! HTML; [`page_model`] flattens the same trees into the engine's scripted
//! page model, so the live site and the model cannot drift apart.

use std::collections::BTreeMap;

use dara_engine::{ElementRecord, PageModel, PageSnapshot};
use url::Url;

use crate::scenario::{FailureMode, FieldKind, Scenario};

#[derive(Debug, Clone)]
pub(crate) enum Child {
    Text(String),
    El(Node),
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    tag: &'static str,
    attrs: Vec<(&'static str, String)>,
    children: Vec<Child>,
}

fn el(tag: &'static str) -> Node {
    Node {
        tag,
        attrs: Vec::new(),
        children: Vec::new(),
    }
}

impl Node {
    fn attr(mut self, name: &'static str, value: impl Into<String>) -> Self {
        self.attrs.push((name, value.into()));
        self
    }

    fn text(mut self, text: &str) -> Self {
        self.children.push(Child::Text(text.into()));
        self
    }

    fn child(mut self, node: Node) -> Self {
        self.children.push(Child::El(node));
        self
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v.as_str())
    }

    fn string_value(&self) -> String {
        let mut out = String::new();
        for c in &self.children {
            match c {
                Child::Text(t) => out.push_str(t),
                Child::El(n) => out.push_str(&n.string_value()),
            }
        }
        out
    }

    fn render(&self, out: &mut String) {
        out.push('<');
        out.push_str(self.tag);
        for (k, v) in &self.attrs {
            out.push_str(&format!(" {k}=\"{}\"", escape(v)));
        }
        out.push('>');
        if self.tag == "input" {
            return;
        }
        for c in &self.children {
            match c {
                Child::Text(t) => out.push_str(&escape(t)),
                Child::El(n) => n.render(out),
            }
        }
        out.push_str(&format!("</{}>", self.tag));
    }

    fn flatten(&self, base: &Url, parent: Option<usize>, out: &mut Vec<ElementRecord>) {
        let index = out.len();
        let target = match self.tag {
            "a" => self.get("href"),
            "form" => self.get("action"),
            _ => None,
        }
        .and_then(|t| base.join(t).ok())
        .map(|u| u.to_string());
        out.push(ElementRecord {
            tag: self.tag.to_string(),
            attrs: self
                .attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
            text: self
                .string_value()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" "),
            parent,
            target,
        });
        for c in &self.children {
            if let Child::El(n) = c {
                n.flatten(base, Some(index), out);
            }
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A page: its title and body content.
pub(crate) struct Page {
    title: String,
    body: Vec<Node>,
}

impl Page {
    fn tree(&self) -> Node {
        let mut body = el("body");
        for n in &self.body {
            body = body.child(n.clone());
        }
        el("html")
            .child(el("head").child(el("title").text(&self.title)))
            .child(body)
    }

    pub fn html(&self) -> String {
        let mut out = String::from("<!DOCTYPE html>");
        self.tree().render(&mut out);
        out
    }

    fn records(&self, base: &Url) -> Vec<ElementRecord> {
        let mut out = Vec::new();
        self.tree().flatten(base, None, &mut out);
        out
    }
}

pub(crate) fn privacy(s: &Scenario) -> Page {
    let n = &s.name;
    Page {
        title: "Privacy settings".into(),
        body: vec![
            el("div")
                .attr("id", "cookie-banner")
                .child(el("p").text("This site uses cookies."))
                .child(
                    el("button")
                        .attr("id", "accept-cookies")
                        .attr("type", "button")
                        .text("Accept"),
                ),
            el("h1")
                .attr("id", "privacy-title")
                .text("Privacy settings"),
            el("p")
                .text("You can ask for a copy of the personal data we hold about you. ")
                .child(
                    el("a")
                        .attr("id", "dsar-link")
                        .attr("href", format!("/{n}/privacy/dsar"))
                        .text("Request a copy of your data"),
                ),
        ],
    }
}

/// Element id of a form control at a serve generation.
pub fn drifted_id(s: &Scenario, generation: u64, id: &str) -> String {
    if s.failure == FailureMode::DomDrift && generation > 0 {
        format!("{id}-g{generation}")
    } else {
        id.to_string()
    }
}

pub(crate) fn dsar(s: &Scenario, generation: u64) -> Page {
    let n = &s.name;
    let id = |x: &str| drifted_id(s, generation, x);
    let mut form = el("form")
        .attr("id", id("dsar-form"))
        .attr("method", "post")
        .attr("action", format!("/{n}/confirm"));
    for f in &s.form_fields {
        let fid = id(&f.field_id);
        let control = match f.kind {
            FieldKind::Text => el("input")
                .attr("type", "text")
                .attr("id", fid.clone())
                .attr("name", f.field_id.clone()),
            FieldKind::Checkbox => el("input")
                .attr("type", "checkbox")
                .attr("id", fid.clone())
                .attr("name", f.field_id.clone())
                .attr("value", "yes"),
            FieldKind::Select => f.options.iter().fold(
                el("select")
                    .attr("id", fid.clone())
                    .attr("name", f.field_id.clone()),
                |sel, o| sel.child(el("option").attr("value", o.clone()).text(o)),
            ),
        };
        form = form.child(
            el("p")
                .child(el("label").attr("for", fid).text(&f.field_id))
                .child(control),
        );
    }
    form = if s.failure == FailureMode::Captcha {
        form.child(
            el("div")
                .attr("id", "captcha")
                .child(el("p").text("Confirm that you are human to continue."))
                .child(
                    el("img")
                        .attr("alt", "challenge")
                        .attr("src", "/captcha.png"),
                ),
        )
    } else {
        form.child(
            el("button")
                .attr("type", "submit")
                .attr("id", id("submit-request"))
                .text("Submit request"),
        )
    };
    Page {
        title: "Request your data".into(),
        body: vec![
            el("h1")
                .attr("id", "dsar-title")
                .text("Request a copy of your data"),
            form,
        ],
    }
}

pub(crate) fn confirm() -> Page {
    Page {
        title: "Request received".into(),
        body: vec![
            el("h1").attr("id", "confirmation").text("Request received"),
            el("p").text("We will send your copy within one month."),
        ],
    }
}

pub(crate) fn login(s: &Scenario) -> Page {
    let n = &s.name;
    Page {
        title: "Sign in".into(),
        body: vec![
            el("h1").attr("id", "login-title").text("Sign in"),
            el("form")
                .attr("id", "login-form")
                .attr("method", "post")
                .attr("action", format!("/{n}/login"))
                .child(
                    el("input")
                        .attr("type", "text")
                        .attr("id", "username")
                        .attr("name", "username"),
                )
                .child(
                    el("input")
                        .attr("type", "password")
                        .attr("id", "password")
                        .attr("name", "password"),
                )
                .child(
                    el("button")
                        .attr("type", "submit")
                        .attr("id", "sign-in")
                        .text("Sign in"),
                ),
        ],
    }
}

/// The scripted page model of `scenario` as served at `generation` from
/// `base` (the site root URL).
pub fn page_model(
    scenario: &Scenario,
    generation: u64,
    base: &Url,
    authenticated: bool,
) -> PageModel {
    let n = &scenario.name;
    let at = |path: &str| {
        base.join(&format!("{n}/{path}"))
            .expect("scenario paths join")
            .to_string()
    };
    let snapshot = |path: &str, page: Page| PageSnapshot {
        url: at(path),
        elements: page.records(base),
        latency_ms: scenario.latency_ms(),
        failure: None,
    };
    let pages = vec![
        snapshot("privacy", privacy(scenario)),
        snapshot("privacy/dsar", dsar(scenario, generation)),
        snapshot("confirm", confirm()),
        snapshot("login", login(scenario)),
    ];
    let mut redirects = BTreeMap::new();
    if scenario.requires_login && !authenticated {
        for path in ["privacy", "privacy/dsar", "confirm"] {
            redirects.insert(at(path), at("login"));
        }
    }
    if scenario.failure == FailureMode::RedirectLoop {
        redirects.insert(at("privacy"), at("privacy/loop"));
        redirects.insert(at("privacy/loop"), at("privacy"));
    }
    PageModel {
        pages,
        redirects,
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn html_and_records_describe_the_same_tree() {
        let s = Scenario::builtin("happy-path").unwrap();
        let page = dsar(&s, 0);
        let html = page.html();
        assert!(html.starts_with(
            "<!DOCTYPE html><html><head><title>Request your data</title></head><body>"
        ));
        assert!(
            html.contains(r#"<form id="dsar-form" method="post" action="/happy-path/confirm">"#)
        );
        let base = Url::parse("http://127.0.0.1:9/").unwrap();
        let records = page.records(&base);
        let form = records.iter().position(|r| r.tag == "form").unwrap();
        assert_eq!(
            records[form].target.as_deref(),
            Some("http://127.0.0.1:9/happy-path/confirm")
        );
        let opts: Vec<_> = records
            .iter()
            .filter(|r| r.tag == "option")
            .map(|r| r.text.as_str())
            .collect();
        assert_eq!(opts, ["all-time", "custom", "json", "csv", "html"]);
        assert_eq!(records[0].tag, "html");
        assert_eq!(records[1].parent, Some(0));
    }

    #[test]
    fn drift_and_captcha() {
        let drift = Scenario::builtin("dom-drift").unwrap();
        assert!(dsar(&drift, 0).html().contains(r#"id="dsar-form""#));
        assert!(dsar(&drift, 1).html().contains(r#"id="dsar-form-g1""#));
        assert!(dsar(&drift, 2).html().contains(r#"name="dataFormat""#));
        let captcha = Scenario::builtin("captcha").unwrap();
        assert!(!dsar(&captcha, 0).html().contains("submit"));
    }

    #[test]
    fn escaping() {
        let mut out = String::new();
        el("p").attr("title", "a\"b").text("<&>").render(&mut out);
        assert_eq!(out, r#"<p title="a&quot;b">&lt;&amp;&gt;</p>"#);
    }

    #[test]
    fn login_and_loop_models() {
        let base = Url::parse("http://h/").unwrap();
        let s = Scenario::builtin("login-required").unwrap();
        assert_eq!(
            page_model(&s, 0, &base, false).redirects["http://h/login-required/privacy"],
            "http://h/login-required/login"
        );
        assert!(page_model(&s, 0, &base, true).redirects.is_empty());
        let l = Scenario::builtin("redirect-loop").unwrap();
        assert_eq!(page_model(&l, 0, &base, false).redirects.len(), 2);
    }
}
