//! A loaded page: the parsed tree plus the mutable state of its form controls.

use std::collections::HashMap;

use ego_tree::iter::Edge;
use ego_tree::NodeId;
use scraper::{ElementRef, Html, Selector};
use url::Url;

use crate::xpath::XPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locator {
    Css,
    XPath,
    LinkText,
    PartialLinkText,
    TagName,
}

impl Locator {
    pub fn from_w3c(using: &str) -> Option<Locator> {
        Some(match using {
            "css selector" => Locator::Css,
            "xpath" => Locator::XPath,
            "link text" => Locator::LinkText,
            "partial link text" => Locator::PartialLinkText,
            "tag name" => Locator::TagName,
            _ => return None,
        })
    }
}

/// An HTTP request a page interaction asks the browser to perform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    pub url: Url,
    /// `application/x-www-form-urlencoded` body for POST.
    pub body: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Request {
    pub fn get(url: Url) -> Self {
        Request {
            method: Method::Get,
            url,
            body: None,
        }
    }
}

#[derive(Debug)]
pub struct Page {
    pub url: Url,
    pub html: Html,
    /// Distinguishes page loads; element references from an older serial
    /// are stale.
    pub serial: u64,
    values: HashMap<NodeId, String>,
    checked: HashMap<NodeId, bool>,
}

impl Page {
    pub fn new(url: Url, source: &str, serial: u64) -> Self {
        Page {
            url,
            html: Html::parse_document(source),
            serial,
            values: HashMap::new(),
            checked: HashMap::new(),
        }
    }

    pub fn blank(serial: u64) -> Self {
        Page::new(Url::parse("about:blank").expect("static url"), "", serial)
    }

    pub fn root(&self) -> NodeId {
        self.html.tree.root().id()
    }

    pub fn element(&self, id: NodeId) -> Option<ElementRef<'_>> {
        self.html.tree.get(id).and_then(ElementRef::wrap)
    }

    pub fn source(&self) -> String {
        self.html.html()
    }

    pub fn title(&self) -> String {
        let sel = Selector::parse("title").expect("static selector");
        self.html
            .select(&sel)
            .next()
            .map(|t| collapse(&t.text().collect::<String>()))
            .unwrap_or_default()
    }

    pub fn tag(&self, id: NodeId) -> String {
        self.element(id)
            .map(|e| e.value().name().to_string())
            .unwrap_or_default()
    }

    pub fn attr(&self, id: NodeId, name: &str) -> Option<String> {
        let el = self.element(id)?;
        el.value()
            .attrs()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.to_string())
    }

    fn input_type(&self, id: NodeId) -> String {
        self.attr(id, "type")
            .unwrap_or_else(|| "text".into())
            .to_ascii_lowercase()
    }

    fn is_checkable(&self, id: NodeId) -> bool {
        self.tag(id) == "input" && matches!(self.input_type(id).as_str(), "checkbox" | "radio")
    }

    /// Finds elements matching `value` under `from` (the document when None),
    /// in document order.
    pub fn find(
        &self,
        locator: Locator,
        value: &str,
        from: Option<NodeId>,
    ) -> Result<Vec<NodeId>, String> {
        let scope = from.unwrap_or_else(|| self.root());
        match locator {
            Locator::XPath => XPath::compile(value)
                .and_then(|x| x.select_elements(&self.html, scope))
                .map_err(|e| e.to_string()),
            Locator::Css => {
                let sel = Selector::parse(value)
                    .map_err(|e| format!("invalid css selector {value:?}: {e}"))?;
                Ok(self.css(&sel, from))
            }
            Locator::TagName => {
                let sel = Selector::parse(value)
                    .map_err(|e| format!("invalid tag name {value:?}: {e}"))?;
                Ok(self.css(&sel, from))
            }
            Locator::LinkText | Locator::PartialLinkText => {
                let sel = Selector::parse("a").expect("static selector");
                Ok(self
                    .css(&sel, from)
                    .into_iter()
                    .filter(|&id| {
                        let text = self.text(id);
                        if locator == Locator::LinkText {
                            text == value
                        } else {
                            text.contains(value)
                        }
                    })
                    .collect())
            }
        }
    }

    fn css(&self, sel: &Selector, from: Option<NodeId>) -> Vec<NodeId> {
        match from.and_then(|id| self.element(id)) {
            Some(el) => el.select(sel).map(|e| e.id()).collect(),
            None => self.html.select(sel).map(|e| e.id()).collect(),
        }
    }

    /// Rendered text approximation: text outside script and style, one
    /// line per block-level element, whitespace collapsed within lines.
    pub fn text(&self, id: NodeId) -> String {
        let Some(node) = self.html.tree.get(id) else {
            return String::new();
        };
        let mut raw = String::new();
        let mut hidden = 0usize;
        for edge in node.traverse() {
            match edge {
                Edge::Open(n) => match n.value() {
                    scraper::Node::Element(e) if is_hidden_tag(e.name()) => hidden += 1,
                    scraper::Node::Element(e) if is_block_tag(e.name()) => raw.push('\n'),
                    scraper::Node::Text(t) if hidden == 0 => raw.push_str(t),
                    _ => {}
                },
                Edge::Close(n) => match n.value() {
                    scraper::Node::Element(e) if is_hidden_tag(e.name()) => hidden -= 1,
                    scraper::Node::Element(e) if is_block_tag(e.name()) => raw.push('\n'),
                    _ => {}
                },
            }
        }
        raw.lines()
            .map(collapse)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Current value of a form control (the `value` property).
    pub fn value(&self, id: NodeId) -> String {
        if let Some(v) = self.values.get(&id) {
            return v.clone();
        }
        match self.tag(id).as_str() {
            "textarea" => self
                .element(id)
                .map(|e| e.text().collect::<String>())
                .unwrap_or_default(),
            "select" => self
                .selected_options(id)
                .first()
                .map(|&o| self.value(o))
                .unwrap_or_default(),
            "option" => self.attr(id, "value").unwrap_or_else(|| self.text(id)),
            "input" if self.is_checkable(id) => {
                self.attr(id, "value").unwrap_or_else(|| "on".into())
            }
            _ => self.attr(id, "value").unwrap_or_default(),
        }
    }

    pub fn is_selected(&self, id: NodeId) -> bool {
        match self.tag(id).as_str() {
            "option" => {
                if let Some(select) = self.owning_select(id) {
                    return self.selected_options(select).contains(&id);
                }
                self.checked
                    .get(&id)
                    .copied()
                    .unwrap_or_else(|| self.attr(id, "selected").is_some())
            }
            "input" if self.is_checkable(id) => self
                .checked
                .get(&id)
                .copied()
                .unwrap_or_else(|| self.attr(id, "checked").is_some()),
            _ => false,
        }
    }

    pub fn is_enabled(&self, id: NodeId) -> bool {
        self.attr(id, "disabled").is_none()
    }

    fn options(&self, select: NodeId) -> Vec<NodeId> {
        let sel = Selector::parse("option").expect("static selector");
        self.css(&sel, Some(select))
    }

    fn owning_select(&self, option: NodeId) -> Option<NodeId> {
        self.html
            .tree
            .get(option)?
            .ancestors()
            .find(|a| a.value().as_element().is_some_and(|e| e.name() == "select"))
            .map(|a| a.id())
    }

    fn selected_options(&self, select: NodeId) -> Vec<NodeId> {
        let options = self.options(select);
        let explicit: Vec<NodeId> = options
            .iter()
            .copied()
            .filter(|o| {
                self.checked
                    .get(o)
                    .copied()
                    .unwrap_or_else(|| self.attr(*o, "selected").is_some())
            })
            .collect();
        let multiple = self.attr(select, "multiple").is_some();
        if multiple {
            return explicit;
        }
        match explicit.last() {
            Some(&last) => vec![last],
            None => options.first().copied().into_iter().collect(),
        }
    }

    /// Sends keys to a text control: appends to its current value.
    pub fn send_keys(&mut self, id: NodeId, text: &str) -> Result<(), String> {
        match self.tag(id).as_str() {
            "textarea" => {}
            "input" if !self.is_checkable(id) => {}
            "input" => return self.click(id).map(|_| ()),
            other => return Err(format!("element <{other}> is not keyboard-interactable")),
        }
        if !self.is_enabled(id) {
            return Err("element is disabled".into());
        }
        let mut value = self.value(id);
        value.push_str(text);
        self.values.insert(id, value);
        Ok(())
    }

    pub fn clear(&mut self, id: NodeId) -> Result<(), String> {
        match self.tag(id).as_str() {
            "textarea" | "input" => {
                self.values.insert(id, String::new());
                Ok(())
            }
            other => Err(format!("element <{other}> is not editable")),
        }
    }

    fn select_option_node(&mut self, option: NodeId) {
        if let Some(select) = self.owning_select(option) {
            if self.attr(select, "multiple").is_none() {
                for o in self.options(select) {
                    self.checked.insert(o, false);
                }
                self.checked.insert(option, true);
            } else {
                let now = !self.is_selected(option);
                self.checked.insert(option, now);
            }
        } else {
            self.checked.insert(option, true);
        }
    }

    /// Applies a click. Returns the request to perform when the click
    /// follows a link or submits a form.
    pub fn click(&mut self, id: NodeId) -> Result<Option<Request>, String> {
        if self.element(id).is_none() {
            return Err("not an element".into());
        }
        if !self.is_enabled(id) {
            return Ok(None);
        }
        match self.tag(id).as_str() {
            "option" => {
                self.select_option_node(id);
                Ok(None)
            }
            "input" => match self.input_type(id).as_str() {
                "checkbox" => {
                    let now = !self.is_selected(id);
                    self.checked.insert(id, now);
                    Ok(None)
                }
                "radio" => {
                    if let Some(name) = self.attr(id, "name") {
                        let form = self.form_of(id);
                        let group: Vec<NodeId> = self
                            .find(Locator::Css, "input[type=radio]", None)
                            .unwrap_or_default()
                            .into_iter()
                            .filter(|&r| {
                                self.attr(r, "name").as_deref() == Some(&name)
                                    && self.form_of(r) == form
                            })
                            .collect();
                        for r in group {
                            self.checked.insert(r, false);
                        }
                    }
                    self.checked.insert(id, true);
                    Ok(None)
                }
                "submit" | "image" => Ok(self.form_of(id).map(|f| self.submission(f, Some(id)))),
                _ => Ok(None),
            },
            "button" => {
                let kind = self
                    .attr(id, "type")
                    .unwrap_or_else(|| "submit".into())
                    .to_ascii_lowercase();
                if kind == "submit" {
                    Ok(self.form_of(id).map(|f| self.submission(f, Some(id))))
                } else {
                    Ok(None)
                }
            }
            _ => {
                let link = self
                    .html
                    .tree
                    .get(id)
                    .into_iter()
                    .flat_map(|n| std::iter::once(n).chain(n.ancestors()))
                    .find(|a| {
                        a.value()
                            .as_element()
                            .is_some_and(|e| e.name() == "a" && e.attr("href").is_some())
                    })
                    .map(|a| a.id());
                Ok(link
                    .and_then(|a| self.attr(a, "href"))
                    .and_then(|href| self.url.join(&href).ok())
                    .filter(|u| matches!(u.scheme(), "http" | "https"))
                    .map(Request::get))
            }
        }
    }

    /// The form a control belongs to: its `form` attribute target or its
    /// nearest ancestor form.
    pub fn form_of(&self, id: NodeId) -> Option<NodeId> {
        if self.tag(id) == "form" {
            return Some(id);
        }
        if let Some(form_id) = self.attr(id, "form") {
            return self
                .find(Locator::Css, "form[id]", None)
                .ok()?
                .into_iter()
                .find(|&f| self.attr(f, "id").as_deref() == Some(form_id.as_str()));
        }
        self.html
            .tree
            .get(id)?
            .ancestors()
            .find(|a| a.value().as_element().is_some_and(|e| e.name() == "form"))
            .map(|a| a.id())
    }

    /// First submit control of a form, if any.
    pub fn submitter_of(&self, form: NodeId) -> Option<NodeId> {
        self.find(
            Locator::XPath,
            ".//*[(self::button and (not(@type) or translate(@type,'SUBMIT','submit')='submit')) \
             or (self::input and (translate(@type,'SUBMIT','submit')='submit' or @type='image'))]",
            Some(form),
        )
        .ok()?
        .into_iter()
        .next()
    }

    /// Builds the request that submitting `form` performs.
    pub fn submission(&self, form: NodeId, submitter: Option<NodeId>) -> Request {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let controls = self
            .find(Locator::Css, "input, select, textarea, button", None)
            .unwrap_or_default();
        for c in controls {
            if self.form_of(c) != Some(form) || !self.is_enabled(c) {
                continue;
            }
            let Some(name) = self.attr(c, "name").filter(|n| !n.is_empty()) else {
                continue;
            };
            match self.tag(c).as_str() {
                "select" => {
                    for o in self.selected_options(c) {
                        pairs.push((name.clone(), self.value(o)));
                    }
                }
                "textarea" => pairs.push((name, self.value(c))),
                "button" => {
                    if Some(c) == submitter {
                        pairs.push((name, self.attr(c, "value").unwrap_or_default()));
                    }
                }
                _ => match self.input_type(c).as_str() {
                    "checkbox" | "radio" => {
                        if self.is_selected(c) {
                            pairs.push((name, self.value(c)));
                        }
                    }
                    "submit" | "image" => {
                        if Some(c) == submitter {
                            pairs.push((name, self.value(c)));
                        }
                    }
                    "reset" | "file" => {}
                    _ => pairs.push((name, self.value(c))),
                },
            }
        }
        let encoded = url::form_urlencoded::Serializer::new(String::new())
            .extend_pairs(pairs.iter())
            .finish();
        let action = submitter
            .and_then(|s| self.attr(s, "formaction"))
            .or_else(|| self.attr(form, "action"))
            .filter(|a| !a.is_empty())
            .and_then(|a| self.url.join(&a).ok())
            .unwrap_or_else(|| self.url.clone());
        let method = submitter
            .and_then(|s| self.attr(s, "formmethod"))
            .or_else(|| self.attr(form, "method"))
            .unwrap_or_default();
        if method.eq_ignore_ascii_case("post") {
            Request {
                method: Method::Post,
                url: action,
                body: Some(encoded),
            }
        } else {
            let mut url = action;
            url.set_query(if encoded.is_empty() {
                None
            } else {
                Some(&encoded)
            });
            url.set_fragment(None);
            Request::get(url)
        }
    }
}

fn is_hidden_tag(name: &str) -> bool {
    matches!(name, "script" | "style" | "head" | "template" | "noscript")
}

fn is_block_tag(name: &str) -> bool {
    matches!(
        name,
        "address"
            | "article"
            | "aside"
            | "blockquote"
            | "br"
            | "dd"
            | "div"
            | "dl"
            | "dt"
            | "fieldset"
            | "figure"
            | "footer"
            | "form"
            | "h1"
            | "h2"
            | "h3"
            | "h4"
            | "h5"
            | "h6"
            | "header"
            | "hr"
            | "li"
            | "main"
            | "nav"
            | "ol"
            | "option"
            | "p"
            | "pre"
            | "section"
            | "table"
            | "tr"
            | "ul"
    )
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const FORM: &str = r#"<html><head><title> DSAR  form </title></head><body>
      <form id="f" action="/submit" method="post">
        <input type="hidden" name="scenario" value="happy">
        <input id="email" name="email" value="a@">
        <select id="fmt" name="dataFormat"><option value="json">JSON</option><option>html</option></select>
        <input type="checkbox" id="c1" name="cat" value="orders">
        <input type="radio" id="r1" name="range" value="all-time" checked>
        <input type="radio" id="r2" name="range" value="custom">
        <textarea id="note" name="note">hi</textarea>
        <input name="off" value="x" disabled>
        <button id="go" name="action" value="send">Send</button>
      </form>
      <a id="next" href="../other?x=1"><span id="inner">Next page</span></a>
    </body></html>"#;

    fn page() -> Page {
        Page::new(Url::parse("http://h/s/privacy/dsar").unwrap(), FORM, 1)
    }

    fn by_id(p: &Page, id: &str) -> NodeId {
        p.find(Locator::Css, &format!("#{id}"), None).unwrap()[0]
    }

    #[test]
    fn initial_values() {
        let p = page();
        assert_eq!(p.title(), "DSAR form");
        assert_eq!(p.value(by_id(&p, "email")), "a@");
        assert_eq!(p.value(by_id(&p, "fmt")), "json");
        assert_eq!(p.value(by_id(&p, "note")), "hi");
        assert!(p.is_selected(by_id(&p, "r1")));
        assert!(!p.is_selected(by_id(&p, "c1")));
    }

    #[test]
    fn typing_appends_and_clear_empties() {
        let mut p = page();
        let email = by_id(&p, "email");
        p.send_keys(email, "b.example").unwrap();
        assert_eq!(p.value(email), "a@b.example");
        p.clear(email).unwrap();
        p.send_keys(email, "z").unwrap();
        assert_eq!(p.value(email), "z");
        assert!(p.send_keys(by_id(&p, "next"), "x").is_err());
    }

    #[test]
    fn submitting_serializes_controls() {
        let mut p = page();
        let fmt = by_id(&p, "fmt");
        let html_opt = p.find(Locator::XPath, ".//option[2]", Some(fmt)).unwrap()[0];
        p.click(html_opt).unwrap();
        p.click(by_id(&p, "c1")).unwrap();
        p.click(by_id(&p, "r2")).unwrap();
        assert!(!p.is_selected(by_id(&p, "r1")));
        let req = p.click(by_id(&p, "go")).unwrap().unwrap();
        assert_eq!(req.method, Method::Post);
        assert_eq!(req.url.as_str(), "http://h/submit");
        assert_eq!(
            req.body.as_deref(),
            Some("scenario=happy&email=a%40&dataFormat=html&cat=orders&range=custom&note=hi&action=send")
        );
    }

    #[test]
    fn get_forms_put_fields_in_query() {
        let src =
            r#"<form action="/search"><input name="q" value="a b"><input type="submit"></form>"#;
        let p = Page::new(Url::parse("http://h/").unwrap(), src, 1);
        let form = p.find(Locator::TagName, "form", None).unwrap()[0];
        let req = p.submission(form, p.submitter_of(form));
        assert_eq!(req.url.as_str(), "http://h/search?q=a+b");
        assert!(req.body.is_none());
    }

    #[test]
    fn clicking_inside_link_navigates() {
        let mut p = page();
        let req = p.click(by_id(&p, "inner")).unwrap().unwrap();
        assert_eq!(req.url.as_str(), "http://h/s/other?x=1");
        assert_eq!(
            p.find(Locator::LinkText, "Next page", None).unwrap().len(),
            1
        );
        assert_eq!(
            p.find(Locator::PartialLinkText, "Next", None)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn submitter_lookup() {
        let p = page();
        let form = by_id(&p, "f");
        assert_eq!(p.submitter_of(form), Some(by_id(&p, "go")));
        assert_eq!(p.form_of(by_id(&p, "email")), Some(form));
        assert_eq!(p.form_of(by_id(&p, "next")), None);
    }

    #[test]
    fn invalid_selectors_are_errors() {
        let p = page();
        assert!(p.find(Locator::Css, "##", None).is_err());
        assert!(p.find(Locator::XPath, "//[", None).is_err());
    }
}
