use std::fmt;

/// A request parameter a template can reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParamPath {
    /// `all-time`, or `START..END` for a custom range.
    TimeRange,
    /// `all-time` or `custom`.
    TimeRangeKind,
    /// ISO date, empty for all-time.
    TimeRangeStart,
    TimeRangeEnd,
    DataFormat,
    MediaQuality,
    Extra(String),
}

impl ParamPath {
    pub fn parse(path: &str) -> Option<Self> {
        Some(match path {
            "timeRange" => ParamPath::TimeRange,
            "timeRange.kind" => ParamPath::TimeRangeKind,
            "timeRange.start" => ParamPath::TimeRangeStart,
            "timeRange.end" => ParamPath::TimeRangeEnd,
            "dataFormat" => ParamPath::DataFormat,
            "mediaQuality" => ParamPath::MediaQuality,
            other => {
                let name = other.strip_prefix("additionalProperties.")?;
                if name.is_empty() || name.contains('.') {
                    return None;
                }
                ParamPath::Extra(name.to_string())
            }
        })
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPath::TimeRange => f.write_str("timeRange"),
            ParamPath::TimeRangeKind => f.write_str("timeRange.kind"),
            ParamPath::TimeRangeStart => f.write_str("timeRange.start"),
            ParamPath::TimeRangeEnd => f.write_str("timeRange.end"),
            ParamPath::DataFormat => f.write_str("dataFormat"),
            ParamPath::MediaQuality => f.write_str("mediaQuality"),
            ParamPath::Extra(name) => write!(f, "additionalProperties.{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Placeholder(ParamPath),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
    #[error("unmatched `}}}}` at byte {0}")]
    StrayClose(usize),
    #[error("placeholder {0:?} must have the form param.<path>")]
    NotAParam(String),
    #[error("unknown parameter path {0:?}")]
    UnknownPath(String),
}

/// A value or URL with `{{param.<path>}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(input: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = input;
        let mut offset = 0;
        loop {
            let open = rest.find("{{");
            let close = rest.find("}}");
            match (open, close) {
                (None, None) => {
                    literal.push_str(rest);
                    break;
                }
                (None, Some(c)) => return Err(TemplateError::StrayClose(offset + c)),
                (Some(o), Some(c)) if c < o => return Err(TemplateError::StrayClose(offset + c)),
                (Some(o), _) => {
                    literal.push_str(&rest[..o]);
                    let after = &rest[o + 2..];
                    let end = after
                        .find("}}")
                        .ok_or(TemplateError::Unterminated(offset + o))?;
                    let inner = &after[..end];
                    if inner.contains("{{") {
                        return Err(TemplateError::Unterminated(offset + o));
                    }
                    let name = inner.trim();
                    let path = name
                        .strip_prefix("param.")
                        .ok_or_else(|| TemplateError::NotAParam(name.to_string()))?;
                    let param = ParamPath::parse(path)
                        .ok_or_else(|| TemplateError::UnknownPath(path.to_string()))?;
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Placeholder(param));
                    let consumed = o + 2 + end + 2;
                    offset += consumed;
                    rest = &rest[consumed..];
                }
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Template { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &ParamPath> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Placeholder(p) => Some(p),
            Segment::Literal(_) => None,
        })
    }

    /// Substitutes every placeholder with `lookup`'s answer.
    pub fn render<E>(
        &self,
        mut lookup: impl FnMut(&ParamPath) -> Result<String, E>,
    ) -> Result<String, E> {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => out.push_str(text),
                Segment::Placeholder(path) => out.push_str(&lookup(path)?),
            }
        }
        Ok(out)
    }
}
