use serde_json::Value;

use crate::document::DarpalDocument;
use crate::report::ValidationReport;

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("structure error at {path}: {message}")]
    Structure { path: String, message: String },
    #[error("document does not validate ({} error(s))", .0.errors().count())]
    NotValidated(ValidationReport),
}

const SECTIONS: [&str; 3] = ["meta", "requestParameter", "requestInterface"];

/// Parses `.darpal.json` text.
///
/// Beyond JSON syntax, only the presence of the three top-level sections is
/// required here; missing fields inside them are left for validation.
/// Unknown fields are kept at every level.
pub fn parse_document(input: &str) -> Result<DarpalDocument, DocumentError> {
    let value: Value = serde_json::from_str(input).map_err(|e| DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    document_from_value(value)
}

pub fn parse_document_bytes(input: &[u8]) -> Result<DarpalDocument, DocumentError> {
    let text = std::str::from_utf8(input).map_err(|e| DocumentError::Syntax {
        line: 0,
        column: e.valid_up_to(),
        message: format!("input is not UTF-8: {e}"),
    })?;
    parse_document(text)
}

pub fn document_from_value(value: Value) -> Result<DarpalDocument, DocumentError> {
    let root = value.as_object().ok_or_else(|| DocumentError::Structure {
        path: String::new(),
        message: "document root must be an object".into(),
    })?;
    for section in SECTIONS {
        match root.get(section) {
            Some(Value::Object(_)) => {}
            Some(_) => {
                return Err(DocumentError::Structure {
                    path: section.into(),
                    message: "section must be an object".into(),
                })
            }
            None => {
                return Err(DocumentError::Structure {
                    path: section.into(),
                    message: "mandatory section missing".into(),
                })
            }
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| DocumentError::Structure {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal_json() -> Value {
        json!({
            "$schemaVersion": "1.0",
            "meta": {"name": "Example", "version": "1.0"},
            "requestParameter": {
                "timeRange": {"allTime": true, "customRange": false},
                "dataFormat": ["json"]
            },
            "requestInterface": {
                "manual": {"available": false},
                "webinterface": {"available": false},
                "api": {"available": false}
            }
        })
    }

    #[test]
    fn minimal_document_parses() {
        let doc = parse_document(&minimal_json().to_string()).unwrap();
        assert_eq!(doc.name(), Some("Example"));
        assert_eq!(doc.request_interface.api.unwrap().available, Some(false));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_document("{\n  \"meta\": {,\n}").unwrap_err();
        match err {
            DocumentError::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_section_is_structure_error() {
        for section in SECTIONS {
            let mut value = minimal_json();
            value.as_object_mut().unwrap().remove(section);
            match parse_document(&value.to_string()).unwrap_err() {
                DocumentError::Structure { path, .. } => assert_eq!(path, section),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_type_reports_path() {
        let mut value = minimal_json();
        value["requestInterface"]["manual"]["available"] = json!("yes");
        match parse_document(&value.to_string()).unwrap_err() {
            DocumentError::Structure { path, .. } => {
                assert!(path.contains("manual"), "path was {path}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let mut value = minimal_json();
        value["x-origin"] = json!({"crawler": "manual", "n": [1, 2.5]});
        value["meta"]["maintainer"] = json!("someone");
        value["requestInterface"]["webinterface"]["x-note"] = json!(null);
        let doc = parse_document(&value.to_string()).unwrap();
        assert_eq!(doc.extra["x-origin"]["n"][1], json!(2.5));
        let reparsed = parse_document(&doc.to_json_pretty()).unwrap();
        assert_eq!(reparsed, doc);
        let back: Value = serde_json::from_str(&doc.to_json_pretty()).unwrap();
        assert_eq!(back, value);
    }
}
