mod common;

use dara_core::parse::document_from_value;
use dara_core::{validate_document, MANDATORY_PATHS};
use serde_json::Value;

fn remove_path(value: &mut Value, path: &str) -> bool {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().unwrap();
    let mut cursor = value;
    for part in parts {
        match cursor.get_mut(part) {
            Some(next) => cursor = next,
            None => return false,
        }
    }
    cursor.as_object_mut().unwrap().remove(last).is_some()
}

#[test]
fn deleting_any_mandatory_field_invalidates_every_corpus_document() {
    let mut cases = 0;
    for (stem, text) in common::corpus() {
        let original: Value = serde_json::from_str(&text).unwrap();
        assert!(validate_document(&document_from_value(original.clone()).unwrap()).valid);
        for path in MANDATORY_PATHS {
            let mut value = original.clone();
            assert!(remove_path(&mut value, path), "{stem}: {path} not present");
            let report = validate_document(&document_from_value(value).unwrap());
            assert!(!report.valid, "{stem}: deleting {path} left it valid");
            assert!(
                report.has_error_at(path),
                "{stem}: deleting {path} gave {:?}",
                report.findings
            );
            cases += 1;
        }
    }
    assert_eq!(cases, 15 * 11);
}

#[test]
fn deleting_data_format_gives_exactly_one_error() {
    let (_, text) = common::corpus().into_iter().next().unwrap();
    let mut value: Value = serde_json::from_str(&text).unwrap();
    remove_path(&mut value, "requestParameter.dataFormat");
    let report = validate_document(&document_from_value(value).unwrap());
    let errors: Vec<_> = report.errors().collect();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].path, "requestParameter.dataFormat");
}
