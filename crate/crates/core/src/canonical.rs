//! Canonical byte form and content hash of a document.
//!
//! The canonical form is compact JSON with object keys sorted by their UTF-8
//! bytes at every level, strings escaped minimally (non-ASCII written raw),
//! numbers in their shortest round-trip form, and `meta._hash` left out.
//! The document hash is the SHA-256 of those bytes, in lowercase hex.

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::document::DarpalDocument;
use crate::parse::DocumentError;
use crate::validate::{validate_document, HASH_PATH};

pub fn canonicalize(doc: &DarpalDocument) -> Result<Vec<u8>, DocumentError> {
    let report = validate_document(doc);
    if report.errors().any(|f| f.path != HASH_PATH) {
        return Err(DocumentError::NotValidated(report));
    }
    Ok(canonical_bytes(doc))
}

/// Canonical bytes without the validation gate.
pub(crate) fn canonical_bytes(doc: &DarpalDocument) -> Vec<u8> {
    let mut value = serde_json::to_value(doc).expect("document serializes");
    if let Some(meta) = value.get_mut("meta").and_then(Value::as_object_mut) {
        meta.remove("_hash");
    }
    let mut out = Vec::with_capacity(1024);
    write_canonical(&value, &mut out);
    out
}

/// Writes `value` in canonical form. Key order is established here rather
/// than relying on the map type, which may preserve insertion order
/// depending on enabled features.
pub fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => out.extend_from_slice(n.to_string().as_bytes()),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_canonical(item, out);
            }
            out.push(b'}');
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    let encoded = serde_json::to_string(s).expect("strings serialize");
    out.extend_from_slice(encoded.as_bytes());
}

pub fn compute_hash(doc: &DarpalDocument) -> Result<String, DocumentError> {
    let bytes = canonicalize(doc)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `true` iff the embedded `meta._hash` matches the content.
pub fn verify_hash(doc: &DarpalDocument) -> Result<bool, DocumentError> {
    let report = validate_document(doc);
    if !report.valid {
        return Err(DocumentError::NotValidated(report));
    }
    let expected = hex::encode(Sha256::digest(canonical_bytes(doc)));
    Ok(doc.meta.hash.as_deref() == Some(expected.as_str()))
}

/// Returns a copy of `doc` with `meta._hash` set to its content hash.
pub fn with_embedded_hash(doc: &DarpalDocument) -> Result<DarpalDocument, DocumentError> {
    let hash = compute_hash(doc)?;
    let mut out = doc.clone();
    out.meta.hash = Some(hash);
    Ok(out)
}
