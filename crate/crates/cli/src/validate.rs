use std::io::Write;
use std::path::{Path, PathBuf};

use dara_core::{parse_document_bytes, validate_all, verify_hash, ValidationReport};

use crate::exit::Exit;

/// Files named on the command line, with directories replaced by the
/// `*.darpal.json` files they contain, sorted.
pub fn expand(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for path in paths {
        let entries = match path.is_dir().then(|| std::fs::read_dir(path)) {
            Some(Ok(entries)) => entries,
            _ => {
                out.push(path.clone());
                continue;
            }
        };
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".darpal.json"))
            .collect();
        found.sort();
        out.extend(found);
    }
    out
}

/// Validates one file. `Err` means it could not be read or parsed.
///
/// A document that is otherwise valid must also carry its own hash.
pub fn check_file(path: &Path) -> Result<ValidationReport, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("cannot read: {e}"))?;
    let doc = parse_document_bytes(&bytes).map_err(|e| format!("cannot parse: {e}"))?;
    let mut report = validate_all(&doc);
    if report.valid && matches!(verify_hash(&doc), Ok(false)) {
        let computed = dara_core::compute_hash(&doc).unwrap_or_default();
        report.error(
            "meta._hash",
            format!("embedded hash does not match content (computed {computed})"),
        );
    }
    Ok(report)
}

/// Prints `FILE: valid|invalid` per document followed by its findings, one
/// per line as `path: severity: message`.
pub fn cmd_validate(paths: &[PathBuf], out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let files = expand(paths);
    if files.is_empty() {
        let _ = writeln!(err, "no documents given");
        return Exit::BadInput;
    }
    let (mut unreadable, mut invalid) = (false, false);
    for file in files {
        let shown = file.display();
        match check_file(&file) {
            Ok(report) => {
                let _ = writeln!(
                    out,
                    "{shown}: {}",
                    if report.valid { "valid" } else { "invalid" }
                );
                for finding in &report.findings {
                    let _ = writeln!(out, "{finding}");
                }
                invalid |= !report.valid;
            }
            Err(e) => {
                let _ = writeln!(err, "{shown}: {e}");
                unreadable = true;
            }
        }
    }
    if unreadable {
        Exit::BadInput
    } else if invalid {
        Exit::Invalid
    } else {
        Exit::Success
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
    }

    #[test]
    fn directories_expand_to_sorted_documents() {
        let files = expand(&[corpus()]);
        assert_eq!(files.len(), 15);
        assert!(files.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stale_hash_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let text = std::fs::read_to_string(corpus().join("apple.darpal.json")).unwrap();
        let path = dir.path().join("apple.darpal.json");
        std::fs::write(&path, text.replace("\"Apple\"", "\"Apple Inc\"")).unwrap();
        let report = check_file(&path).unwrap();
        assert!(!report.valid);
        assert!(report.has_error_at("meta._hash"));
    }

    #[test]
    fn missing_file_is_bad_input() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let exit = cmd_validate(
            &[PathBuf::from("/nonexistent.darpal.json")],
            &mut out,
            &mut err,
        );
        assert_eq!(exit, Exit::BadInput);
        assert!(String::from_utf8(err).unwrap().contains("cannot read"));
    }
}
