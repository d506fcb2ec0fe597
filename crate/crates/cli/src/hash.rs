use std::io::Write;
use std::path::Path;

use dara_core::{compute_hash, parse_document_bytes, with_embedded_hash, DocumentError};

use crate::exit::Exit;

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Prints the document's digest. With `write`, embeds it as `meta._hash`
/// and rewrites the file in canonical pretty form; a second run leaves the
/// file untouched.
pub fn cmd_hash(path: &Path, write: bool, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "{}: cannot read: {e}", path.display());
            return Exit::BadInput;
        }
    };
    let doc = match parse_document_bytes(&bytes) {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(err, "{}: cannot parse: {e}", path.display());
            return Exit::BadInput;
        }
    };
    let digest = match compute_hash(&doc) {
        Ok(d) => d,
        Err(DocumentError::NotValidated(report)) => {
            let _ = writeln!(err, "{}: cannot hash an invalid document", path.display());
            for f in report.errors() {
                let _ = writeln!(err, "{f}");
            }
            return Exit::Invalid;
        }
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", path.display());
            return Exit::BadInput;
        }
    };
    let _ = writeln!(out, "{digest}");

    if write {
        let hashed = with_embedded_hash(&doc).expect("document hashed above");
        let rendered = format!("{}\n", hashed.to_json_pretty());
        if rendered.as_bytes() != bytes.as_slice() {
            if let Err(e) = write_atomically(path, rendered.as_bytes()) {
                let _ = writeln!(err, "{}: cannot write: {e}", path.display());
                return Exit::BadInput;
            }
        }
    } else if let Some(embedded) = doc.meta.hash.as_deref().filter(|h| *h != digest) {
        let _ = writeln!(err, "{}: embedded hash {embedded} differs", path.display());
    }
    Exit::Success
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.darpal.json");
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/minimal.darpal.json");
        std::fs::copy(src, &path).unwrap();
        let mut sink = Vec::new();
        assert_eq!(
            cmd_hash(&path, true, &mut Vec::new(), &mut sink),
            Exit::Success
        );
        let first = std::fs::read(&path).unwrap();
        assert_eq!(
            cmd_hash(&path, true, &mut Vec::new(), &mut sink),
            Exit::Success
        );
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert!(dara_core::verify_hash(&parse_document_bytes(&first).unwrap()).unwrap());
    }
}
