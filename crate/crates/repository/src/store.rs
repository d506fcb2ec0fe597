//! File-backed provider store.
//!
//! Layout, one directory per provider:
//!
//! ```text
//! <root>/<provider>/current.darpal.json   bytes as received
//! <root>/<provider>/history.log           one JSON line per stored version
//! <root>/<provider>/reports.log           one JSON line per execution report
//! ```
//!
//! Documents are replaced by writing a temporary file in the same directory
//! and renaming it over the old one, so readers see either version in full.
//! Writers to one provider serialize on a per-provider lock.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use dara_core::document::is_lowercase_kebab;
use dara_core::{
    parse_document_bytes, validate_all, verify_hash, DarpalDocument, Finding, Version,
};
use serde::{Deserialize, Serialize};

pub const CURRENT: &str = "current.darpal.json";
pub const HISTORY: &str = "history.log";
pub const REPORTS: &str = "reports.log";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub version: String,
    pub hash: String,
    #[serde(rename = "storedAt")]
    pub stored_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSummary {
    pub provider: String,
    pub version: String,
    pub hash: String,
    pub verified: bool,
}

/// Result of a successful put.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stored {
    pub provider: String,
    pub version: String,
    pub hash: String,
    #[serde(rename = "storedAt")]
    pub stored_at: DateTime<Utc>,
    /// Whether the put created the provider.
    pub created: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportOutcome {
    Success,
    InteractionRequired,
    Error,
}

impl ReportOutcome {
    pub const ALL: [ReportOutcome; 3] = [
        ReportOutcome::Success,
        ReportOutcome::InteractionRequired,
        ReportOutcome::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportOutcome::Success => "success",
            ReportOutcome::InteractionRequired => "interaction-required",
            ReportOutcome::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub provider: String,
    pub outcome: ReportOutcome,
    #[serde(rename = "engineVersion")]
    pub engine_version: String,
    #[serde(rename = "reportedAt")]
    pub reported_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub provider: String,
    /// Count per outcome; every outcome is present.
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no provider {0:?}")]
    NotFound(String),
    #[error("invalid provider name {0:?}: expected lowercase-kebab")]
    BadName(String),
    #[error("document is not valid JSON: {0}")]
    Malformed(String),
    #[error("document failed validation")]
    ValidationFailed(Vec<Finding>),
    #[error("embedded hash does not match the document")]
    HashMismatch,
    #[error("version {offered} is not greater than stored version {current}")]
    VersionConflict { current: String, offered: String },
    #[error("document names provider {found:?}, not {expected:?}")]
    NameMismatch { expected: String, found: String },
    #[error("stored document for {provider:?} is corrupt: {detail}")]
    Corrupt { provider: String, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn valid_name(provider: &str) -> Result<(), StoreError> {
    if is_lowercase_kebab(provider) {
        Ok(())
    } else {
        Err(StoreError::BadName(provider.to_string()))
    }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted append is skipped
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(e) => tracing::warn!("skipping unreadable line in {}: {e}", path.display()),
        }
    }
    Ok(out)
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(value).expect("log entries serialize");
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

fn parse_version(raw: &str) -> Option<Version> {
    raw.parse().ok()
}

impl Store {
    /// Opens (creating if needed) the store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Store {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, provider: &str) -> PathBuf {
        self.root.join(provider)
    }

    fn lock(&self, provider: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table poisoned")
            .entry(provider.to_string())
            .or_default()
            .clone()
    }

    pub fn exists(&self, provider: &str) -> bool {
        is_lowercase_kebab(provider) && self.dir(provider).join(CURRENT).is_file()
    }

    /// Providers in lexicographic order.
    pub fn list(&self) -> Result<Vec<ProviderSummary>, StoreError> {
        let mut names: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(CURRENT).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| is_lowercase_kebab(n))
            .collect();
        names.sort();
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            match self.get(&name) {
                Ok((_, doc)) => out.push(ProviderSummary {
                    provider: name,
                    version: doc.meta.version.clone().unwrap_or_default(),
                    hash: doc.meta.hash.clone().unwrap_or_default(),
                    verified: doc
                        .workflow_container()
                        .and_then(|c| c.verified)
                        .unwrap_or(false),
                }),
                // deleted between listing and reading
                Err(StoreError::NotFound(_)) => {}
                Err(e @ StoreError::Corrupt { .. }) => tracing::warn!("not listing: {e}"),
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// The stored bytes and their parsed form, after checking the hash.
    pub fn get(&self, provider: &str) -> Result<(Vec<u8>, DarpalDocument), StoreError> {
        valid_name(provider)?;
        let bytes = match fs::read(self.dir(provider).join(CURRENT)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(provider.into()))
            }
            Err(e) => return Err(e.into()),
        };
        let corrupt = |detail: String| StoreError::Corrupt {
            provider: provider.to_string(),
            detail,
        };
        let doc = parse_document_bytes(&bytes).map_err(|e| corrupt(e.to_string()))?;
        if !verify_hash(&doc).map_err(|e| corrupt(e.to_string()))? {
            return Err(corrupt("hash does not verify".into()));
        }
        Ok((bytes, doc))
    }

    pub fn history(&self, provider: &str) -> Result<Vec<HistoryEntry>, StoreError> {
        valid_name(provider)?;
        if !self.exists(provider) {
            return Err(StoreError::NotFound(provider.into()));
        }
        read_lines(&self.dir(provider).join(HISTORY))
    }

    /// Validates and stores `bytes` as the current document of `provider`.
    pub fn put(&self, provider: &str, bytes: &[u8]) -> Result<Stored, StoreError> {
        valid_name(provider)?;
        let doc = parse_document_bytes(bytes).map_err(|e| StoreError::Malformed(e.to_string()))?;
        let report = validate_all(&doc);
        if !report.valid {
            return Err(StoreError::ValidationFailed(report.findings));
        }
        if !verify_hash(&doc).map_err(|e| StoreError::Malformed(e.to_string()))? {
            return Err(StoreError::HashMismatch);
        }
        let found = doc.provider().unwrap_or_default();
        if found != provider {
            return Err(StoreError::NameMismatch {
                expected: provider.to_string(),
                found,
            });
        }
        let offered_raw = doc.meta.version.clone().unwrap_or_default();
        let offered = parse_version(&offered_raw)
            .ok_or_else(|| StoreError::Malformed(format!("unparsable version {offered_raw:?}")))?;
        let hash = doc.meta.hash.clone().unwrap_or_default();

        let lock = self.lock(provider);
        let _guard = lock.lock().expect("provider lock poisoned");
        let created = match self.get(provider) {
            Ok((_, current)) => {
                let current_raw = current.meta.version.clone().unwrap_or_default();
                let current_version =
                    parse_version(&current_raw).ok_or_else(|| StoreError::Corrupt {
                        provider: provider.to_string(),
                        detail: format!("unparsable version {current_raw:?}"),
                    })?;
                if offered <= current_version {
                    return Err(StoreError::VersionConflict {
                        current: current_raw,
                        offered: offered_raw,
                    });
                }
                false
            }
            Err(StoreError::NotFound(_)) => true,
            // a corrupt current document is replaced by a valid one
            Err(StoreError::Corrupt { .. }) => false,
            Err(e) => return Err(e),
        };
        let dir = self.dir(provider);
        fs::create_dir_all(&dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(dir.join(CURRENT)).map_err(|e| e.error)?;
        let entry = HistoryEntry {
            version: offered_raw.clone(),
            hash: hash.clone(),
            stored_at: Utc::now(),
        };
        append_line(&dir.join(HISTORY), &entry)?;
        tracing::info!(provider, version = %offered_raw, created, "stored document");
        Ok(Stored {
            provider: provider.to_string(),
            version: offered_raw,
            hash,
            stored_at: entry.stored_at,
            created,
        })
    }

    /// Removes the provider with its history and reports.
    pub fn delete(&self, provider: &str) -> Result<(), StoreError> {
        valid_name(provider)?;
        let lock = self.lock(provider);
        let _guard = lock.lock().expect("provider lock poisoned");
        let dir = self.dir(provider);
        if !dir.join(CURRENT).is_file() {
            return Err(StoreError::NotFound(provider.into()));
        }
        // move aside first so readers never see a half-deleted directory
        let graveyard = tempfile::Builder::new()
            .prefix(".deleted-")
            .tempdir_in(&self.root)?;
        fs::rename(&dir, graveyard.path().join(provider))?;
        graveyard.close()?;
        tracing::info!(provider, "deleted");
        Ok(())
    }

    pub fn report(&self, report: &ExecutionReport) -> Result<(), StoreError> {
        valid_name(&report.provider)?;
        let lock = self.lock(&report.provider);
        let _guard = lock.lock().expect("provider lock poisoned");
        if !self.exists(&report.provider) {
            return Err(StoreError::NotFound(report.provider.clone()));
        }
        append_line(&self.dir(&report.provider).join(REPORTS), report)
    }

    pub fn reports(&self, provider: &str) -> Result<Vec<ExecutionReport>, StoreError> {
        valid_name(provider)?;
        if !self.exists(provider) {
            return Err(StoreError::NotFound(provider.into()));
        }
        read_lines(&self.dir(provider).join(REPORTS))
    }

    pub fn summary(&self, provider: &str) -> Result<ReportSummary, StoreError> {
        let reports = self.reports(provider)?;
        let mut counts: BTreeMap<String, u64> = ReportOutcome::ALL
            .iter()
            .map(|o| (o.as_str().to_string(), 0))
            .collect();
        for r in &reports {
            *counts.entry(r.outcome.as_str().to_string()).or_default() += 1;
        }
        Ok(ReportSummary {
            provider: provider.to_string(),
            counts,
            total: reports.len() as u64,
        })
    }

    /// Stores every `*.darpal.json` in `dir`, keyed by its normalized name.
    /// Returns the providers stored.
    pub fn seed_from_dir(&self, dir: &Path) -> Result<Vec<String>, (PathBuf, StoreError)> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| (dir.to_path_buf(), e.into()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".darpal.json"))
            .collect();
        paths.sort();
        let mut stored = Vec::new();
        for path in paths {
            let fail = |e: StoreError| (path.clone(), e);
            let bytes = fs::read(&path).map_err(|e| fail(e.into()))?;
            let doc = parse_document_bytes(&bytes)
                .map_err(|e| fail(StoreError::Malformed(e.to_string())))?;
            let provider = doc.provider().unwrap_or_default();
            match self.put(&provider, &bytes) {
                Ok(_) => stored.push(provider),
                // already seeded at this or a newer version
                Err(StoreError::VersionConflict { .. }) => stored.push(provider),
                Err(e) => return Err(fail(e)),
            }
        }
        Ok(stored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dara_core::with_embedded_hash;

    fn doc(name: &str, version: &str) -> Vec<u8> {
        let d = with_embedded_hash(&DarpalDocument::minimal(name, version)).unwrap();
        d.to_json_pretty().into_bytes()
    }

    #[test]
    fn put_get_list_delete() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.list().unwrap().is_empty());
        let bytes = doc("Example Shop", "1.0");
        let stored = store.put("example-shop", &bytes).unwrap();
        assert!(stored.created);
        assert_eq!(store.get("example-shop").unwrap().0, bytes);
        let second = store
            .put("example-shop", &doc("Example Shop", "1.1"))
            .unwrap();
        assert!(!second.created);
        assert_eq!(store.history("example-shop").unwrap().len(), 2);
        assert_eq!(store.list().unwrap()[0].version, "1.1");
        store.delete("example-shop").unwrap();
        assert!(matches!(
            store.get("example-shop"),
            Err(StoreError::NotFound(_))
        ));
        assert!(store.list().unwrap().is_empty());
        // no leftovers besides nothing at all
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn gating() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.put("shop", &doc("Shop", "2.0")).unwrap();
        assert!(matches!(
            store.put("shop", &doc("Shop", "2.0")),
            Err(StoreError::VersionConflict { .. })
        ));
        assert!(matches!(
            store.put("shop", &doc("Shop", "1.9")),
            Err(StoreError::VersionConflict { .. })
        ));
        assert!(matches!(
            store.put("other", &doc("Shop", "1.0")),
            Err(StoreError::NameMismatch { .. })
        ));
        assert!(matches!(
            store.put("shop", b"{"),
            Err(StoreError::Malformed(_))
        ));
        assert!(matches!(
            store.put("../etc", &doc("Shop", "3.0")),
            Err(StoreError::BadName(_))
        ));
        let mut tampered: serde_json::Value = serde_json::from_slice(&doc("Shop", "3.0")).unwrap();
        tampered["meta"]["_hash"] = "0".repeat(64).into();
        assert!(matches!(
            store.put("shop", tampered.to_string().as_bytes()),
            Err(StoreError::HashMismatch)
        ));
    }

    #[test]
    fn corruption_is_detected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.put("shop", &doc("Shop", "1.0")).unwrap();
        let path = dir.path().join("shop").join(CURRENT);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"1.0\"", "\"9.9\"");
        fs::write(&path, text).unwrap();
        assert!(matches!(store.get("shop"), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn torn_log_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.put("shop", &doc("Shop", "1.0")).unwrap();
        let log = dir.path().join("shop").join(HISTORY);
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(b"{\"version\":\"1.").unwrap();
        assert_eq!(store.history("shop").unwrap().len(), 1);
    }
}
