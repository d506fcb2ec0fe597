//! The long-running commands. Each prints `<what> listening on <url>` once
//! bound and serves until SIGINT or SIGTERM.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dara_browser::BrowserServer;
use dara_core::{with_embedded_hash, DarpalDocument, Version};
use dara_repository::{ClientError, RepoClient, RepoServer, ServeError, Store, StoreError, Stored};
use dara_sandbox::{fixture_document, provider_name, SandboxError, SandboxServer, Scenario};
use url::Url;

use crate::exit::Exit;
use crate::hash::write_atomically;

pub async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler installs");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

/// Stores `doc`, and when the repository already holds this or a newer
/// version, stores it again one version above the current one.
pub async fn publish(repo: &RepoClient, doc: &DarpalDocument) -> Result<Stored, ClientError> {
    let mut doc = doc.clone();
    loop {
        match repo.put(&doc).await {
            Err(ClientError::Api { status: 409, .. }) => {
                let provider = doc.provider().unwrap_or_default();
                let (_, current) = repo.get(&provider).await?;
                let current: Version = current
                    .meta
                    .version
                    .as_deref()
                    .unwrap_or("1.0")
                    .parse()
                    .map_err(|e| ClientError::Protocol(format!("stored version: {e}")))?;
                doc.meta.version = Some(current.bump_last().to_string());
                doc = with_embedded_hash(&doc).map_err(|e| ClientError::Protocol(e.to_string()))?;
            }
            other => return other,
        }
    }
}

pub struct SandboxOptions {
    pub scenarios: Vec<Scenario>,
    pub addr: SocketAddr,
    pub journal: Option<PathBuf>,
    pub publish: Option<Url>,
}

pub async fn cmd_sandbox(opts: SandboxOptions) -> Exit {
    let scenarios = if opts.scenarios.is_empty() {
        Scenario::all_builtin()
    } else {
        opts.scenarios
    };
    let site = match SandboxServer::start(scenarios, opts.addr).await {
        Ok(site) => site,
        Err(e @ SandboxError::PortInUse(_)) => {
            eprintln!("sandbox: {e}");
            return Exit::PortInUse;
        }
        Err(e @ SandboxError::DuplicateScenario(_)) => {
            eprintln!("sandbox: {e}");
            return Exit::BadInput;
        }
        Err(e) => {
            eprintln!("sandbox: {e}");
            return Exit::Error;
        }
    };
    println!("sandbox listening on {}", site.url());
    let scenarios: Vec<Scenario> = site.scenarios().cloned().collect();
    for s in &scenarios {
        println!(
            "scenario {} {} provider {}",
            s.name,
            site.start_url(&s.name),
            provider_name(s)
        );
    }
    if let Some(repo_url) = opts.publish {
        let repo = RepoClient::new(repo_url);
        for s in &scenarios {
            let doc = fixture_document(s, &site.url()).expect("fixture retargets");
            match publish(&repo, &doc).await {
                Ok(stored) => println!("published {} {}", stored.provider, stored.version),
                Err(e) => {
                    eprintln!("sandbox: publishing {}: {e}", provider_name(s));
                    site.stop().await;
                    return match e {
                        ClientError::Unreachable { .. } => Exit::RepositoryUnreachable,
                        _ => Exit::Error,
                    };
                }
            }
        }
    }
    shutdown_signal().await;
    let journal = site.stop().await;
    if let Some(path) = opts.journal {
        let bytes = serde_json::to_vec_pretty(&journal).expect("journal serializes");
        if let Err(e) = write_atomically(&path, &bytes) {
            eprintln!("sandbox: writing journal {}: {e}", path.display());
            return Exit::Error;
        }
    }
    Exit::Success
}

fn seed_exit(e: &StoreError) -> Exit {
    match e {
        StoreError::Malformed(_) | StoreError::Io(_) => Exit::BadInput,
        _ => Exit::Invalid,
    }
}

pub async fn cmd_serve_repo(store_dir: &Path, addr: SocketAddr, seed: Option<&Path>) -> Exit {
    let store = match Store::open(store_dir) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("repository: store {}: {e}", store_dir.display());
            return Exit::BadInput;
        }
    };
    if let Some(dir) = seed {
        let seeding = {
            let store = store.clone();
            let dir = dir.to_path_buf();
            tokio::task::spawn_blocking(move || store.seed_from_dir(&dir)).await
        };
        match seeding.expect("seeding task") {
            Ok(seeded) => println!("seeded {} providers from {}", seeded.len(), dir.display()),
            Err((path, e)) => {
                eprintln!("repository: seeding {}: {e}", path.display());
                return seed_exit(&e);
            }
        }
    }
    let server = match RepoServer::start(store, addr).await {
        Ok(s) => s,
        Err(e @ ServeError::PortInUse(_)) => {
            eprintln!("repository: {e}");
            return Exit::PortInUse;
        }
        Err(e) => {
            eprintln!("repository: {e}");
            return Exit::Error;
        }
    };
    println!("repository listening on {}", server.url());
    shutdown_signal().await;
    server.stop().await;
    Exit::Success
}

pub async fn cmd_browser(addr: SocketAddr) -> Exit {
    let server = match BrowserServer::start(addr).await {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
            eprintln!("browser: port in use: {addr}");
            return Exit::PortInUse;
        }
        Err(e) => {
            eprintln!("browser: {e}");
            return Exit::Error;
        }
    };
    println!("browser listening on {}", server.url());
    shutdown_signal().await;
    server.stop().await;
    Exit::Success
}
