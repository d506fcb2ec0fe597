#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{ExitStatus, Output, Stdio};
use std::sync::Arc;
use std::time::Duration;

use dara_browser::BrowserServer;
use dara_engine::ExecutionSignal;
use dara_repository::{RepoClient, RepoServer, Store};
use dara_sandbox::{fixture_document, provider_name, SandboxServer, Scenario};
use tokio::io::{AsyncBufReadExt, BufReader, Lines};
use tokio::process::{Child, ChildStdout, Command};
use url::Url;

pub fn workspace(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

pub fn dara_command() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dara"));
    cmd.env_remove("DARA_REPO")
        .env_remove("DARA_BROWSER")
        .kill_on_drop(true);
    cmd
}

pub async fn dara<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    dara_command().args(args).output().await.expect("dara runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).expect("utf-8 output")
}

/// Every stdout line as a signal; panics on a line that is not one.
pub fn signals(out: &Output) -> Vec<ExecutionSignal> {
    text(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("not a signal line {l:?}: {e}")))
        .collect()
}

pub fn kinds(signals: &[ExecutionSignal]) -> Vec<&'static str> {
    signals.iter().map(|s| s.kind.as_str()).collect()
}

/// A `dara` server process, started and waited on until it prints its
/// `listening on` line.
pub struct Daemon {
    child: Child,
    pub url: Url,
    pub banner: Vec<String>,
    lines: Lines<BufReader<ChildStdout>>,
}

impl Daemon {
    /// `Err` holds the exit status and stderr of a process that quit
    /// before listening.
    pub async fn try_spawn<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Result<Daemon, (i32, String)> {
        let mut child = dara_command()
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("dara starts");
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let mut banner = Vec::new();
        let found = tokio::time::timeout(Duration::from_secs(20), async {
            while let Some(line) = lines.next_line().await.unwrap() {
                banner.push(line.clone());
                if let Some((_, url)) = line.split_once(" listening on ") {
                    return Some(Url::parse(url).unwrap());
                }
            }
            None
        })
        .await
        .expect("daemon started in time");
        match found {
            Some(url) => {
                // the banner lines that follow the address come promptly
                let mut d = Daemon {
                    child,
                    url,
                    banner,
                    lines,
                };
                let more = d.read_lines(Duration::from_millis(50)).await;
                d.banner.extend(more);
                Ok(d)
            }
            None => {
                let out = child.wait_with_output().await.unwrap();
                Err((out.status.code().unwrap_or(-1), text(&out.stderr)))
            }
        }
    }

    pub async fn spawn<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Daemon {
        match Self::try_spawn(args).await {
            Ok(d) => d,
            Err((code, stderr)) => panic!("daemon exited with {code}: {stderr}"),
        }
    }

    /// Lines printed within `quiet` of each other.
    pub async fn read_lines(&mut self, quiet: Duration) -> Vec<String> {
        let mut out = Vec::new();
        while let Ok(Ok(Some(line))) = tokio::time::timeout(quiet, self.lines.next_line()).await {
            out.push(line);
        }
        out
    }

    /// Waits for a banner line starting with `prefix`.
    pub async fn wait_for_line(&mut self, prefix: &str) -> String {
        if let Some(l) = self.banner.iter().find(|l| l.starts_with(prefix)) {
            return l.clone();
        }
        let found = tokio::time::timeout(Duration::from_secs(20), async {
            while let Some(line) = self.lines.next_line().await.unwrap() {
                self.banner.push(line.clone());
                if line.starts_with(prefix) {
                    return line;
                }
            }
            panic!("daemon ended before printing {prefix:?}")
        });
        found.await.expect("line in time")
    }

    pub fn pid(&self) -> u32 {
        self.child.id().expect("still running")
    }

    /// SIGTERM, then wait for a clean exit.
    pub async fn terminate(mut self) -> ExitStatus {
        let pid = self.pid().to_string();
        Command::new("kill")
            .args(["-TERM", &pid])
            .status()
            .await
            .unwrap();
        tokio::time::timeout(Duration::from_secs(20), self.child.wait())
            .await
            .expect("daemon stopped in time")
            .unwrap()
    }
}

/// Repository, browser and sandbox in-process, with one published workflow
/// per scenario.
pub struct Stack {
    pub store: tempfile::TempDir,
    pub repo: RepoServer,
    pub browser: BrowserServer,
    pub site: SandboxServer,
}

fn local() -> std::net::SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

impl Stack {
    pub async fn start(scenarios: Vec<Scenario>) -> Stack {
        let store = tempfile::tempdir().unwrap();
        let repo = RepoServer::start(Arc::new(Store::open(store.path()).unwrap()), local())
            .await
            .unwrap();
        let browser = BrowserServer::start(local()).await.unwrap();
        let site = SandboxServer::start(scenarios, local()).await.unwrap();
        let client = RepoClient::new(repo.url());
        for s in site.scenarios() {
            let doc = fixture_document(s, &site.url()).unwrap();
            dara_cli::serve::publish(&client, &doc).await.unwrap();
        }
        Stack {
            store,
            repo,
            browser,
            site,
        }
    }

    pub fn client(&self) -> RepoClient {
        RepoClient::new(self.repo.url())
    }

    pub fn run_args(&self, scenario: &str) -> Vec<String> {
        let s = self.site.scenario(scenario).expect("scenario served");
        vec![
            "run".into(),
            "--repo".into(),
            self.repo.url().to_string(),
            "--browser".into(),
            self.browser.url().to_string(),
            "--provider".into(),
            provider_name(s),
        ]
    }
}

/// An address nothing listens on.
pub fn dead_url() -> Url {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    Url::parse(&format!("http://{addr}/")).unwrap()
}
