//! The `dara` command line.
//!
//! | Exit | Meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | a document failed validation or its hash check |
//! | 2 | unreadable or unparsable input, bad arguments |
//! | 3 | the run needs user interaction |
//! | 4 | the run ended in an error or could not start |
//! | 5 | repository unreachable |
//! | 6 | browser-control server unreachable |
//! | 7 | port in use |

pub mod bridge;
pub mod exit;
pub mod hash;
pub mod run;
pub mod runner;
pub mod serve;
pub mod validate;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dara_core::workflow::TimeRangeSelection;
use dara_sandbox::Scenario;
use url::Url;

pub use exit::Exit;

#[derive(Debug, Parser)]
#[command(
    name = "dara",
    version,
    about = "Validate, store and execute DARPAL access-request workflows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate documents; directories contribute their *.darpal.json files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print a document's canonical hash.
    Hash {
        path: PathBuf,
        /// Embed the hash as meta._hash and rewrite the file.
        #[arg(long)]
        write: bool,
    },
    /// Execute a provider's workflow from the repository.
    Run(RunArgs),
    /// Serve the sandbox provider site.
    Sandbox(SandboxArgs),
    /// Serve the process repository.
    ServeRepo(ServeRepoArgs),
    /// Serve the headless WebDriver browser.
    Browser(ServerArgs),
    /// Serve the engine bridge for the dashboard.
    Bridge(BridgeArgs),
}

fn pair(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected NAME=VALUE, got {s:?}")),
    }
}

/// `Url::join` drops the last path segment of a base without a trailing
/// slash.
fn base_url(s: &str) -> Result<Url, String> {
    let mut url = Url::parse(s).map_err(|e| format!("{s:?}: {e}"))?;
    if url.cannot_be_a_base() {
        return Err(format!("{s:?} is not an absolute http URL"));
    }
    if !url.path().ends_with('/') {
        let path = format!("{}/", url.path());
        url.set_path(&path);
    }
    Ok(url)
}

#[derive(Debug, Clone, Args)]
pub struct Endpoints {
    #[arg(long, env = "DARA_REPO", default_value = "http://127.0.0.1:8080/", value_parser = base_url)]
    pub repo: Url,
    #[arg(long, env = "DARA_BROWSER", default_value = "http://127.0.0.1:4444/", value_parser = base_url)]
    pub browser: Url,
}

#[derive(Debug, Clone, Args)]
pub struct TimeoutArgs {
    #[arg(long, default_value_t = dara_engine::DEFAULT_PAGE_TIMEOUT_MS)]
    pub page_timeout_ms: u64,
    #[arg(long, default_value_t = dara_engine::DEFAULT_ELEMENT_TIMEOUT_MS)]
    pub element_timeout_ms: u64,
    #[arg(long, default_value_t = dara_engine::DEFAULT_RUN_CEILING_MS)]
    pub run_ceiling_ms: u64,
}

impl TimeoutArgs {
    fn timeouts(&self) -> runner::Timeouts {
        runner::Timeouts {
            page_ms: self.page_timeout_ms,
            element_ms: self.element_timeout_ms,
            ceiling_ms: self.run_ceiling_ms,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub endpoints: Endpoints,
    #[arg(long)]
    pub provider: String,
    /// `all` or START..END with ISO dates; defaults to all.
    #[arg(long, value_name = "all|START..END")]
    pub time_range: Option<TimeRangeSelection>,
    /// Data format id; defaults to the first the provider lists.
    #[arg(long = "format", value_name = "ID")]
    pub format: Option<String>,
    #[arg(long, value_name = "ID")]
    pub media_quality: Option<String>,
    /// Additional parameter value; repeat for several values.
    #[arg(long = "extra", value_name = "NAME=VALUE", value_parser = pair)]
    pub extras: Vec<(String, String)>,
    /// Cookie set on the provider's origin before the run.
    #[arg(long = "cookie", value_name = "NAME=VALUE", value_parser = pair)]
    pub cookies: Vec<(String, String)>,
    /// Where to write the execution result.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Human-readable signal lines instead of JSON.
    #[arg(long)]
    pub pretty: bool,
    #[command(flatten)]
    pub timeouts: TimeoutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServerArgs {
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
    /// 0 picks a free port.
    #[arg(long)]
    pub port: u16,
}

impl ServerArgs {
    fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }
}

#[derive(Debug, Args)]
pub struct SandboxArgs {
    #[command(flatten)]
    pub server: ServerArgs,
    /// Built-in scenario, `slow:MS`, or `ALIAS=SCENARIO`; repeatable.
    /// Defaults to every built-in scenario.
    #[arg(long = "scenario", value_name = "SCENARIO")]
    pub scenarios: Vec<Scenario>,
    /// Write the received requests here on shutdown.
    #[arg(long, value_name = "PATH")]
    pub journal: Option<PathBuf>,
    /// Store a workflow document for every scenario in this repository.
    #[arg(long, value_name = "URL", value_parser = base_url)]
    pub publish: Option<Url>,
}

#[derive(Debug, Args)]
pub struct ServeRepoArgs {
    #[command(flatten)]
    pub server: ServerArgs,
    #[arg(long, value_name = "DIR")]
    pub store: PathBuf,
    /// Store every *.darpal.json in DIR before serving.
    #[arg(long, value_name = "DIR")]
    pub seed: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BridgeArgs {
    #[command(flatten)]
    pub server: ServerArgs,
    #[command(flatten)]
    pub endpoints: Endpoints,
    #[command(flatten)]
    pub timeouts: TimeoutArgs,
}

fn run_request(args: &RunArgs) -> runner::RunRequest {
    let mut extras = std::collections::BTreeMap::<String, Vec<String>>::new();
    for (k, v) in &args.extras {
        extras.entry(k.clone()).or_default().push(v.clone());
    }
    runner::RunRequest {
        provider: args.provider.clone(),
        selections: runner::Selections {
            time_range: args.time_range.clone(),
            data_format: args.format.clone(),
            media_quality: args.media_quality.clone(),
            extras,
        },
        cookies: args.cookies.clone(),
        timeouts: args.timeouts.timeouts(),
    }
}

async fn cmd_bridge(args: BridgeArgs) -> Exit {
    let app = bridge::router(
        args.endpoints.repo,
        args.endpoints.browser,
        args.timeouts.timeouts(),
    );
    let server = match bridge::BridgeServer::start(args.server.addr(), app).await {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
            eprintln!("bridge: port in use: {}", args.server.addr());
            return Exit::PortInUse;
        }
        Err(e) => {
            eprintln!("bridge: {e}");
            return Exit::Error;
        }
    };
    println!("bridge listening on {}", server.url());
    serve::shutdown_signal().await;
    server.stop().await;
    Exit::Success
}

pub async fn dispatch(cli: Cli) -> Exit {
    match cli.command {
        Command::Validate { paths } => validate::cmd_validate(
            &paths,
            &mut std::io::stdout().lock(),
            &mut std::io::stderr(),
        ),
        Command::Hash { path, write } => hash::cmd_hash(
            &path,
            write,
            &mut std::io::stdout().lock(),
            &mut std::io::stderr(),
        ),
        Command::Run(args) => {
            let opts = run::RunOptions {
                request: run_request(&args),
                repo: args.endpoints.repo,
                browser: args.endpoints.browser,
                out: args.out,
                pretty: args.pretty,
            };
            run::cmd_run(opts, std::io::stdout()).await
        }
        Command::Sandbox(args) => {
            serve::cmd_sandbox(serve::SandboxOptions {
                scenarios: args.scenarios,
                addr: args.server.addr(),
                journal: args.journal,
                publish: args.publish,
            })
            .await
        }
        Command::ServeRepo(args) => {
            serve::cmd_serve_repo(&args.store, args.server.addr(), args.seed.as_deref()).await
        }
        Command::Browser(args) => serve::cmd_browser(args.addr()).await,
        Command::Bridge(args) => cmd_bridge(args).await,
    }
}

/// Entry point of the `dara` binary. Logs go to stderr, filtered by
/// `RUST_LOG` (default `warn`).
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime starts");
    runtime.block_on(dispatch(cli)).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn run_flags_parse() {
        let cli = Cli::try_parse_from([
            "dara",
            "run",
            "--repo",
            "http://localhost:1/api",
            "--provider",
            "google",
            "--time-range",
            "2024-01-01..2024-02-01",
            "--format",
            "csv",
            "--extra",
            "scope=ads",
            "--extra",
            "scope=search",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else {
            panic!()
        };
        assert_eq!(args.endpoints.repo.as_str(), "http://localhost:1/api/");
        let req = run_request(&args);
        assert_eq!(req.selections.extras["scope"], vec!["ads", "search"]);
        assert_eq!(
            req.selections.time_range.unwrap().to_string(),
            "2024-01-01..2024-02-01"
        );
    }

    #[test]
    fn bad_pairs_and_ranges_are_rejected() {
        assert!(pair("novalue").is_err());
        assert!(Cli::try_parse_from([
            "dara",
            "run",
            "--provider",
            "x",
            "--time-range",
            "yesterday"
        ])
        .is_err());
    }
}
