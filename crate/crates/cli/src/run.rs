use std::io::Write;
use std::path::{Path, PathBuf};

use dara_engine::{ExecutionResult, NdjsonSink, SignalSink, WebDriver};
use dara_repository::RepoClient;
use url::Url;

use crate::exit::Exit;
use crate::hash::write_atomically;
use crate::runner::{failed_result, prepare, run_prepared, RunRequest};

pub struct RunOptions {
    pub repo: Url,
    pub browser: Url,
    pub request: RunRequest,
    pub out: Option<PathBuf>,
    pub pretty: bool,
}

fn write_result(path: &Path, result: &ExecutionResult) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(result).expect("results serialize");
    bytes.push(b'\n');
    write_atomically(path, &bytes)
}

/// Fetches, binds and executes one workflow, streaming its signals to
/// `out`. The stream always ends with exactly one terminal signal: a run
/// that cannot start emits a lone `error`.
pub async fn cmd_run<W: Write + Send>(opts: RunOptions, out: W) -> Exit {
    let sink = if opts.pretty {
        NdjsonSink::pretty(out)
    } else {
        NdjsonSink::new(out)
    };
    let repo = RepoClient::new(opts.repo);
    let driver = WebDriver::new(opts.browser);
    let provider = opts.request.provider.clone();

    let (result, exit) = match prepare(&repo, &driver, &opts.request).await {
        Ok(prepared) => {
            let (result, warning) = run_prepared(prepared, &repo, &sink).await;
            if let Some(w) = warning {
                eprintln!("dara run: {w}");
            }
            let exit = Exit::from(result.outcome);
            (result, exit)
        }
        Err(failure) => {
            eprintln!("dara run: {failure}");
            let result = failed_result(&provider, &failure.to_string());
            for s in &result.signals {
                sink.emit(s);
            }
            (result, failure.exit())
        }
    };
    if let Some(path) = &opts.out {
        if let Err(e) = write_result(path, &result) {
            eprintln!("dara run: writing {}: {e}", path.display());
            return if exit == Exit::Success {
                Exit::Error
            } else {
                exit
            };
        }
    }
    exit
}
