//! Every run, whatever its blocks, emits `started-execution? terminal`.

use std::net::SocketAddr;
use std::sync::OnceLock;

use axum::response::Html;
use axum::routing::get;
use axum::Router;
use dara_browser::BrowserServer;
use dara_core::workflow::{BlockKind, BoundWorkflow, Selector, SignalKind, WorkflowBlock};
use dara_engine::{
    execute, is_well_formed, reference_interpret, CollectingSink, ElementRecord, ExecutionResult,
    Outcome, PageModel, PageSnapshot, WebDriver,
};
use proptest::prelude::*;

const IDS: [&str; 4] = ["title", "go", "box", "absent"];

fn block_strategy() -> impl Strategy<Value = (BlockKind, usize, u64, Option<SignalKind>)> {
    let kind = prop_oneof![
        Just(BlockKind::WaitForElement),
        Just(BlockKind::Click),
        Just(BlockKind::FillField),
        Just(BlockKind::AssertUrl),
        Just(BlockKind::BranchOnElement),
        Just(BlockKind::Delay),
        Just(BlockKind::EmitSignal),
    ];
    let signal = prop_oneof![
        Just(None),
        Just(Some(SignalKind::StartedExecution)),
        Just(Some(SignalKind::Success)),
        Just(Some(SignalKind::InteractionRequired)),
        Just(Some(SignalKind::Error)),
    ];
    (kind, 0..IDS.len(), 0u64..30, signal)
}

fn build(start_url: &str, raw: &[(BlockKind, usize, u64, Option<SignalKind>)]) -> BoundWorkflow {
    let n = raw.len();
    let blocks = raw
        .iter()
        .enumerate()
        .map(|(i, &(kind, sel, ms, signal))| {
            let id = format!("b{i}");
            let css = Selector::css(format!("#{}", IDS[sel]));
            match kind {
                BlockKind::EmitSignal => WorkflowBlock::new(id, kind)
                    .with_signal(signal.unwrap_or(SignalKind::StartedExecution)),
                BlockKind::AssertUrl => {
                    let url = if sel % 2 == 0 {
                        start_url.to_string()
                    } else {
                        "http://elsewhere.test/".into()
                    };
                    WorkflowBlock::new(id, kind).with_url(url)
                }
                BlockKind::Delay => WorkflowBlock::new(id, kind).with_timeout(ms),
                BlockKind::BranchOnElement if i + 1 < n => {
                    let target = format!("b{}", (i + 1 + sel).min(n - 1));
                    WorkflowBlock::new(id, kind)
                        .with_selector(css)
                        .with_on_missing(target)
                }
                BlockKind::BranchOnElement => WorkflowBlock::new(id, BlockKind::WaitForElement)
                    .with_selector(css)
                    .with_timeout(ms),
                BlockKind::FillField => WorkflowBlock::new(id, kind)
                    .with_selector(css)
                    .with_value("x")
                    .with_timeout(ms),
                _ => WorkflowBlock::new(id, kind)
                    .with_selector(css)
                    .with_timeout(ms),
            }
        })
        .collect();
    BoundWorkflow {
        provider: "p".into(),
        source_hash: "0".repeat(64),
        start_url: start_url.to_string(),
        blocks,
    }
}

fn check(r: &ExecutionResult) {
    let kinds = r.signal_kinds();
    assert!(is_well_formed(&kinds), "{kinds:?}");
    assert!(r
        .signals
        .windows(2)
        .all(|w| w[0].timestamp <= w[1].timestamp));
    match r.outcome {
        Outcome::Success => assert_eq!(r.failed_block, None),
        _ => {
            if let Some(b) = &r.failed_block {
                assert_eq!(r.trace.last(), Some(b));
            }
        }
    }
    assert_eq!(kinds.last().copied(), Some(r.outcome.signal()));
}

fn model(url: &str) -> PageModel {
    PageModel {
        pages: vec![PageSnapshot {
            url: url.into(),
            elements: vec![
                ElementRecord::new("h1").attr("id", "title").text("Hello"),
                ElementRecord::new("button")
                    .attr("id", "go")
                    .attr("type", "button"),
                ElementRecord::new("input").attr("id", "box"),
            ],
            ..Default::default()
        }],
        ..Default::default()
    }
}

proptest! {
    #[test]
    fn reference_runs_are_well_formed(raw in prop::collection::vec(block_strategy(), 0..12)) {
        let url = "http://site.test/start";
        let r = reference_interpret(&build(url, &raw), &model(url));
        check(&r);
    }
}

struct Live {
    rt: tokio::runtime::Runtime,
    site: SocketAddr,
    driver: WebDriver,
    _server: BrowserServer,
}

fn live() -> &'static Live {
    static LIVE: OnceLock<Live> = OnceLock::new();
    LIVE.get_or_init(|| {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        let (site, server) = rt.block_on(async {
            let page = Html(
                r#"<html><body><h1 id="title">Hello</h1><button id="go" type="button">Go</button>
                   <input id="box"></body></html>"#,
            );
            let app = Router::new().route("/start", get(move || async move { page }));
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            let site = listener.local_addr().unwrap();
            tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
            let server = BrowserServer::start("127.0.0.1:0".parse().unwrap())
                .await
                .unwrap();
            (site, server)
        });
        let driver = WebDriver::new(server.url());
        Live {
            rt,
            site,
            driver,
            _server: server,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn live_runs_are_well_formed_and_match_the_reference(raw in prop::collection::vec(block_strategy(), 0..8)) {
        let live = live();
        let url = format!("http://{}/start", live.site);
        let workflow = build(&url, &raw);
        let r = live.rt.block_on(async {
            let mut s = live.driver.new_session(5_000, 200).await.unwrap();
            let r = execute(&workflow, &mut s, &CollectingSink::new()).await;
            s.delete().await.unwrap();
            r
        });
        check(&r);
        let reference = reference_interpret(&workflow, &model(&url));
        prop_assert_eq!(r.triple(), reference.triple());
        prop_assert_eq!(r.signal_kinds(), reference.signal_kinds());
    }
}
