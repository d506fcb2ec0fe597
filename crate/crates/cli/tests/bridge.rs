mod common;

use common::{dead_url, Daemon, Stack};
use dara_engine::{is_well_formed, ExecutionSignal};
use dara_sandbox::Scenario;
use serde_json::json;

async fn bridge_for(repo: &url::Url, browser: &url::Url) -> Daemon {
    Daemon::spawn(&[
        "bridge",
        "--port",
        "0",
        "--repo",
        repo.as_str(),
        "--browser",
        browser.as_str(),
    ])
    .await
}

async fn post_run(bridge: &Daemon, body: serde_json::Value) -> reqwest::Response {
    reqwest::Client::new()
        .post(bridge.url.join("runs").unwrap())
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap()
}

async fn streamed(resp: reqwest::Response) -> Vec<ExecutionSignal> {
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let body = resp.text().await.unwrap();
    body.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn runs_stream_signals_back() {
    let stack = Stack::start(vec![
        Scenario::builtin("happy-path").unwrap(),
        Scenario::builtin("captcha").unwrap(),
    ])
    .await;
    let bridge = bridge_for(&stack.repo.url(), &stack.browser.url()).await;

    let status: serde_json::Value = reqwest::get(bridge.url.join("status").unwrap())
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(status["ready"], true);

    let sigs = streamed(
        post_run(
            &bridge,
            json!({"provider": "sandbox-happy-path", "timeRange": "2024-01-01..2024-01-31", "dataFormat": "csv"}),
        )
        .await,
    )
    .await;
    let kinds: Vec<_> = sigs.iter().map(|s| s.kind).collect();
    assert!(is_well_formed(&kinds));
    assert_eq!(common::kinds(&sigs), ["started-execution", "success"]);
    assert_eq!(stack.site.journal()[0].fields["rangeEnd"], "2024-01-31");

    // two at once, on separate sessions
    let (a, b) = tokio::join!(
        post_run(&bridge, json!({"provider": "sandbox-happy-path"})),
        post_run(&bridge, json!({"provider": "sandbox-captcha"})),
    );
    let (a, b) = tokio::join!(streamed(a), streamed(b));
    assert_eq!(common::kinds(&a), ["started-execution", "success"]);
    assert_eq!(
        common::kinds(&b),
        ["started-execution", "interaction-required"]
    );
    assert_eq!(b[1].block_id.as_deref(), Some("b10"));
    assert_ne!(a[0].run_id, b[0].run_id);

    let summary = stack.client().summary("sandbox-happy-path").await.unwrap();
    assert_eq!(summary.counts["success"], 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn failures_before_the_run_are_error_bodies() {
    let stack = Stack::start(vec![Scenario::builtin("happy-path").unwrap()]).await;
    let bridge = bridge_for(&stack.repo.url(), &stack.browser.url()).await;
    let cases = [
        (json!({"provider": "nobody"}), 404, "not-found"),
        (
            json!({"provider": "sandbox-happy-path", "dataFormat": "pdf"}),
            422,
            "rejected",
        ),
        (
            json!({"provider": "sandbox-happy-path", "timeRange": "someday"}),
            400,
            "bad-selection",
        ),
        (
            json!({"provider": "sandbox-happy-path", "bogus": 1}),
            400,
            "malformed",
        ),
    ];
    for (body, status, error) in cases {
        let resp = post_run(&bridge, body.clone()).await;
        assert_eq!(resp.status().as_u16(), status, "{body}");
        let err: serde_json::Value = resp.json().await.unwrap();
        assert_eq!(err["error"], error, "{body}");
    }

    let no_browser = bridge_for(&stack.repo.url(), &dead_url()).await;
    let resp = post_run(&no_browser, json!({"provider": "sandbox-happy-path"})).await;
    assert_eq!(resp.status(), 502);
    assert_eq!(
        resp.json::<serde_json::Value>().await.unwrap()["error"],
        "browser-unreachable"
    );

    let no_repo = bridge_for(&dead_url(), &stack.browser.url()).await;
    let resp = post_run(&no_repo, json!({"provider": "sandbox-happy-path"})).await;
    assert_eq!(resp.status(), 502);
    assert_eq!(
        resp.json::<serde_json::Value>().await.unwrap()["error"],
        "repository-unreachable"
    );
}

#[tokio::test]
async fn pages_on_other_origins_may_call_it() {
    let bridge = bridge_for(&dead_url(), &dead_url()).await;
    let resp = reqwest::Client::new()
        .request(reqwest::Method::OPTIONS, bridge.url.join("runs").unwrap())
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "content-type")
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
