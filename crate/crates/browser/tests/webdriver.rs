use std::net::SocketAddr;

use axum::extract::Form;
use axum::http::header::{LOCATION, SET_COOKIE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use dara_browser::{BrowserServer, ELEMENT_KEY};
use serde_json::{json, Value};

async fn site() -> SocketAddr {
    async fn form() -> Html<&'static str> {
        Html(
            r#"<html><head><title>Form</title></head><body>
            <form action="/echo" method="post">
              <input id="name" name="name">
              <select id="fmt" name="fmt"><option value="json">JSON</option><option value="csv">CSV</option></select>
              <button type="submit" id="go">Go</button>
            </form>
            <a id="loop" href="/loop">loop</a></body></html>"#,
        )
    }
    async fn echo(Form(fields): Form<Vec<(String, String)>>) -> Html<String> {
        let items: String = fields
            .iter()
            .map(|(k, v)| format!("<li>{k}={v}</li>"))
            .collect();
        Html(format!(
            "<html><body><ul id='got'>{items}</ul></body></html>"
        ))
    }
    async fn login() -> impl IntoResponse {
        let mut h = HeaderMap::new();
        h.insert(SET_COOKIE, "auth=yes; Path=/".parse().unwrap());
        h.insert(LOCATION, "/whoami".parse().unwrap());
        (StatusCode::SEE_OTHER, h)
    }
    async fn whoami(headers: HeaderMap) -> Html<String> {
        let cookie = headers
            .get("cookie")
            .and_then(|c| c.to_str().ok())
            .unwrap_or("none")
            .to_string();
        Html(format!("<p id='c'>{cookie}</p>"))
    }
    async fn looping() -> impl IntoResponse {
        (StatusCode::FOUND, [(LOCATION, "/loop")])
    }
    let app = Router::new()
        .route("/form", get(form))
        .route("/echo", axum::routing::post(echo))
        .route("/login", get(login))
        .route("/whoami", get(whoami))
        .route("/loop", get(looping));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

struct Wd {
    http: reqwest::Client,
    base: String,
}

impl Wd {
    async fn call(&self, method: reqwest::Method, path: &str, body: Value) -> (u16, Value) {
        let resp = self
            .http
            .request(method, format!("{}{}", self.base, path))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json::<Value>().await.unwrap()["value"].clone())
    }
    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.call(reqwest::Method::POST, path, body).await
    }
    async fn get(&self, path: &str) -> (u16, Value) {
        self.call(reqwest::Method::GET, path, Value::Null).await
    }
}

async fn start() -> (BrowserServer, Wd, String, SocketAddr) {
    let server = BrowserServer::start("127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let wd = Wd {
        http: reqwest::Client::new(),
        base: server.url().as_str().trim_end_matches('/').to_string(),
    };
    let (status, v) = wd.post("/session", json!({"capabilities": {}})).await;
    assert_eq!(status, 200);
    let sid = v["sessionId"].as_str().unwrap().to_string();
    (server, wd, sid, site().await)
}

fn element(v: &Value) -> String {
    v[ELEMENT_KEY].as_str().unwrap().to_string()
}

#[tokio::test]
async fn fill_select_and_submit_a_form() {
    let (_server, wd, sid, site) = start().await;
    let s = format!("/session/{sid}");
    wd.post(
        &format!("{s}/url"),
        json!({"url": format!("http://{site}/form")}),
    )
    .await;
    assert_eq!(wd.get(&format!("{s}/title")).await.1, "Form");

    let (_, name) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "css selector", "value": "#name"}),
        )
        .await;
    let name = element(&name);
    wd.post(
        &format!("{s}/element/{name}/value"),
        json!({"text": "all-time"}),
    )
    .await;
    assert_eq!(
        wd.get(&format!("{s}/element/{name}/property/value"))
            .await
            .1,
        "all-time"
    );

    let (_, fmt) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "xpath", "value": "//select[@id='fmt']"}),
        )
        .await;
    let fmt = element(&fmt);
    let (_, csv) = wd
        .post(
            &format!("{s}/element/{fmt}/element"),
            json!({"using": "xpath", "value": ".//option[@value='csv']"}),
        )
        .await;
    let csv = element(&csv);
    wd.post(&format!("{s}/element/{csv}/click"), json!({}))
        .await;
    assert_eq!(wd.get(&format!("{s}/element/{csv}/selected")).await.1, true);

    let (_, go) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "xpath", "value": "//button[@id='go']"}),
        )
        .await;
    let go = element(&go);
    let (status, _) = wd.post(&format!("{s}/element/{go}/click"), json!({})).await;
    assert_eq!(status, 200);
    assert_eq!(
        wd.get(&format!("{s}/url")).await.1,
        format!("http://{site}/echo")
    );
    let (_, got) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "css selector", "value": "#got"}),
        )
        .await;
    let got = element(&got);
    assert_eq!(
        wd.get(&format!("{s}/element/{got}/text")).await.1,
        "name=all-time\nfmt=csv"
    );

    let (status, err) = wd.get(&format!("{s}/element/{go}/text")).await;
    assert_eq!(status, 404);
    assert_eq!(err["error"], "stale element reference");
}

#[tokio::test]
async fn errors_use_protocol_codes() {
    let (_server, wd, sid, site) = start().await;
    let s = format!("/session/{sid}");
    wd.post(
        &format!("{s}/url"),
        json!({"url": format!("http://{site}/form")}),
    )
    .await;

    let (status, err) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "xpath", "value": "//nothing"}),
        )
        .await;
    assert_eq!(
        (status, err["error"].as_str().unwrap()),
        (404, "no such element")
    );
    let (status, err) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "xpath", "value": "//a["}),
        )
        .await;
    assert_eq!(
        (status, err["error"].as_str().unwrap()),
        (400, "invalid selector")
    );
    let (_, many) = wd
        .post(
            &format!("{s}/elements"),
            json!({"using": "tag name", "value": "option"}),
        )
        .await;
    assert_eq!(many.as_array().unwrap().len(), 2);

    let (status, err) = wd
        .post(
            &format!("{s}/url"),
            json!({"url": format!("http://{site}/loop")}),
        )
        .await;
    assert_eq!(status, 500);
    assert_eq!(err["error"], "unknown error");
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("too many redirects"));

    let (status, err) = wd.get("/session/nope/url").await;
    assert_eq!(
        (status, err["error"].as_str().unwrap()),
        (404, "invalid session id")
    );
}

#[tokio::test]
async fn redirects_keep_cookies() {
    let (_server, wd, sid, site) = start().await;
    let s = format!("/session/{sid}");
    wd.post(
        &format!("{s}/url"),
        json!({"url": format!("http://{site}/login")}),
    )
    .await;
    assert_eq!(
        wd.get(&format!("{s}/url")).await.1,
        format!("http://{site}/whoami")
    );
    let (_, c) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "css selector", "value": "#c"}),
        )
        .await;
    assert_eq!(
        wd.get(&format!("{s}/element/{}/text", element(&c))).await.1,
        "auth=yes"
    );

    let (_, cookies) = wd.get(&format!("{s}/cookie")).await;
    assert_eq!(cookies[0]["name"], "auth");
    wd.post(
        &format!("{s}/cookie"),
        json!({"cookie": {"name": "seeded", "value": "1"}}),
    )
    .await;
    wd.post(
        &format!("{s}/url"),
        json!({"url": format!("http://{site}/whoami")}),
    )
    .await;
    let (_, c) = wd
        .post(
            &format!("{s}/element"),
            json!({"using": "css selector", "value": "#c"}),
        )
        .await;
    assert_eq!(
        wd.get(&format!("{s}/element/{}/text", element(&c))).await.1,
        "auth=yes; seeded=1"
    );
}

#[tokio::test]
async fn windows_and_page_load_timeout() {
    let (_server, wd, sid, _site) = start().await;
    let s = format!("/session/{sid}");
    let (_, first) = wd.get(&format!("{s}/window")).await;
    let (_, tab) = wd
        .post(&format!("{s}/window/new"), json!({"type": "tab"}))
        .await;
    let tab = tab["handle"].as_str().unwrap().to_string();
    wd.post(&format!("{s}/window"), json!({"handle": tab}))
        .await;
    assert_eq!(
        wd.get(&format!("{s}/window/handles"))
            .await
            .1
            .as_array()
            .unwrap()
            .len(),
        2
    );
    let (_, left) = wd
        .call(reqwest::Method::DELETE, &format!("{s}/window"), Value::Null)
        .await;
    assert_eq!(left, json!([first]));

    // A listener that accepts but never answers.
    let silent = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let silent_addr = silent.local_addr().unwrap();
    wd.post(&format!("{s}/window"), json!({"handle": first}))
        .await;
    wd.post(&format!("{s}/timeouts"), json!({"pageLoad": 200}))
        .await;
    let (status, err) = wd
        .post(
            &format!("{s}/url"),
            json!({"url": format!("http://{silent_addr}/")}),
        )
        .await;
    assert_eq!((status, err["error"].as_str().unwrap()), (500, "timeout"));
    drop(silent);

    let (status, _) = wd.call(reqwest::Method::DELETE, &s, Value::Null).await;
    assert_eq!(status, 200);
    assert_eq!(wd.get(&format!("{s}/url")).await.0, 404);
}
