use std::path::PathBuf;
use std::sync::Arc;

use dara_core::{compute_hash, parse_document, with_embedded_hash, DarpalDocument, Version};
use dara_repository::{
    ClientError, ExecutionReport, RepoClient, RepoServer, ReportOutcome, Store, JSON_UTF8,
};
use proptest::prelude::*;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus_doc(name: &str) -> DarpalDocument {
    parse_document(
        &std::fs::read_to_string(corpus_dir().join(format!("{name}.darpal.json"))).unwrap(),
    )
    .unwrap()
}

fn versioned(doc: &DarpalDocument, version: &str) -> DarpalDocument {
    let mut d = doc.clone();
    d.meta.version = Some(version.into());
    with_embedded_hash(&d).unwrap()
}

async fn serve(dir: &std::path::Path) -> (RepoServer, RepoClient) {
    let store = Arc::new(Store::open(dir).unwrap());
    let server = RepoServer::start(store, "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let client = RepoClient::new(server.url());
    (server, client)
}

fn status(e: ClientError) -> (u16, String) {
    match e {
        ClientError::Api { status, body } => (status, body.error),
        other => panic!("expected an API error, got {other}"),
    }
}

#[tokio::test]
async fn crud_and_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, repo) = serve(dir.path()).await;
    assert!(repo.list().await.unwrap().is_empty());

    let google = corpus_doc("google");
    let stored = repo.put(&google).await.unwrap();
    assert!(stored.created);
    assert_eq!(repo.history("google").await.unwrap().len(), 1);
    let (bytes, back) = repo.get("google").await.unwrap();
    assert_eq!(back, google);
    assert_eq!(bytes, google.to_json_pretty().into_bytes());

    // same version again
    assert_eq!(
        status(repo.put(&google).await.unwrap_err()),
        (409, "version-conflict".into())
    );
    // latest wins
    let newer = versioned(&google, "9.1");
    let updated = repo.put(&newer).await.unwrap();
    assert!(!updated.created);
    assert_eq!(
        repo.get("google").await.unwrap().1.meta.version.as_deref(),
        Some("9.1")
    );
    assert_eq!(
        status(repo.put(&versioned(&google, "1.0")).await.unwrap_err()),
        (409, "version-conflict".into())
    );

    // an edit re-hashed with the core hash function is accepted
    let mut edited = versioned(&google, "9.2");
    edited.request_interface.manual.as_mut().unwrap().email =
        Some("privacy-desk@google.example".into());
    edited.meta.hash = Some(compute_hash(&edited).unwrap());
    repo.put(&edited).await.unwrap();
    // the same edit without re-hashing is not
    let mut stale = edited.clone();
    stale.meta.version = Some("9.3".into());
    assert_eq!(
        status(repo.put(&stale).await.unwrap_err()),
        (422, "hash-mismatch".into())
    );

    // validation failure carries findings
    let mut invalid = versioned(&google, "9.4");
    invalid.request_parameter.data_format = None;
    match repo.put(&invalid).await.unwrap_err() {
        ClientError::Api { status, body } => {
            assert_eq!(status, 422);
            assert_eq!(body.error, "validation-failed");
            let findings = body.findings.unwrap();
            assert!(
                findings
                    .iter()
                    .any(|f| f.path == "requestParameter.dataFormat"),
                "{findings:?}"
            );
        }
        other => panic!("{other}"),
    }

    // name mismatch
    let bytes = corpus_doc("apple").to_json_pretty().into_bytes();
    assert_eq!(
        status(repo.put_bytes("google", bytes).await.unwrap_err()),
        (400, "name-mismatch".into())
    );
    assert_eq!(
        status(repo.put_bytes("google", b"{".to_vec()).await.unwrap_err()),
        (400, "malformed".into())
    );

    // unknowns
    assert_eq!(
        status(repo.get("unknown").await.unwrap_err()),
        (404, "not-found".into())
    );
    assert_eq!(
        status(repo.delete("unknown").await.unwrap_err()),
        (404, "not-found".into())
    );
    assert_eq!(status(repo.summary("unknown").await.unwrap_err()).0, 404);

    // put then delete leaves the list as it was
    let before = repo.list().await.unwrap();
    repo.put(&corpus_doc("vinted")).await.unwrap();
    repo.delete("vinted").await.unwrap();
    assert_eq!(repo.list().await.unwrap(), before);
    assert_eq!(status(repo.get("vinted").await.unwrap_err()).0, 404);

    // delete resets history: version 1.0 is accepted again
    repo.delete("google").await.unwrap();
    assert!(repo.put(&google).await.unwrap().created);
    assert_eq!(repo.history("google").await.unwrap().len(), 1);
}

#[tokio::test]
async fn raw_http_shape() {
    let dir = tempfile::tempdir().unwrap();
    let (server, repo) = serve(dir.path()).await;
    repo.put(&corpus_doc("amazon")).await.unwrap();
    let http = reqwest::Client::new();
    let base = server.url();

    let list = http
        .get(base.join("providers").unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(list.status(), 200);
    assert_eq!(list.headers()["content-type"], JSON_UTF8);
    let list: serde_json::Value = list.json().await.unwrap();
    assert_eq!(list[0]["provider"], "amazon");
    assert_eq!(list[0]["verified"], true);

    let missing = http
        .get(base.join("providers/nobody").unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(missing.status(), 404);
    assert_eq!(missing.headers()["content-type"], JSON_UTF8);
    let body: serde_json::Value = missing.json().await.unwrap();
    assert_eq!(body["error"], "not-found");
    assert!(body["detail"].as_str().unwrap().contains("nobody"));
    assert!(body.get("findings").is_none());

    let deleted = http
        .delete(base.join("providers/amazon").unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(deleted.status(), 204);
    let bad = http
        .get(base.join("providers/Not_Kebab").unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(bad.status(), 400);
}

#[tokio::test]
async fn reports_count_and_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (server, repo) = serve(dir.path()).await;
    repo.put(&corpus_doc("linkedin")).await.unwrap();
    let report = |outcome| ExecutionReport {
        provider: "linkedin".into(),
        outcome,
        engine_version: "dara-engine/1".into(),
        reported_at: chrono::Utc::now(),
    };
    for _ in 0..3 {
        repo.report(&report(ReportOutcome::Success)).await.unwrap();
    }
    repo.report(&report(ReportOutcome::InteractionRequired))
        .await
        .unwrap();
    let summary = repo.summary("linkedin").await.unwrap();
    assert_eq!(summary.counts["success"], 3);
    assert_eq!(summary.counts["interaction-required"], 1);
    assert_eq!(summary.counts["error"], 0);
    assert_eq!(summary.total, 4);

    let mut unknown = report(ReportOutcome::Error);
    unknown.provider = "nobody".into();
    assert_eq!(status(repo.report(&unknown).await.unwrap_err()).0, 404);

    let http = reqwest::Client::new();
    let bogus = http
        .post(server.url().join("providers/linkedin/reports").unwrap())
        .header("content-type", JSON_UTF8)
        .body(r#"{"outcome":"maybe","engineVersion":"x"}"#)
        .send()
        .await
        .unwrap();
    assert_eq!(bogus.status(), 400);

    let list = repo.list().await.unwrap();
    server.stop().await;
    let (_server, repo) = serve(dir.path()).await;
    assert_eq!(repo.summary("linkedin").await.unwrap(), summary);
    assert_eq!(repo.list().await.unwrap(), list);
}

#[tokio::test]
async fn seeded_store_serves_the_corpus_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let seeded = Store::open(dir.path())
        .unwrap()
        .seed_from_dir(&corpus_dir())
        .unwrap();
    assert_eq!(seeded.len(), 15);
    let (server, repo) = serve(dir.path()).await;
    let list = repo.list().await.unwrap();
    let names: Vec<&str> = list.iter().map(|p| p.provider.as_str()).collect();
    assert_eq!(names.len(), 15);
    assert!(names.windows(2).all(|w| w[0] < w[1]));
    for expected in [
        "amazon",
        "apple",
        "google",
        "instagram",
        "linkedin",
        "vinted",
        "facebook",
    ] {
        assert!(
            names.contains(&expected),
            "{expected} missing from {names:?}"
        );
    }
    let google = repo.get("google").await.unwrap().1;
    assert_eq!(
        dara_core::normalize_provider_name(google.name().unwrap()),
        "google"
    );

    let mut docs = Vec::new();
    for p in &names {
        docs.push(repo.get(p).await.unwrap().0);
    }
    server.stop().await;
    let (_server, repo) = serve(dir.path()).await;
    assert_eq!(repo.list().await.unwrap(), list);
    for (p, bytes) in names.iter().zip(&docs) {
        assert_eq!(&repo.get(p).await.unwrap().0, bytes);
    }
    // seeding twice is harmless
    let again = Store::open(dir.path())
        .unwrap()
        .seed_from_dir(&corpus_dir())
        .unwrap();
    assert_eq!(again.len(), 15);
}

/// Puts `doc`, and on a version conflict bumps above the current version,
/// re-hashes, and tries again.
async fn put_rebasing(repo: &RepoClient, mut doc: DarpalDocument) -> String {
    loop {
        match repo.put(&doc).await {
            Ok(stored) => return stored.version,
            Err(ClientError::Api { status: 409, .. }) => {
                let current = repo.get(&doc.provider().unwrap()).await.unwrap().1;
                let v: Version = current.meta.version.unwrap().parse().unwrap();
                doc = versioned(&doc, &v.bump_last().to_string());
            }
            Err(e) => panic!("{e}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_both_land() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, repo) = serve(dir.path()).await;
    let base = corpus_doc("instagram");
    repo.put(&base).await.unwrap();

    for round in 0..10 {
        let a = versioned(&base, &format!("2.{}", round * 2 + 1));
        let b = versioned(&base, &format!("2.{}", round * 2 + 2));
        let (ra, rb) = tokio::join!(put_rebasing(&repo, a), put_rebasing(&repo, b));
        assert_ne!(ra, rb);
        let history = repo.history("instagram").await.unwrap();
        let versions: Vec<Version> = history.iter().map(|h| h.version.parse().unwrap()).collect();
        assert!(versions.windows(2).all(|w| w[0] < w[1]), "{versions:?}");
        let recorded: Vec<&str> = history.iter().map(|h| h.version.as_str()).collect();
        assert!(recorded.contains(&ra.as_str()) && recorded.contains(&rb.as_str()));
        // final state is the newest history entry, and it verifies
        let (_, current) = repo.get("instagram").await.unwrap();
        assert_eq!(
            current.meta.version.as_deref(),
            Some(history.last().unwrap().version.as_str())
        );
        assert_eq!(
            current.meta.hash.as_deref(),
            Some(history.last().unwrap().hash.as_str())
        );
    }
    let total = repo.history("instagram").await.unwrap().len();
    assert_eq!(total, 21);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn history_is_strictly_increasing(minors in prop::collection::vec(0u32..20, 1..15)) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let base = corpus_doc("zalando");
        let mut accepted: Vec<u32> = Vec::new();
        for m in &minors {
            let doc = versioned(&base, &format!("1.{m}"));
            let ok = store.put("zalando", doc.to_json_pretty().as_bytes()).is_ok();
            prop_assert_eq!(ok, accepted.last().is_none_or(|last| m > last));
            if ok {
                accepted.push(*m);
            }
        }
        let history = store.history("zalando").unwrap();
        let got: Vec<String> = history.iter().map(|h| h.version.clone()).collect();
        let want: Vec<String> = accepted.iter().map(|m| format!("1.{m}")).collect();
        prop_assert_eq!(got, want);
    }
}
