mod common;

use common::{code, dara, text, workspace};

#[tokio::test]
async fn corpus_validates() {
    let out = dara(&["validate".into(), workspace("corpus")]).await;
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.ends_with(": valid")).count(),
        15,
        "{stdout}"
    );
}

#[tokio::test]
async fn missing_data_format_exits_1_with_a_finding_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut value: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(workspace("fixtures/minimal.darpal.json")).unwrap(),
    )
    .unwrap();
    value["requestParameter"]
        .as_object_mut()
        .unwrap()
        .remove("dataFormat");
    let path = dir.path().join("broken.darpal.json");
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();

    let out = dara(&["validate".into(), path.clone()]).await;
    assert_eq!(code(&out), 1);
    let stdout = text(&out.stdout);
    assert!(stdout.contains(&format!("{}: invalid", path.display())));
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("requestParameter.dataFormat: error: ")),
        "{stdout}"
    );
}

#[tokio::test]
async fn unreadable_or_unparsable_input_exits_2() {
    let out = dara(&["validate", "/nonexistent/x.darpal.json"]).await;
    assert_eq!(code(&out), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.darpal.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = dara(&["validate".into(), path.clone()]).await;
    assert_eq!(code(&out), 2);
    let out = dara(&["hash".into(), path]).await;
    assert_eq!(code(&out), 2);
    // a valid file alongside does not mask the bad one
    let out = dara(&[
        "validate".into(),
        workspace("fixtures/minimal.darpal.json"),
        "/nonexistent".into(),
    ])
    .await;
    assert_eq!(code(&out), 2);
}

#[tokio::test]
async fn hash_prints_the_golden_digest() {
    let sums = std::fs::read_to_string(workspace("fixtures/golden/SHA256SUMS")).unwrap();
    let golden = sums
        .lines()
        .find_map(|l| l.strip_suffix("  minimal.canonical.json"))
        .unwrap();
    let out = dara(&["hash".into(), workspace("fixtures/minimal.darpal.json")]).await;
    assert_eq!(code(&out), 0);
    assert_eq!(text(&out.stdout).trim(), golden);
}

#[tokio::test]
async fn hash_write_is_idempotent_and_tampering_changes_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("google.darpal.json");
    let original = std::fs::read_to_string(workspace("corpus/google.darpal.json")).unwrap();
    std::fs::write(
        &path,
        original.replace("\"version\": \"2.1\"", "\"version\": \"2.2\""),
    )
    .unwrap();

    let first = dara(&["hash".into(), "--write".into(), path.clone()]).await;
    assert_eq!(code(&first), 0);
    let after_one = std::fs::read(&path).unwrap();
    let second = dara(&["hash".into(), "--write".into(), path.clone()]).await;
    assert_eq!(code(&second), 0);
    assert_eq!(std::fs::read(&path).unwrap(), after_one);
    assert_eq!(first.stdout, second.stdout);
    let out = dara(&["validate".into(), path.clone()]).await;
    assert_eq!(code(&out), 0, "{}", text(&out.stdout));

    // tampered: digest no longer matches the embedded one
    let tampered = String::from_utf8(after_one)
        .unwrap()
        .replace("\"2.2\"", "\"2.3\"");
    std::fs::write(&path, tampered).unwrap();
    let out = dara(&["hash".into(), path.clone()]).await;
    assert_eq!(code(&out), 0);
    assert_ne!(text(&out.stdout), text(&first.stdout));
    assert!(text(&out.stderr).contains("differs"));
    let out = dara(&["validate".into(), path]).await;
    assert_eq!(code(&out), 1);
    assert!(text(&out.stdout).contains("meta._hash: error: "));
}

#[tokio::test]
async fn help_and_bad_arguments() {
    let out = dara(&["--help"]).await;
    assert_eq!(code(&out), 0);
    for sub in [
        "validate",
        "hash",
        "run",
        "sandbox",
        "serve-repo",
        "browser",
        "bridge",
    ] {
        assert!(text(&out.stdout).contains(sub), "{sub} missing from help");
    }
    let out = dara(&["run"]).await;
    assert_eq!(code(&out), 2);
    let out = dara(&["sandbox", "--port", "0", "--scenario", "nope"]).await;
    assert_eq!(code(&out), 2);
}
