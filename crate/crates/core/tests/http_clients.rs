//! Remote clients against a local scripted HTTP server.

mod common;

use std::time::Duration;

use common::{fixture, Canned, MockServer};
use distrag::embed::{embed_text, EmbedError, Embedder, RemoteEmbedder};
use distrag::gateway::{GatewayError, HttpClient, HttpConfig, ModelClient};
use distrag::geo::{fetch_places_remote, geocode, PlaceService, RemoteError};

fn chat(text: &str) -> Canned {
    Canned::ok(serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string())
}

fn http_client(url: &str) -> ModelClient {
    let mut cfg = HttpConfig::new(url, "test-model");
    cfg.api_key = Some("sekrit".into());
    cfg.max_retries = 2;
    cfg.backoff = Duration::from_millis(1);
    cfg.timeout = Duration::from_secs(5);
    ModelClient::Http(HttpClient::new(cfg).unwrap())
}

#[test]
fn places_fetch_then_cache() {
    let body = std::fs::read_to_string(fixture("overpass_au.json")).unwrap();
    let server = MockServer::start(vec![Canned::ok(body)]);
    let dir = tempfile::tempdir().unwrap();
    let svc = PlaceService::new(&server.url, dir.path()).with_timeout(Duration::from_secs(5));

    let g = fetch_places_remote("Australia", &svc).unwrap();
    assert!(g.len() >= 50);
    assert!(geocode("Perth", &g).is_some());
    assert_eq!(geocode("Newcastle", &g).unwrap().name, "Newcastle, NSW");
    assert!(svc.cache_path("Australia").is_file());
    let requests = server.finish();
    assert_eq!(requests.len(), 1);
    assert!(requests[0].request_line.starts_with("POST"));
    assert!(requests[0].body.contains("Australia"));

    // The server is gone; the cache answers.
    let again = fetch_places_remote("Australia", &svc).unwrap();
    assert_eq!(again.len(), g.len());
    assert_eq!(again.cities()[0].name, g.cities()[0].name);
}

#[test]
fn places_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(vec![
        Canned::ok("this is not json"),
        Canned {
            status: 429,
            headers: vec![("Retry-After".into(), "7".into())],
            body: String::new(),
        },
        Canned::ok(r#"{"elements": []}"#),
    ]);
    let svc = PlaceService::new(&server.url, dir.path()).with_timeout(Duration::from_secs(5));
    assert!(matches!(fetch_places_remote("A", &svc), Err(RemoteError::NetworkError(_))));
    assert!(matches!(fetch_places_remote("B", &svc), Err(RemoteError::RateLimited(Some(7)))));
    assert!(matches!(fetch_places_remote("C", &svc), Err(RemoteError::EmptyResult(_))));
    server.finish();
    // nothing was cached for failed fetches
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn remote_embedder_normalizes_and_checks_dimension() {
    let server = MockServer::start(vec![
        Canned::ok(r#"{"vectors": [[3.0, 4.0]]}"#),
        Canned::ok(r#"{"vectors": [[1.0, 2.0, 3.0]]}"#),
        Canned::ok("{}"),
    ]);
    let mut remote = RemoteEmbedder::new(&server.url);
    remote.dim = Some(2);
    let e = Embedder::Remote(remote);
    let v = embed_text("Sydney, NSW", &e).unwrap();
    assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
    assert!(matches!(
        embed_text("x", &e),
        Err(EmbedError::BadDimension { expected: 2, got: 3 })
    ));
    assert!(matches!(embed_text("x", &e), Err(EmbedError::NetworkError(_))));
    let reqs = server.finish();
    let sent: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(sent["input"][0], "Sydney, NSW");
}

#[test]
fn chat_request_shape() {
    let server = MockServer::start(vec![chat("2135")]);
    let client = http_client(&server.url);
    let out = client.complete("What is the distance?").unwrap();
    assert_eq!(out.text, "2135");
    let reqs = server.finish();
    assert!(reqs[0].request_line.contains("/chat/completions"));
    let auth = reqs[0]
        .headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("authorization"))
        .unwrap();
    assert_eq!(auth.1, "Bearer sekrit");
    let body: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "What is the distance?");
}

#[test]
fn chat_retries_transient_failures() {
    let server = MockServer::start(vec![
        Canned::status(503, "busy"),
        Canned::status(429, "slow down"),
        chat("Perth, WA"),
    ]);
    let client = http_client(&server.url);
    assert_eq!(client.complete("q").unwrap().text, "Perth, WA");
    assert_eq!(server.finish().len(), 3);
}

#[test]
fn chat_gives_up_and_auth_fails_fast() {
    let server = MockServer::start(vec![Canned::status(500, ""); 3]);
    let client = http_client(&server.url);
    assert!(matches!(client.complete("q"), Err(GatewayError::NetworkError(_))));
    assert_eq!(server.finish().len(), 3);

    let server = MockServer::start(vec![Canned::status(401, "no")]);
    let client = http_client(&server.url);
    assert!(matches!(client.complete("q"), Err(GatewayError::AuthError(_))));
    assert_eq!(server.finish().len(), 1);

    let server = MockServer::start(vec![Canned::ok("{\"choices\": []}")]);
    let client = http_client(&server.url);
    assert!(matches!(client.complete("q"), Err(GatewayError::NetworkError(_))));
    server.finish();
}

#[test]
fn chat_concurrency_is_bounded() {
    let n = 8;
    let server = MockServer::start((0..n).map(|i| chat(&i.to_string())).collect());
    let mut cfg = HttpConfig::new(&server.url, "m");
    cfg.max_in_flight = 2;
    let client = ModelClient::Http(HttpClient::new(cfg).unwrap());
    assert_eq!(client.max_in_flight(), 2);
    std::thread::scope(|s| {
        for _ in 0..n {
            s.spawn(|| client.complete("q").unwrap());
        }
    });
    assert_eq!(server.finish().len(), n);
}
