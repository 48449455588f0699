mod common;

use std::time::{Duration, Instant};

use sentsim::gateway::{CompletionRequest, Completer, GatewayConfig, GatewayError, HttpCompleter};

use common::{Reply, StubServer};

fn config(url: &str, max_retries: u32) -> GatewayConfig {
    GatewayConfig {
        endpoint: url.to_string(),
        model: "stub-model".into(),
        max_retries,
        timeout: Duration::from_millis(300),
        min_interval: Duration::ZERO,
        initial_backoff: Duration::from_millis(5),
        max_backoff: Duration::from_millis(20),
        ..GatewayConfig::default()
    }
}

fn client(url: &str, max_retries: u32) -> HttpCompleter {
    HttpCompleter::with_token(config(url, max_retries), "tok").unwrap()
}

#[test]
fn sends_model_prompt_and_bearer_token() {
    let stub = StubServer::start(vec![], Reply::Ok(" 0.5".into()), Duration::ZERO);
    let r = client(&stub.url, 0).complete(&CompletionRequest::scoring("how alike?")).unwrap();
    assert_eq!(r.text, " 0.5");
    assert_eq!(r.request_id, "stub");
    let hit = &stub.hits()[0];
    assert_eq!(hit.authorization.as_deref(), Some("Bearer tok"));
    let body: serde_json::Value = serde_json::from_str(&hit.body).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["prompt"], "how alike?");
}

#[test]
fn auth_failure_is_not_retried() {
    let stub = StubServer::start(vec![Reply::Status(401)], Reply::Ok("x".into()), Duration::ZERO);
    let err = client(&stub.url, 3).complete(&CompletionRequest::scoring("p")).unwrap_err();
    assert!(matches!(err, GatewayError::Auth { status: 401 }), "{err:?}");
    assert_eq!(stub.hits().len(), 1);
}

#[test]
fn gives_up_after_the_configured_retries() {
    let stub = StubServer::start(vec![], Reply::Status(503), Duration::ZERO);
    let err = client(&stub.url, 2).complete(&CompletionRequest::scoring("p")).unwrap_err();
    match err {
        GatewayError::Exhausted { attempts, last } => {
            assert_eq!(attempts, 3);
            assert!(last.contains("503"), "{last}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(stub.hits().len(), 3);
}

#[test]
fn client_errors_are_rejected_without_retry() {
    let stub = StubServer::start(vec![Reply::Status(400)], Reply::Ok("x".into()), Duration::ZERO);
    let err = client(&stub.url, 3).complete(&CompletionRequest::scoring("p")).unwrap_err();
    assert!(matches!(err, GatewayError::Rejected { status: 400, .. }), "{err:?}");
    assert_eq!(stub.hits().len(), 1);
}

#[test]
fn honors_retry_after() {
    let stub = StubServer::start(vec![Reply::RetryAfter(429, "0.2".into())], Reply::Ok("x".into()), Duration::ZERO);
    let patient = GatewayConfig {
        max_backoff: Duration::from_secs(1),
        ..config(&stub.url, 1)
    };
    HttpCompleter::with_token(patient, "tok").unwrap().complete(&CompletionRequest::scoring("p")).unwrap();
    let gaps = stub.arrival_gaps();
    assert_eq!(gaps.len(), 1);
    assert!(gaps[0] >= Duration::from_millis(200), "{gaps:?}");
}

#[test]
fn retry_after_is_capped_by_max_backoff() {
    let stub = StubServer::start(vec![Reply::RetryAfter(429, "30".into())], Reply::Ok("x".into()), Duration::ZERO);
    let started = Instant::now();
    client(&stub.url, 1).complete(&CompletionRequest::scoring("p")).unwrap();
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn timeout_counts_as_a_retryable_failure() {
    let stub = StubServer::start(vec![Reply::Hang(Duration::from_secs(1))], Reply::Ok(" done".into()), Duration::ZERO);
    let started = Instant::now();
    let r = client(&stub.url, 1).complete(&CompletionRequest::scoring("p")).unwrap();
    assert_eq!(r.text, " done");
    assert!(started.elapsed() < Duration::from_secs(1));
}
