//! The model-service protocol over real HTTP: a tiny_http server fronting the mock
//! service on one side, `HttpTransport` + `RemoteClient` on the other.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use relgen_core::backend::service::error_body;
use relgen_core::backend::wire::{self, JudgeResponse, PromptsRequest};
use relgen_core::backend::{
    BackendError, Corrector, Embedder, HttpTransport, Judge, MockService, Paraphraser,
    RemoteClient, RetryPolicy, SentimentClassifier, TextModel, Transport,
};
use relgen_core::generation::prompts::build_generation_prompt;
use relgen_core::types::{EntityType, RelationTuple};
use serde_json::{json, Value};

struct Request {
    method: String,
    path: String,
    auth: Option<String>,
    body: String,
}

/// Serves `handler` on an ephemeral port until the process exits; returns the base URL.
fn serve<F>(handler: F) -> String
where
    F: Fn(&Request) -> (u16, String) + Send + 'static,
{
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
    let port = server.server_addr().to_ip().expect("ip").port();
    thread::spawn(move || {
        for mut rq in server.incoming_requests() {
            let mut body = String::new();
            let _ = rq.as_reader().read_to_string(&mut body);
            let req = Request {
                method: rq.method().to_string(),
                path: rq.url().to_string(),
                auth: rq
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.to_string()),
                body,
            };
            let (status, text) = handler(&req);
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = rq.respond(
                tiny_http::Response::from_string(text)
                    .with_status_code(status)
                    .with_header(header),
            );
        }
    });
    format!("http://127.0.0.1:{port}")
}

fn mock_handler(service: MockService) -> impl Fn(&Request) -> (u16, String) + Send + 'static {
    move |req| {
        if req.method == "GET" && req.path == wire::HEALTH {
            return (200, service.health().to_string());
        }
        let result = serde_json::from_str::<Value>(&req.body)
            .map_err(|e| relgen_core::backend::client::TransportFailure {
                status: Some(400),
                message: format!("{}: malformed request: {e}", req.path),
            })
            .and_then(|body| service.handle_post(&req.path, &body));
        match result {
            Ok(v) => (200, v.to_string()),
            Err(f) => (
                f.status.unwrap_or(500),
                error_body(&req.path, &f).to_string(),
            ),
        }
    }
}

fn no_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 1,
        base_delay_ms: 0,
    }
}

fn client(url: &str, retry: RetryPolicy) -> RemoteClient {
    let transport = HttpTransport::new(url, Duration::from_secs(5), None);
    RemoteClient::new("remote", Arc::new(transport)).with_retry(retry)
}

fn tuple() -> RelationTuple {
    RelationTuple::new(
        "t1",
        "Marie Curie",
        EntityType::Person,
        "birthPlace",
        "Warsaw",
        EntityType::Location,
    )
    .unwrap()
}

#[test]
fn every_endpoint_matches_the_in_process_service() {
    let url = serve(mock_handler(MockService::new("svc")));
    let remote = client(&url, no_retry());
    let local = MockService::new("svc");
    let local = RemoteClient::new("local", Arc::new(local)).with_retry(no_retry());

    let prompts = vec![build_generation_prompt(&tuple())];
    assert_eq!(
        remote.generate(&prompts).unwrap(),
        local.generate(&prompts).unwrap()
    );

    let texts = vec![
        "Marie Curie was born in Warsaw.".to_string(),
        "a apple fell fell".to_string(),
    ];
    assert_eq!(
        remote.paraphrase(&texts).unwrap(),
        local.paraphrase(&texts).unwrap()
    );
    assert_eq!(
        remote.correct(&texts).unwrap(),
        local.correct(&texts).unwrap()
    );
    assert_eq!(
        remote.classify(&texts).unwrap(),
        local.classify(&texts).unwrap()
    );
    assert_eq!(remote.embed(&texts).unwrap(), local.embed(&texts).unwrap());
    assert_eq!(
        remote.judge(&texts[0], &tuple()).unwrap(),
        local.judge(&texts[0], &tuple()).unwrap()
    );

    let health = remote.health().unwrap();
    assert_eq!(health.status, "ok");
    assert_eq!(health.models.len(), wire::MODEL_ENDPOINTS.len());
}

#[test]
fn status_errors_surface_with_their_code() {
    let url = serve(mock_handler(MockService::new("svc")));
    let transport = HttpTransport::new(&url, Duration::from_secs(5), None);

    let err = transport.post("/nope", &json!({})).unwrap_err();
    assert_eq!(err.status, Some(404));
    assert!(err.message.contains("unknown endpoint"));

    let err = transport
        .post(wire::GENERATE, &json!({"texts": []}))
        .unwrap_err();
    assert_eq!(err.status, Some(400));
    assert!(err.message.contains("malformed request"));
}

#[test]
fn transient_status_is_retried_then_succeeds() {
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = hits.clone();
    let url = serve(move |req| {
        if seen.fetch_add(1, Ordering::SeqCst) == 0 {
            return (
                503,
                json!({"error": "warming up", "endpoint": req.path}).to_string(),
            );
        }
        let n = serde_json::from_str::<PromptsRequest>(&req.body)
            .unwrap()
            .prompts
            .len();
        (200, json!({ "texts": vec!["ok"; n] }).to_string())
    });
    let c = client(
        &url,
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 1,
        },
    );
    assert_eq!(c.generate(&["p".to_string()]).unwrap(), vec!["ok"]);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn wrong_cardinality_is_a_protocol_error_and_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = hits.clone();
    let url = serve(move |_| {
        seen.fetch_add(1, Ordering::SeqCst);
        (200, json!({ "texts": ["only one"] }).to_string())
    });
    let c = client(&url, RetryPolicy::default());
    let err = c.correct(&["a".to_string(), "b".to_string()]).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err}");
    assert!(!err.is_transient());
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn out_of_range_values_are_rejected() {
    let url = serve(|req| match req.path.as_str() {
        wire::SENTIMENT => (200, json!({ "classes": [7] }).to_string()),
        _ => (
            200,
            json!({ "flags": {"fluency": 1, "accuracy": 0, "coherence": 0, "relevance": 0} })
                .to_string(),
        ),
    });
    let c = client(&url, no_retry());
    assert!(matches!(
        c.classify(&["x".to_string()]),
        Err(BackendError::Protocol { .. })
    ));
    assert!(matches!(
        c.judge("x", &tuple()),
        Err(BackendError::Protocol { .. })
    ));
}

#[test]
fn bearer_token_is_sent_when_configured() {
    let url = serve(|req| match req.auth.as_deref() {
        Some("Bearer s3cret") => (200, json!({ "texts": ["fine"] }).to_string()),
        _ => (
            401,
            json!({"error": "unauthorized", "endpoint": req.path}).to_string(),
        ),
    });
    let with = HttpTransport::new(&url, Duration::from_secs(5), Some("s3cret".into()));
    let ok = RemoteClient::new("a", Arc::new(with)).with_retry(no_retry());
    assert_eq!(ok.paraphrase(&["x".to_string()]).unwrap(), vec!["fine"]);

    let err = client(&url, no_retry())
        .paraphrase(&["x".to_string()])
        .unwrap_err();
    assert!(
        matches!(err, BackendError::Status { status: 401, .. }),
        "{err}"
    );
    assert!(err.to_string().contains("unauthorized"));
}

#[test]
fn unreachable_server_is_a_transient_transport_error() {
    // Bind then drop to get a port nothing listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let c = client(&format!("http://127.0.0.1:{port}"), no_retry());
    let err = c.generate(&["p".to_string()]).unwrap_err();
    assert!(matches!(err, BackendError::Transport { .. }), "{err}");
    assert!(err.is_transient());
}

/// Message shapes a conforming service must accept and emit.
#[test]
fn contract_fixtures_round_trip() {
    let judge: JudgeResponse = serde_json::from_str(
        r#"{"flags": {"fluency": 0, "accuracy": -1, "coherence": 0, "relevance": 0},
            "rationale": "relation not expressed"}"#,
    )
    .unwrap();
    assert_eq!(judge.flags.accuracy, -1);
    judge.flags.validate().unwrap();

    let health: wire::HealthResponse = serde_json::from_str(
        r#"{"status": "ok", "models": {"/generate": "llama", "/embed": "minilm"}}"#,
    )
    .unwrap();
    assert_eq!(health.models["/embed"], "minilm");

    let svc = MockService::new("svc");
    for (path, body, key) in [
        (wire::GENERATE, json!({"prompts": ["p"]}), "texts"),
        (wire::PARAPHRASE, json!({"texts": ["a b."]}), "texts"),
        (wire::CORRECT, json!({"texts": ["a b."]}), "texts"),
        (wire::SENTIMENT, json!({"texts": ["a b."]}), "classes"),
        (wire::EMBED, json!({"texts": ["a b."]}), "vectors"),
        (
            wire::JUDGE,
            json!({"text": "A met B.", "e1": "A", "r": "knows", "e2": "B"}),
            "flags",
        ),
    ] {
        let out = svc.post(path, &body).unwrap();
        assert!(out.get(key).is_some(), "{path} response lacks {key}: {out}");
    }
}
