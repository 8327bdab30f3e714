use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use gwm_core::clients::{CompleteRequest, DecoderClient, DecoderRequest, EmbedRequest, GenerateImageRequest};
use gwm_core::mock::MockDecoder;
use gwm_core::{GwmError, Modality, ModalityDims};
use gwm_http::{HttpConfig, HttpDecoderClient, MockServer, COMPLETE_PATH, REQUEST_ID_HEADER};
use serde_json::{json, Value};

const DIMS: ModalityDims = ModalityDims { image: 3, text: 5, table: 4 };

fn client(url: String, retries: u32) -> HttpDecoderClient {
    HttpDecoderClient::new(HttpConfig { url, timeout_ms: 2_000, retries, backoff_ms: 1, soft_tokens: true }).unwrap()
}

fn complete(prompt: &str) -> DecoderRequest {
    DecoderRequest::Complete(CompleteRequest { prompt: prompt.into(), max_tokens: 16, graph_tokens: None })
}

/// Answers `status` for the first `failures` calls, then a fixed completion.
fn flaky(failures: usize, status: StatusCode, calls: Arc<AtomicUsize>) -> Router {
    Router::new()
        .route(
            COMPLETE_PATH,
            post(move |State(calls): State<Arc<AtomicUsize>>| async move {
                let n = calls.fetch_add(1, Ordering::SeqCst);
                if n < failures {
                    (status, Json(json!({})))
                } else {
                    (StatusCode::OK, Json(json!({"text": "fine"})))
                }
            }),
        )
        .with_state(calls)
}

#[test]
fn the_mock_service_matches_the_in_process_mock() {
    let mock = MockDecoder::new(7, DIMS);
    let server = MockServer::spawn(mock.clone()).unwrap();
    let http = client(server.url(), 0);
    let requests = [
        complete("question ANSWER: yes, indeed"),
        DecoderRequest::GenerateImage(GenerateImageRequest { prompt: "draw".into(), condition_tokens: Some(vec![vec![0.5, -1.0]]) }),
        DecoderRequest::Embed(EmbedRequest { modality: Modality::Table, content: "a is 1".into() }),
        DecoderRequest::Embed(EmbedRequest { modality: Modality::Text, content: "hello".into() }),
    ];
    for req in &requests {
        let remote = http.call(req).unwrap();
        let local = mock.call(req).unwrap();
        assert_eq!(remote.payload, local.payload, "{req:?}");
        assert_eq!(remote.request_id, req.request_id());
    }
}

#[test]
fn server_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = MockServer::spawn_router(flaky(2, StatusCode::SERVICE_UNAVAILABLE, calls.clone())).unwrap();
    let r = client(server.url(), 3).call(&complete("x")).unwrap();
    assert_eq!(r.text(), Some("fine"));
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn exhausted_retries_report_the_decoder_unavailable() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = MockServer::spawn_router(flaky(usize::MAX, StatusCode::INTERNAL_SERVER_ERROR, calls.clone())).unwrap();
    let err = client(server.url(), 2).call(&complete("x")).unwrap_err();
    assert!(matches!(err, GwmError::DecoderUnavailable(_)));
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn rate_limits_are_not_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = MockServer::spawn_router(flaky(1, StatusCode::TOO_MANY_REQUESTS, calls.clone())).unwrap();
    let err = client(server.url(), 3).call(&complete("x")).unwrap_err();
    assert!(matches!(err, GwmError::Overloaded(_)));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn client_errors_and_malformed_bodies_are_bad_responses() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = MockServer::spawn_router(flaky(1, StatusCode::BAD_REQUEST, calls)).unwrap();
    assert!(matches!(client(server.url(), 3).call(&complete("x")), Err(GwmError::BadResponse(_))));

    let app = Router::new().route(COMPLETE_PATH, post(|| async { Json(json!({"txt": "missing field"})) }));
    let server = MockServer::spawn_router(app).unwrap();
    assert!(matches!(client(server.url(), 0).call(&complete("x")), Err(GwmError::BadResponse(_))));
}

#[test]
fn unreachable_services_are_unavailable() {
    let addr = MockServer::spawn(MockDecoder::new(0, DIMS)).unwrap().url();
    let err = client(addr, 1).call(&complete("x")).unwrap_err();
    assert!(matches!(err, GwmError::DecoderUnavailable(_)));
}

#[test]
fn disabled_soft_tokens_move_graph_tokens_into_the_prompt() {
    let seen: Arc<Mutex<Vec<(Value, Option<String>)>>> = Arc::default();
    let app = Router::new()
        .route(
            COMPLETE_PATH,
            post(|State(seen): State<Arc<Mutex<Vec<(Value, Option<String>)>>>>, headers: axum::http::HeaderMap, Json(body): Json<Value>| async move {
                let id = headers.get(REQUEST_ID_HEADER).map(|v| v.to_str().unwrap().to_string());
                seen.lock().unwrap().push((body, id));
                Json(json!({"text": "ok"}))
            }),
        )
        .with_state(seen.clone());
    let server = MockServer::spawn_router(app).unwrap();
    let tokens = Some(vec![vec![1.0f32, 2.0]]);
    let req = DecoderRequest::Complete(CompleteRequest { prompt: "question".into(), max_tokens: 4, graph_tokens: tokens });

    let soft = client(server.url(), 0).call(&req).unwrap();
    assert!(!soft.soft_tokens_dropped);
    let config = HttpConfig { url: server.url(), soft_tokens: false, backoff_ms: 1, ..HttpConfig::default() };
    let hard = HttpDecoderClient::new(config).unwrap().call(&req).unwrap();
    assert!(hard.soft_tokens_dropped);

    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].0["graph_tokens"], json!([[1.0, 2.0]]));
    assert_eq!(seen[0].1.as_deref(), Some(soft.request_id.as_str()));
    let prompt = seen[1].0["prompt"].as_str().unwrap();
    assert!(prompt.ends_with("\nquestion") && prompt.len() > "\nquestion".len());
    assert!(seen[1].0.get("graph_tokens").is_none_or(Value::is_null));
}
