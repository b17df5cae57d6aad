//! HTTP clients against the mock server.

use vap_core::backends::mock::{HashedEmbedder, MockRules, MockVisionModel};
use vap_core::backends::server::{MockServer, MockServerOptions};
use vap_core::backends::{connect_embedder, connect_model, similarity, AuditLog, BackendDescriptor, VisionModel};
use vap_core::{run_vap, BackendError, Embedding, ImageTensor, PerturbationConfig};

fn server() -> MockServer {
    MockServer::start(0, MockServerOptions::default()).expect("mock server")
}

fn desc(server: &MockServer, model: &str) -> BackendDescriptor {
    BackendDescriptor {
        backoff_ms: 1,
        ..BackendDescriptor::new(server.base_url(), model)
    }
}

#[test]
fn replies_match_in_process_rules() {
    let server = server();
    let model = connect_model(&desc(&server, "m"), None).unwrap();
    let rules = MockRules::default();
    let local = MockVisionModel::new("local", rules.clone());
    let img = rules.render_objects(&["dog", "traffic light"], 8, 8, 200).unwrap();
    for prompt in [
        None,
        Some("Please describe this image in detail."),
        Some("Is there a dog in the image?"),
        Some("Is there a cat in the image?"),
        Some("Is the image bright?"),
    ] {
        let wire = model.respond(&img, prompt).unwrap();
        assert_eq!(wire.text, local.respond(&img, prompt).unwrap().text);
        assert!(wire.raw.get("choices").is_some());
    }
    assert_eq!(server.stats().chat_requests, 5);
}

#[test]
fn embeddings_match_hashed_embedder() {
    let server = server();
    let embedder = connect_embedder(&desc(&server, "e"), None).unwrap();
    let local = HashedEmbedder::new(vap_core::backends::mock::DEFAULT_EMBED_DIM, 0).unwrap();
    for text in ["a bright image", "No, there is no cat in the image."] {
        let wire = embedder.embed(text).unwrap();
        let expected = Embedding::normalized(local.raw_vector(text)).unwrap();
        assert!((similarity(&wire, &expected).unwrap() - 1.0).abs() < 1e-12);
    }
    assert_eq!(server.stats().embedding_requests, 2);
}

#[test]
fn retries_transient_failures_then_gives_up() {
    let server = server();
    let model = connect_model(&desc(&server, "m"), None).unwrap();
    let img = ImageTensor::filled(2, 2, 0.9).unwrap();

    server.fail_next(2);
    assert_eq!(model.respond(&img, None).unwrap().text, "a bright image");
    assert_eq!(server.stats().chat_requests, 3);

    server.reset_stats();
    server.fail_next(10);
    let err = model.respond(&img, None).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { status: 503, .. }), "{err}");
    assert_eq!(server.stats().chat_requests, 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = server();
    let body = serde_json::json!({ "model": "m", "messages": [{ "role": "user", "content": "no image" }] });
    let resp = ureq_post(&format!("{}/chat/completions", server.base_url()), &body);
    assert_eq!(resp, 400);
    assert_eq!(server.stats().rejected_requests, 1);
    assert_eq!(server.stats().chat_requests, 0);
}

fn ureq_post(url: &str, body: &serde_json::Value) -> u16 {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    agent.post(url).send_json(body).unwrap().status().as_u16()
}

#[test]
fn unreachable_host_is_a_transport_error() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let d = BackendDescriptor {
        max_retries: 1,
        backoff_ms: 1,
        timeout_ms: 2_000,
        ..BackendDescriptor::new(format!("http://{addr}/v1"), "m")
    };
    let model = connect_model(&d, None).unwrap();
    let err = model
        .respond(&ImageTensor::filled(1, 1, 0.0).unwrap(), None)
        .unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 2, .. }), "{err}");
}

#[test]
fn wire_and_in_process_runs_agree() {
    let server = server();
    let wire_model = connect_model(&desc(&server, "m"), None).unwrap();
    let wire_embed = connect_embedder(&desc(&server, "e"), None).unwrap();
    let local_model = MockVisionModel::new("local", MockRules::default());
    let local_embed = HashedEmbedder::new(vap_core::backends::mock::DEFAULT_EMBED_DIM, 0).unwrap();
    let x = ImageTensor::from_rgb8(3, 3, &[120, 130, 125, 127, 128, 126, 140, 110, 127].repeat(3)).unwrap();
    let config = PerturbationConfig {
        rounds: 3,
        num_queries: 4,
        seed: 42,
        ..Default::default()
    };
    let prompt = "Please describe this image in detail.";
    let a = run_vap(&x, prompt, wire_model.as_ref(), wire_embed.as_ref(), &config).unwrap();
    let b = run_vap(&x, prompt, &local_model, &local_embed, &config).unwrap();
    assert_eq!(a.perturbed_image, b.perturbed_image);
    assert_eq!(a.initial_responses, b.initial_responses);
    for (p, q) in a.loss_trace.iter().zip(&b.loss_trace) {
        assert!((p.composite - q.composite).abs() < 1e-12);
    }
}

#[test]
fn audit_log_records_every_attempt() {
    let server = server();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.jsonl");
    let model = connect_model(&desc(&server, "m"), Some(AuditLog::open(&path).unwrap())).unwrap();
    server.fail_next(1);
    model
        .respond(&ImageTensor::filled(1, 1, 0.2).unwrap(), Some("hi"))
        .unwrap();
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["status"], 503);
    assert_eq!(lines[1]["status"], 200);
    assert_eq!(lines[0]["request_id"], lines[1]["request_id"]);
}
