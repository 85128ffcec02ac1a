//! HTTP surface: lifecycle, ingress validation, log export, manifest.

mod common;

use common::{chat, check_golden, quiet_session, TestServer, VTT};
use costudy_core::scheduler::AssetManifest;
use costudy_server::{AppState, Clock, ServerConfig, ServerError};
use serde_json::{json, Value};

#[tokio::test]
async fn create_returns_an_id_and_protocol_version() {
    let server = TestServer::start(quiet_session(1)).await;
    let resp = server
        .client
        .post(server.url("/sessions"))
        .json(&json!({ "transcript": VTT, "seed": 5 }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["protocol_version"], 1);
    let id = body["session_id"].as_str().unwrap();
    assert!(costudy_server::persist::is_valid_session_id(id));

    let other = server.create(json!({ "transcript": VTT, "seed": 5 })).await;
    assert_ne!(id, other, "ids are unique even for equal seeds");
    server.stop().await;
}

#[tokio::test]
async fn create_rejects_bad_bodies() {
    let server = TestServer::start(quiet_session(1)).await;
    let cases = [
        (json!({ "transcript": VTT, "sede": 1 }), Some("sede")),
        (json!({ "transcript": VTT, "mode": "partial" }), None),
        (json!({ "transcript": "00:00.000 --> oops" }), None),
    ];
    for (body, field) in cases {
        let resp = server
            .client
            .post(server.url("/sessions"))
            .json(&body)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 400, "{body}");
        let err: Value = resp.json().await.unwrap();
        assert!(err["error"].is_string());
        if let Some(field) = field {
            assert_eq!(err["field"], field);
        }
    }
    // no transcript and no server default
    let resp = server.client.post(server.url("/sessions")).send().await.unwrap();
    assert_eq!(resp.status(), 400);
    let err: Value = resp.json().await.unwrap();
    assert_eq!(err["field"], "transcript");
    server.stop().await;
}

#[tokio::test]
async fn empty_body_uses_server_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let vtt = dir.path().join("lesson.vtt");
    std::fs::write(&vtt, VTT).unwrap();
    let server = TestServer::start_with(quiet_session(1), |c| c.transcript = Some(vtt)).await;
    let resp = server.client.post(server.url("/sessions")).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    server.stop().await;
}

#[tokio::test]
async fn events_get_dense_seqs_and_a_snapshot() {
    let server = TestServer::start(quiet_session(1)).await;
    let id = server.create(json!({ "transcript": VTT })).await;
    server.set_clock(1_000);
    let (status, body) = server.post_event(&id, chat("agent-1", "why O(n^2)?")).await;
    assert_eq!(status, 200);
    assert_eq!(body["seq"], 1);
    server.wait_for_seq(&id, 4).await;

    let (status, snap) = server.snapshot(&id).await;
    assert_eq!(status, 200);
    assert_eq!(snap["protocol_version"], 1);
    assert_eq!(snap["session_id"], id.as_str());
    assert_eq!(snap["usage"]["chat_messages"], 1);
    assert_eq!(snap["rooms"]["agent-1"].as_array().unwrap().len(), 2);
    assert_eq!(snap["agents"].as_array().unwrap().len(), 6);
    server.stop().await;
}

#[tokio::test]
async fn invalid_events_name_the_field() {
    let server = TestServer::start(quiet_session(1)).await;
    let id = server.create(json!({ "transcript": VTT })).await;
    let cases = [
        (chat("group", "   "), Some("text")),
        (
            json!({ "kind": "user_chat", "data": { "room": "group" } }),
            Some("text"),
        ),
        (chat("agent-9", "hi"), Some("agent_id")),
        (
            json!({ "kind": "brush_query", "data": {
                "region": [0, 0, 5000, 10], "image_b64": "aGk=", "question": "q", "video_ms": 0
            }}),
            Some("region"),
        ),
        (
            json!({ "kind": "user_audio", "data": {
                "agent_id": "agent-1", "audio_b64": "!!notbase64", "mime": "audio/wav"
            }}),
            Some("audio_b64"),
        ),
        (
            json!({ "kind": "agent_chat", "data": {
                "agent_id": "agent-1", "room": "group", "text": "spoof", "action": null, "modality": "text"
            }}),
            None,
        ),
        (json!({ "kind": "dance", "data": {} }), None),
    ];
    for (event, field) in cases {
        let (status, body) = server.post_event(&id, event.clone()).await;
        assert_eq!(status, 400, "{event} -> {body}");
        if let Some(field) = field {
            assert_eq!(body["field"], field, "{event} -> {body}");
        }
    }
    let resp = server
        .client
        .post(server.url(&format!("/sessions/{id}/events")))
        .body("not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    let (_, snap) = server.snapshot(&id).await;
    assert_eq!(snap["last_seq"], 0, "rejected input is never logged");
    server.stop().await;
}

#[tokio::test]
async fn deleted_sessions_are_gone_but_their_log_remains() {
    let server = TestServer::start(quiet_session(2)).await;
    let id = server.create(json!({ "transcript": VTT })).await;
    server.set_clock(2_000);
    server
        .post_event(&id, chat("group", "How does the swap work?"))
        .await;
    server.wait_for_seq(&id, 3).await;
    let (status, live) = server.log(&id).await;
    assert_eq!(status, 200);

    let resp = server
        .client
        .delete(server.url(&format!("/sessions/{id}")))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 204);

    assert_eq!(server.snapshot(&id).await.0, 404);
    assert_eq!(server.post_event(&id, chat("group", "hello?")).await.0, 404);
    let resp = server
        .client
        .delete(server.url(&format!("/sessions/{id}")))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 404);

    let (status, archived) = server.log(&id).await;
    assert_eq!(status, 200);
    assert_eq!(archived, live);
    assert_eq!(server.log("s-doesnotexist").await.0, 404);
    assert_eq!(server.log("..%2Fetc").await.0, 404);
    server.stop().await;
}

#[tokio::test]
async fn log_is_ndjson_matching_the_core_format() {
    let server = TestServer::start(quiet_session(3)).await;
    let id = server.create(json!({ "transcript": VTT })).await;
    server.set_clock(4_000);
    server.post_event(&id, chat("agent-2", "what is a pass?")).await;
    server.wait_for_seq(&id, 3).await;
    let resp = server
        .client
        .get(server.url(&format!("/sessions/{id}/log")))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let text = resp.text().await.unwrap();
    let events = costudy_core::event::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(events[0].seq, 1);
    assert_eq!(events[0].at_ms, 4_000);
    for line in text.lines() {
        let record: Value = serde_json::from_str(line).unwrap();
        for key in ["seq", "at_ms", "kind", "cause", "data"] {
            assert!(record.get(key).is_some(), "{key} missing in {line}");
        }
    }
    server.stop().await;
}

#[tokio::test]
async fn snapshot_matches_golden() {
    let server = TestServer::start(quiet_session(7)).await;
    let id = server.create(json!({ "transcript": VTT })).await;
    server.set_clock(1_500);
    server
        .post_event(&id, chat("agent-3", "Why do we need two loops?"))
        .await;
    server.set_clock(3_000);
    let (_, body) = server.post_event(&id, chat("group", "Is it stable?")).await;
    let last = body["seq"].as_u64().unwrap();
    server.wait_for_seq(&id, last + 1).await;
    let (_, mut snap) = server.snapshot(&id).await;
    snap["session_id"] = json!("<id>");
    check_golden("snapshot.json", &snap);
    server.stop().await;
}

#[tokio::test]
async fn manifest_is_served_when_configured() {
    let server = TestServer::start(quiet_session(1)).await;
    assert_eq!(
        server
            .client
            .get(server.url("/manifest"))
            .send()
            .await
            .unwrap()
            .status(),
        404
    );
    server.stop().await;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    let ids: Vec<String> = (1..=6).map(|i| format!("agent-{i}")).collect();
    let manifest = AssetManifest::conventional(&ids);
    std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let server = TestServer::start_with(quiet_session(1), |c| c.asset_manifest = Some(path)).await;
    let resp = server.client.get(server.url("/manifest")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let served: AssetManifest = resp.json().await.unwrap();
    assert_eq!(served, manifest);
    server.stop().await;
}

#[test]
fn incomplete_manifest_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    let ids: Vec<String> = (1..=5).map(|i| format!("agent-{i}")).collect();
    let manifest = AssetManifest::conventional(&ids);
    std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let config = ServerConfig {
        asset_manifest: Some(path),
        log_dir: dir.path().join("logs"),
        ..ServerConfig::default()
    };
    let err = AppState::new(config, quiet_session(1), Clock::manual().0)
        .err()
        .unwrap();
    assert!(matches!(err, ServerError::Manifest(_)), "{err}");
    assert!(err.to_string().contains("agent-6"), "{err}");
}

#[tokio::test]
async fn assets_are_served_from_the_assets_dir() {
    let server = TestServer::start(quiet_session(1)).await;
    let clip = server.state.config().assets_dir.join("agent-1");
    std::fs::create_dir_all(&clip).unwrap();
    std::fs::write(clip.join("typing.mp4"), b"fake-mp4").unwrap();
    let resp = server
        .client
        .get(server.url("/assets/agent-1/typing.mp4"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.bytes().await.unwrap().as_ref(), b"fake-mp4");
    server.stop().await;
}
