//! Log files: atomic replacement, idempotence, flush on close and shutdown,
//! and no credentials in anything written.

mod common;

use std::io;

use common::{chat, quiet_session, TestServer, VTT};
use costudy_core::event::{ActivityPing, EventPayload, SessionEvent};
use costudy_core::provider::{Backend, RetryConfig};
use costudy_core::Channel;
use costudy_server::persist;
use serde_json::json;

fn pings(n: u64) -> Vec<SessionEvent> {
    (1..=n)
        .map(|seq| SessionEvent {
            seq,
            at_ms: seq * 7,
            cause: None,
            payload: EventPayload::ActivityPing(ActivityPing {
                channel: Channel::ALL[(seq % 3) as usize],
            }),
        })
        .collect()
}

#[test]
fn ten_thousand_events_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let events = pings(10_000);
    let path = persist::persist(dir.path(), "s-big", &events).unwrap();
    assert_eq!(path, persist::log_path(dir.path(), "s-big"));
    assert_eq!(persist::load(dir.path(), "s-big").unwrap(), events);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 10_000);
}

#[test]
fn persisting_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let events = pings(50);
    persist::persist(dir.path(), "s-1", &events).unwrap();
    let first = persist::load_bytes(dir.path(), "s-1").unwrap();
    persist::persist(dir.path(), "s-1", &events).unwrap();
    assert_eq!(persist::load_bytes(dir.path(), "s-1").unwrap(), first);
}

#[test]
fn a_crash_before_rename_keeps_the_previous_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = persist::log_path(dir.path(), "s-crash");
    persist::persist(dir.path(), "s-crash", &pings(3)).unwrap();
    let before = std::fs::read(&path).unwrap();

    let longer = {
        let mut out = Vec::new();
        costudy_core::event::write_jsonl(&pings(9), &mut out).unwrap();
        out
    };
    let crashed = persist::write_atomic_with(&path, &longer, || Err(io::Error::other("simulated crash")));
    assert!(crashed.is_err());
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(persist::load(dir.path(), "s-crash").unwrap(), pings(3));

    // the next successful write replaces both the stale temp file and the log
    persist::write_atomic(&path, &longer).unwrap();
    assert_eq!(persist::load(dir.path(), "s-crash").unwrap(), pings(9));
}

#[tokio::test]
async fn live_sessions_persist_and_shutdown_flushes() {
    let server = TestServer::start_with(quiet_session(2), |c| c.persist_interval_ms = 3_600_000).await;
    let id = server.create(json!({ "transcript": VTT })).await;
    server.set_clock(1_000);
    server
        .post_event(&id, chat("group", "How does the swap work?"))
        .await;
    let (_, live) = server.log(&id).await;
    let log_dir = server.log_dir.clone();
    server.state.shutdown().await;
    let on_disk = String::from_utf8(persist::load_bytes(&log_dir, &id).unwrap()).unwrap();
    assert_eq!(on_disk, live);
    server.stop().await;
}

#[tokio::test]
async fn graceful_stop_flushes_every_session() {
    let server = TestServer::start_with(quiet_session(2), |c| c.persist_interval_ms = 3_600_000).await;
    let a = server.create(json!({ "transcript": VTT })).await;
    let b = server
        .create(json!({ "transcript": VTT, "mode": "baseline" }))
        .await;
    server.set_clock(1_000);
    server.post_event(&a, chat("agent-1", "hi")).await;
    server.post_event(&b, chat("agent-1", "hi")).await;
    let (_, live_a) = server.log(&a).await;
    let (_, live_b) = server.log(&b).await;
    let log_dir = server.log_dir.clone();
    let _dir = server.stop().await;
    assert_eq!(persist::load_bytes(&log_dir, &a).unwrap(), live_a.into_bytes());
    assert_eq!(persist::load_bytes(&log_dir, &b).unwrap(), live_b.into_bytes());
}

const SECRET: &str = "sk-live-7Qx2-DO-NOT-LOG";

#[tokio::test]
async fn api_key_never_reaches_logs_snapshots_or_streams() {
    let env = "COSTUDY_TEST_SCAN_KEY";
    std::env::set_var(env, SECRET);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);

    let mut session = quiet_session(3);
    session.provider.backend = Backend::Http;
    session.provider.base_url = Some(dead);
    session.provider.api_key_env = Some(env.into());
    session.provider.retry = RetryConfig {
        max_attempts: 2,
        backoff_ms: 1,
    };
    session.provider.timeout_ms = 500;
    let server = TestServer::start(session).await;
    let id = server.create(json!({ "transcript": VTT })).await;
    server.set_clock(1_000);
    server.post_event(&id, chat("agent-1", "are you there?")).await;
    server.post_event(&id, chat("group", "anyone?")).await;

    let (_, log) = server.log(&id).await;
    assert!(
        log.contains("could not reply"),
        "failures surface as notices: {log}"
    );
    let (_, snapshot) = server.snapshot(&id).await;
    let stream = {
        let url = server.url(&format!("/sessions/{id}/stream"));
        let mut reader = common::SseReader::open(&server.client, &url, None).await;
        let n = snapshot["last_seq"].as_u64().unwrap() as usize;
        serde_json::to_string(
            &reader
                .take_events(n)
                .await
                .iter()
                .map(|f| f.data.clone())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    };
    let log_dir = server.log_dir.clone();
    let _dir = server.stop().await;

    let mut artifacts = vec![log, snapshot.to_string(), stream];
    for entry in std::fs::read_dir(&log_dir).unwrap() {
        artifacts.push(std::fs::read_to_string(entry.unwrap().path()).unwrap());
    }
    for text in &artifacts {
        assert!(!text.contains(SECRET), "api key leaked");
    }
}
