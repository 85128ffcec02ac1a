//! Shared harness: a live server on an ephemeral port with a manual clock.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use costudy_core::config::{Mode, SessionConfig};
use costudy_server::{AppState, Clock, ServerConfig};
use serde_json::{json, Value};
use tokio::sync::oneshot;

pub const VTT: &str = "WEBVTT

00:00.000 --> 00:06.000
Today we look at bubble sort.

00:06.000 --> 00:14.000
Each pass compares neighbours and swaps them when they are out of order.
";

const FAR: u64 = 1_000_000_000;

/// Session defaults with nothing scheduled, so the log only grows on input.
pub fn quiet_session(seed: u64) -> SessionConfig {
    let mut config = SessionConfig::default();
    config.seed = seed;
    config.mode = Mode::Full;
    config.scheduler.passive_interval_ms = [FAR, FAR];
    config.idle.mouse_idle_ms = FAR;
    config.idle.notes_idle_ms = FAR;
    config.idle.code_idle_ms = FAR;
    config.router.forward_interval_ms = [FAR, FAR];
    config
}

pub struct TestServer {
    pub base: String,
    pub clock: Arc<AtomicU64>,
    pub state: AppState,
    pub log_dir: PathBuf,
    pub client: reqwest::Client,
    dir: Option<tempfile::TempDir>,
    stop: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl TestServer {
    pub async fn start(session: SessionConfig) -> Self {
        Self::start_with(session, |_| {}).await
    }

    pub async fn start_with(session: SessionConfig, tweak: impl FnOnce(&mut ServerConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ServerConfig {
            log_dir: dir.path().join("logs"),
            assets_dir: dir.path().join("assets"),
            tick_ms: 5,
            persist_interval_ms: 0,
            heartbeat_ms: 60_000,
            ..ServerConfig::default()
        };
        tweak(&mut config);
        let log_dir = config.log_dir.clone();
        let (clock, cell) = Clock::manual();
        let state = AppState::new(config, session, clock).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(costudy_server::serve(listener, state.clone(), async {
            let _ = stopped.await;
        }));
        Self {
            base,
            clock: cell,
            state,
            log_dir,
            client: reqwest::Client::new(),
            dir: Some(dir),
            stop: Some(stop),
            task: Some(task),
        }
    }

    pub fn set_clock(&self, ms: u64) {
        self.clock.store(ms, Ordering::SeqCst);
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn create(&self, body: Value) -> String {
        let resp = self
            .client
            .post(self.url("/sessions"))
            .json(&body)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201);
        let body: Value = resp.json().await.unwrap();
        body["session_id"].as_str().unwrap().to_string()
    }

    pub async fn post_event(&self, id: &str, event: Value) -> (u16, Value) {
        let resp = self
            .client
            .post(self.url(&format!("/sessions/{id}/events")))
            .json(&event)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap())
    }

    pub async fn snapshot(&self, id: &str) -> (u16, Value) {
        let resp = self
            .client
            .get(self.url(&format!("/sessions/{id}")))
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn log(&self, id: &str) -> (u16, String) {
        let resp = self
            .client
            .get(self.url(&format!("/sessions/{id}/log")))
            .send()
            .await
            .unwrap();
        (resp.status().as_u16(), resp.text().await.unwrap())
    }

    /// Waits until the session's snapshot reports at least `seq`.
    pub async fn wait_for_seq(&self, id: &str, seq: u64) {
        for _ in 0..500 {
            let (_, snap) = self.snapshot(id).await;
            if snap["last_seq"].as_u64().unwrap_or(0) >= seq {
                return;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("session {id} never reached seq {seq}");
    }

    /// Shuts the server down gracefully. The returned guard keeps the log
    /// directory alive.
    pub async fn stop(mut self) -> tempfile::TempDir {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(task) = self.task.take() {
            task.await.unwrap().unwrap();
        }
        self.dir.take().unwrap()
    }
}

pub fn chat(room: &str, text: &str) -> Value {
    json!({ "kind": "user_chat", "data": { "room": room, "text": text } })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub event: String,
    pub id: Option<u64>,
    pub data: Value,
}

/// Minimal server-sent-event reader over a streaming response body.
pub struct SseReader {
    response: reqwest::Response,
    buffer: String,
}

impl SseReader {
    pub async fn open(client: &reqwest::Client, url: &str, last_event_id: Option<u64>) -> Self {
        let mut request = client.get(url);
        if let Some(id) = last_event_id {
            request = request.header("Last-Event-ID", id.to_string());
        }
        let response = request.send().await.unwrap();
        assert_eq!(response.status(), 200);
        let content_type = response.headers()["content-type"].to_str().unwrap().to_string();
        assert!(content_type.starts_with("text/event-stream"), "{content_type}");
        Self {
            response,
            buffer: String::new(),
        }
    }

    /// Next frame, or `None` when the stream ends or stays silent for `wait`.
    pub async fn next(&mut self, wait: Duration) -> Option<Frame> {
        loop {
            if let Some(end) = self.buffer.find("\n\n") {
                let block: String = self.buffer.drain(..end + 2).collect();
                if let Some(frame) = parse_block(&block) {
                    return Some(frame);
                }
                continue;
            }
            match tokio::time::timeout(wait, self.response.chunk()).await {
                Ok(Ok(Some(bytes))) => self.buffer.push_str(&String::from_utf8_lossy(&bytes)),
                _ => return None,
            }
        }
    }

    /// Collects event frames (skipping heartbeats) until `n` have arrived.
    pub async fn take_events(&mut self, n: usize) -> Vec<Frame> {
        let mut out = Vec::new();
        while out.len() < n {
            match self.next(Duration::from_secs(5)).await {
                Some(frame) if frame.event == "hb" => {}
                Some(frame) => out.push(frame),
                None => break,
            }
        }
        out
    }
}

fn parse_block(block: &str) -> Option<Frame> {
    let mut event = None;
    let mut id = None;
    let mut data = String::new();
    for line in block.lines() {
        if let Some(v) = line.strip_prefix("event:") {
            event = Some(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("id:") {
            id = v.trim().parse().ok();
        } else if let Some(v) = line.strip_prefix("data:") {
            data.push_str(v.trim_start());
        }
    }
    Some(Frame {
        event: event?,
        id,
        data: serde_json::from_str(&data).ok()?,
    })
}

/// Compares `actual` with the golden file, or rewrites it when
/// `COSTUDY_BLESS=1` is set.
pub fn check_golden(name: &str, actual: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name);
    let rendered = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if std::env::var("COSTUDY_BLESS").as_deref() == Ok("1") {
        std::fs::write(&path, &rendered).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing golden {}; run with COSTUDY_BLESS=1", path.display()));
    let expected: Value = serde_json::from_str(&expected).unwrap();
    assert_eq!(&expected, actual, "golden {name} differs");
}
