//! One thread per session: the single writer for that session's state.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use costudy_core::event::{EventPayload, SessionEvent};
use costudy_core::session::{Session, SessionError, SessionSnapshot};
use tokio::sync::{broadcast, oneshot};

use crate::persist;

/// Milliseconds on a server-wide clock. Sessions subtract their start time.
#[derive(Debug, Clone)]
pub enum Clock {
    Wall(Instant),
    /// Driven by tests.
    Manual(Arc<AtomicU64>),
}

impl Clock {
    pub fn wall() -> Self {
        Clock::Wall(Instant::now())
    }

    pub fn manual() -> (Self, Arc<AtomicU64>) {
        let cell = Arc::new(AtomicU64::new(0));
        (Clock::Manual(cell.clone()), cell)
    }

    pub fn now_ms(&self) -> u64 {
        match self {
            Clock::Wall(origin) => origin.elapsed().as_millis() as u64,
            Clock::Manual(cell) => cell.load(Ordering::SeqCst),
        }
    }
}

pub enum Command {
    Ingest {
        payload: EventPayload,
        reply: oneshot::Sender<Result<u64, SessionError>>,
    },
    Snapshot(oneshot::Sender<SessionSnapshot>),
    EventsAfter(u64, oneshot::Sender<Vec<SessionEvent>>),
    Close(oneshot::Sender<std::io::Result<PathBuf>>),
}

#[derive(Debug, Clone)]
pub struct WorkerSettings {
    pub tick: Duration,
    pub persist_interval: Duration,
    pub log_dir: PathBuf,
}

/// Handle held by the HTTP layer.
#[derive(Clone)]
pub struct SessionHandle {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<Arc<SessionEvent>>,
}

#[derive(Debug, thiserror::Error)]
#[error("session worker has stopped")]
pub struct WorkerGone;

impl SessionHandle {
    pub fn spawn(
        session: Session,
        clock: Clock,
        settings: WorkerSettings,
        buffer: usize,
    ) -> std::io::Result<Self> {
        let (tx, rx) = mpsc::channel();
        let (events, _) = broadcast::channel(buffer);
        let publisher = events.clone();
        let name = format!("session-{}", session.id());
        let origin_ms = clock.now_ms();
        std::thread::Builder::new()
            .name(name)
            .spawn(move || run(session, clock, origin_ms, settings, rx, publisher))?;
        Ok(Self { commands: tx, events })
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<SessionEvent>> {
        self.events.subscribe()
    }

    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, WorkerGone> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(make(tx)).map_err(|_| WorkerGone)?;
        rx.await.map_err(|_| WorkerGone)
    }

    pub async fn ingest(&self, payload: EventPayload) -> Result<Result<u64, SessionError>, WorkerGone> {
        self.call(|reply| Command::Ingest { payload, reply }).await
    }

    pub async fn snapshot(&self) -> Result<SessionSnapshot, WorkerGone> {
        self.call(Command::Snapshot).await
    }

    pub async fn events_after(&self, seq: u64) -> Result<Vec<SessionEvent>, WorkerGone> {
        self.call(|reply| Command::EventsAfter(seq, reply)).await
    }

    pub async fn close(&self) -> Result<std::io::Result<PathBuf>, WorkerGone> {
        self.call(Command::Close).await
    }
}

struct Worker {
    session: Session,
    clock: Clock,
    origin_ms: u64,
    settings: WorkerSettings,
    publisher: broadcast::Sender<Arc<SessionEvent>>,
    published: u64,
    persisted: u64,
    last_persist: Instant,
}

impl Worker {
    fn now(&self) -> u64 {
        self.clock.now_ms().saturating_sub(self.origin_ms)
    }

    fn publish(&mut self) {
        for event in self.session.events_after(self.published) {
            // no subscribers is fine; they resume from the log
            let _ = self.publisher.send(Arc::new(event.clone()));
        }
        self.published = self.session.last_seq();
    }

    fn persist(&mut self, force: bool) -> std::io::Result<PathBuf> {
        let path = persist::log_path(&self.settings.log_dir, self.session.id());
        let due = self.last_persist.elapsed() >= self.settings.persist_interval;
        let dirty = self.persisted != self.session.last_seq() || !path.exists();
        if dirty && (force || due) {
            persist::persist(&self.settings.log_dir, self.session.id(), self.session.log())?;
            self.persisted = self.session.last_seq();
            self.last_persist = Instant::now();
        }
        Ok(path)
    }

    fn handle(&mut self, command: Command) -> bool {
        match command {
            Command::Ingest { payload, reply } => {
                let now = self.now();
                match self.session.accept(now, payload) {
                    Ok(seq) => {
                        let _ = reply.send(Ok(seq));
                        self.publish();
                        if let Err(err) = self.session.dispatch(seq) {
                            tracing::error!(error = %err, "dispatch failed");
                        }
                    }
                    Err(err) => {
                        let _ = reply.send(Err(err));
                    }
                }
            }
            Command::Snapshot(reply) => {
                let _ = reply.send(self.session.snapshot());
            }
            Command::EventsAfter(seq, reply) => {
                let _ = reply.send(self.session.events_after(seq).to_vec());
            }
            Command::Close(reply) => {
                let now = self.now();
                self.session.advance(now);
                self.publish();
                let _ = reply.send(self.persist(true));
                return false;
            }
        }
        true
    }
}

fn run(
    session: Session,
    clock: Clock,
    origin_ms: u64,
    settings: WorkerSettings,
    commands: mpsc::Receiver<Command>,
    publisher: broadcast::Sender<Arc<SessionEvent>>,
) {
    let mut worker = Worker {
        session,
        clock,
        origin_ms,
        settings,
        publisher,
        published: 0,
        persisted: 0,
        last_persist: Instant::now(),
    };
    loop {
        let keep_going = match commands.recv_timeout(worker.settings.tick) {
            Ok(command) => worker.handle(command),
            Err(RecvTimeoutError::Timeout) => true,
            Err(RecvTimeoutError::Disconnected) => false,
        };
        if !keep_going {
            break;
        }
        let now = worker.now();
        worker.session.advance(now);
        worker.publish();
        if let Err(err) = worker.persist(false) {
            tracing::error!(error = %err, "cannot persist session log");
        }
    }
    if let Err(err) = worker.persist(true) {
        tracing::error!(error = %err, "cannot persist session log");
    }
    tracing::info!(session = worker.session.id(), "session worker stopped");
}
