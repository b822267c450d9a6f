//! Bounded ingestion queue drained by one consumer thread.
//!
//! Producers never block: a full queue answers [`EngineError::QueueFull`].
//! The consumer applies batches in arrival order and publishes the alert
//! cursor after each one.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Instant;

use chaintwin_core::SourceKind;
use serde::Serialize;
use tokio::sync::{mpsc, oneshot, watch};

use crate::engine::{BatchReport, Engine};
use crate::error::{EngineError, Result};

/// The engine shared by the service's tasks. All writes go through the
/// mutex, so readers always see a state between two whole operations.
pub struct Shared {
    engine: Mutex<Engine>,
    alerts: watch::Sender<u64>,
}

impl Shared {
    pub fn new(engine: Engine) -> Arc<Self> {
        let (alerts, _) = watch::channel(engine.alert_cursor());
        Arc::new(Self {
            engine: Mutex::new(engine),
            alerts,
        })
    }

    pub fn lock(&self) -> MutexGuard<'_, Engine> {
        self.engine.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Runs `f` on the engine and publishes new alerts.
    pub fn write<T>(&self, f: impl FnOnce(&mut Engine) -> T) -> T {
        let mut engine = self.lock();
        let out = f(&mut engine);
        self.alerts.send_replace(engine.alert_cursor());
        out
    }

    /// Receives the newest alert id whenever it changes.
    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.alerts.subscribe()
    }
}

/// Splits a request body into event lines, skipping blank ones.
pub fn event_lines(body: &str) -> Vec<String> {
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Default)]
struct Counters {
    batches: AtomicU64,
    events: AtomicU64,
    busy_nanos: AtomicU64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueueStats {
    pub batches: u64,
    pub events: u64,
    pub queued: usize,
    pub capacity: usize,
    /// Events per second of consumer busy time.
    pub events_per_sec: Option<f64>,
}

struct Job {
    source: SourceKind,
    lines: Vec<String>,
    reply: oneshot::Sender<Result<BatchReport>>,
}

#[derive(Clone)]
pub struct IngestQueue {
    tx: mpsc::Sender<Job>,
    counters: Arc<Counters>,
}

impl IngestQueue {
    /// Starts the consumer thread. It stops when every queue handle is
    /// dropped.
    pub fn start(shared: Arc<Shared>, bound: usize) -> Self {
        let (tx, mut rx) = mpsc::channel::<Job>(bound.max(1));
        let counters = Arc::new(Counters::default());
        let c = counters.clone();
        thread::Builder::new()
            .name("ingest".into())
            .spawn(move || {
                while let Some(job) = rx.blocking_recv() {
                    let n = job.lines.len() as u64;
                    let start = Instant::now();
                    let result = shared.write(|e| e.ingest(job.source, job.lines));
                    c.busy_nanos
                        .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
                    c.batches.fetch_add(1, Ordering::Relaxed);
                    c.events.fetch_add(n, Ordering::Relaxed);
                    if let Err(e) = &result {
                        log::error!("ingesting a batch of {n} events failed: {e}");
                    }
                    let _ = job.reply.send(result);
                }
            })
            .expect("spawning the ingest thread");
        Self { tx, counters }
    }

    /// Queues a batch; the receiver yields its report once applied.
    pub fn submit(&self, source: SourceKind, lines: Vec<String>) -> Result<oneshot::Receiver<Result<BatchReport>>> {
        let (reply, rx) = oneshot::channel();
        self.tx.try_send(Job { source, lines, reply }).map_err(|e| match e {
            mpsc::error::TrySendError::Full(_) => EngineError::QueueFull,
            mpsc::error::TrySendError::Closed(_) => EngineError::Internal("ingest consumer stopped".into()),
        })?;
        Ok(rx)
    }

    /// Queues a batch and waits for it to be applied.
    pub async fn ingest(&self, source: SourceKind, lines: Vec<String>) -> Result<BatchReport> {
        self.submit(source, lines)?
            .await
            .map_err(|_| EngineError::Internal("ingest consumer dropped the batch".into()))?
    }

    pub fn stats(&self) -> QueueStats {
        let busy = self.counters.busy_nanos.load(Ordering::Relaxed) as f64 / 1e9;
        let events = self.counters.events.load(Ordering::Relaxed);
        QueueStats {
            batches: self.counters.batches.load(Ordering::Relaxed),
            events,
            queued: self.tx.max_capacity() - self.tx.capacity(),
            capacity: self.tx.max_capacity(),
            events_per_sec: (busy > 0.0).then(|| events as f64 / busy),
        }
    }
}
