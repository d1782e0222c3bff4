//! Outbound record publishing with a bounded queue and retry backoff.
//!
//! While the link is down records queue up; the oldest are dropped once the
//! queue is full. When the link returns the queue drains in order. Failed
//! deliveries are retried with exponential backoff.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::domain::{EventRecord, Timestamp};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;
pub const INITIAL_BACKOFF: Duration = Duration::from_secs(1);
pub const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
#[error("delivery failed: {0}")]
pub struct TransportError(pub String);

/// Where published records go.
pub trait Transport: Send {
    fn deliver(&mut self, record: &EventRecord) -> Result<(), TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn deliver(&mut self, record: &EventRecord) -> Result<(), TransportError> {
        (**self).deliver(record)
    }
}

/// Collects delivered records in memory. Clones share the same buffer, so a
/// test can keep one handle while the publisher owns another.
#[derive(Debug, Clone)]
pub struct MemorySink {
    delivered: Arc<Mutex<Vec<EventRecord>>>,
    count: Arc<Mutex<usize>>,
    failing: Arc<Mutex<bool>>,
    retain: bool,
}

impl Default for MemorySink {
    fn default() -> Self {
        MemorySink {
            delivered: Arc::default(),
            count: Arc::default(),
            failing: Arc::default(),
            retain: true,
        }
    }
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    /// A sink that only counts deliveries, for long runs.
    pub fn counting() -> Self {
        MemorySink {
            retain: false,
            ..Self::default()
        }
    }

    /// While set, every delivery fails.
    pub fn set_failing(&self, failing: bool) {
        *self.failing.lock().expect("sink lock") = failing;
    }

    pub fn delivered(&self) -> Vec<EventRecord> {
        self.delivered.lock().expect("sink lock").clone()
    }

    /// Number of successful deliveries.
    pub fn len(&self) -> usize {
        *self.count.lock().expect("sink lock")
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Transport for MemorySink {
    fn deliver(&mut self, record: &EventRecord) -> Result<(), TransportError> {
        if *self.failing.lock().expect("sink lock") {
            return Err(TransportError("sink is failing".into()));
        }
        *self.count.lock().expect("sink lock") += 1;
        if self.retain {
            self.delivered.lock().expect("sink lock").push(record.clone());
        }
        Ok(())
    }
}

/// Appends delivered records to an NDJSON file.
#[derive(Debug)]
pub struct FileSink {
    file: File,
}

impl FileSink {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        Ok(FileSink {
            file: OpenOptions::new().create(true).append(true).open(path)?,
        })
    }
}

impl Transport for FileSink {
    fn deliver(&mut self, record: &EventRecord) -> Result<(), TransportError> {
        let mut line = serde_json::to_vec(record).map_err(|e| TransportError(e.to_string()))?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|e| TransportError(e.to_string()))
    }
}

/// Queue and link bookkeeping, independent of the transport.
#[derive(Debug, Clone, PartialEq)]
pub struct PublisherState {
    pub connected: bool,
    pub pending: VecDeque<EventRecord>,
    pub capacity: usize,
    pub last_success: Option<Timestamp>,
    pub backoff: Duration,
    pub next_retry: Option<Timestamp>,
    pub dropped_total: u64,
    pub delivered_total: u64,
    /// Set when delivery stopped; cleared by the next successful delivery.
    pub interrupted: bool,
    /// Drops since the last interruption began.
    pub dropped_in_interruption: u64,
}

impl PublisherState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        PublisherState {
            connected: true,
            pending: VecDeque::new(),
            capacity,
            last_success: None,
            backoff: INITIAL_BACKOFF,
            next_retry: None,
            dropped_total: 0,
            delivered_total: 0,
            interrupted: false,
            dropped_in_interruption: 0,
        }
    }
}

impl Default for PublisherState {
    fn default() -> Self {
        Self::new(DEFAULT_QUEUE_CAPACITY)
    }
}

/// Reported on the first successful delivery after an interruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resumed {
    pub at: Timestamp,
    pub delivered: u64,
    pub dropped_total: u64,
}

/// What one publisher call did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PublishReport {
    pub delivered: u64,
    /// Records dropped from the front of the queue by this call.
    pub dropped: u64,
    pub resumed: Option<Resumed>,
}

#[derive(Debug)]
pub struct Publisher<T> {
    state: PublisherState,
    transport: T,
}

impl<T: Transport> Publisher<T> {
    pub fn new(transport: T) -> Self {
        Self::with_capacity(transport, DEFAULT_QUEUE_CAPACITY)
    }

    pub fn with_capacity(transport: T, capacity: usize) -> Self {
        Publisher {
            state: PublisherState::new(capacity),
            transport,
        }
    }

    pub fn state(&self) -> &PublisherState {
        &self.state
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// When the next backoff retry is due, if one is scheduled.
    pub fn next_retry(&self) -> Option<Timestamp> {
        self.state.next_retry.filter(|_| self.state.connected)
    }

    pub fn publish(&mut self, record: EventRecord, now: Timestamp) -> PublishReport {
        let mut report = PublishReport::default();
        if self.state.pending.len() == self.state.capacity {
            self.state.pending.pop_front();
            self.state.dropped_total += 1;
            self.state.dropped_in_interruption += 1;
            report.dropped = 1;
            tracing::debug!(dropped_total = self.state.dropped_total, "publish queue full, dropped oldest record");
        }
        self.state.pending.push_back(record);
        // a scheduled retry owns the queue until it fires
        if self.state.connected && self.state.next_retry.is_none() {
            let drained = self.drain(now);
            report.delivered = drained.delivered;
            report.resumed = drained.resumed;
        }
        report
    }

    /// Network edge. Link-down stops delivery; link-up drains immediately
    /// with a fresh backoff.
    pub fn set_link(&mut self, up: bool, now: Timestamp) -> PublishReport {
        if !up {
            if self.state.connected {
                self.state.connected = false;
                self.interrupt();
            }
            return PublishReport::default();
        }
        self.state.connected = true;
        self.state.backoff = INITIAL_BACKOFF;
        self.state.next_retry = None;
        self.drain(now)
    }

    /// Runs a retry if one is due at `now`.
    pub fn poll_retry(&mut self, now: Timestamp) -> PublishReport {
        match self.next_retry() {
            Some(due) if due <= now => {
                self.state.next_retry = None;
                self.drain(now)
            }
            _ => PublishReport::default(),
        }
    }

    /// Power loss: queued records are gone and the link is down until the
    /// next `set_link`. Returns how many were lost.
    pub fn discard_pending(&mut self) -> u64 {
        let lost = self.state.pending.len() as u64;
        self.state.pending.clear();
        self.state.dropped_total += lost;
        self.state.next_retry = None;
        self.state.connected = false;
        self.interrupt();
        self.state.dropped_in_interruption += lost;
        lost
    }

    fn interrupt(&mut self) {
        if !self.state.interrupted {
            self.state.interrupted = true;
            self.state.dropped_in_interruption = 0;
        }
    }

    fn drain(&mut self, now: Timestamp) -> PublishReport {
        let mut report = PublishReport::default();
        while let Some(front) = self.state.pending.front() {
            match self.transport.deliver(front) {
                Ok(()) => {
                    self.state.pending.pop_front();
                    report.delivered += 1;
                }
                Err(e) => {
                    tracing::debug!(error = %e, backoff_s = self.state.backoff.as_secs_f64(), "publish failed, will retry");
                    self.interrupt();
                    self.state.next_retry = Some(now + self.state.backoff);
                    self.state.backoff = (self.state.backoff * 2).min(MAX_BACKOFF);
                    break;
                }
            }
        }
        if report.delivered > 0 {
            self.state.delivered_total += report.delivered;
            self.state.last_success = Some(now);
            if self.state.next_retry.is_none() {
                self.state.backoff = INITIAL_BACKOFF;
            }
            if self.state.interrupted {
                self.state.interrupted = false;
                report.resumed = Some(Resumed {
                    at: now,
                    delivered: report.delivered,
                    dropped_total: self.state.dropped_total,
                });
            }
        }
        report
    }
}
