//! Shared state between the control loop and the HTTP service: the latest
//! readings snapshot, the event history, and the command queue.
//!
//! The control loop is the only writer. Request handlers read snapshots and
//! enqueue commands, then wait for the loop to answer.

pub mod publisher;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::control::{FeederState, PumpState};
use crate::domain::{EventRecord, FeedResult, ParameterKind, ParameterReading, RuleSet, Timestamp};

pub use publisher::{FileSink, MemorySink, Publisher, PublisherState, Resumed, Transport, TransportError};

/// How long a request waits for the control loop to answer a command.
pub const COMMAND_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Alert,
}

/// Everything the dashboard shows, taken from one poll cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingsSnapshot {
    pub cycle: u64,
    pub readings: BTreeMap<ParameterKind, ParameterReading>,
    pub statuses: BTreeMap<ParameterKind, Status>,
    pub pump: PumpState,
    pub feeder: FeederState,
    pub server_time: Timestamp,
}

impl ReadingsSnapshot {
    pub fn new(
        cycle: u64,
        readings: &[ParameterReading],
        rules: &RuleSet,
        pump: PumpState,
        feeder: FeederState,
        server_time: Timestamp,
    ) -> Self {
        let readings: BTreeMap<_, _> = readings.iter().map(|r| (r.kind, *r)).collect();
        ReadingsSnapshot {
            cycle,
            statuses: derive_statuses(&readings, rules),
            readings,
            pump,
            feeder,
            server_time,
        }
    }
}

/// `Alert` exactly when the kind's rule is violated by the reading.
pub fn derive_statuses(
    readings: &BTreeMap<ParameterKind, ParameterReading>,
    rules: &RuleSet,
) -> BTreeMap<ParameterKind, Status> {
    readings
        .iter()
        .map(|(kind, r)| {
            let violated = rules.get(*kind).and_then(|rule| rule.violates(r.value)).is_some();
            (*kind, if violated { Status::Alert } else { Status::Ok })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TelemetryError {
    #[error("no poll cycle has completed yet")]
    ServiceStarting,
    #[error("portions must be at least 1, got {0}")]
    InvalidPortions(i64),
    #[error("limit must be at least 1")]
    InvalidLimit,
    #[error("invalid cursor {0:?}")]
    InvalidCursor(String),
    #[error("control loop is not running")]
    ControlUnavailable,
    #[error("control loop did not answer in time")]
    Timeout,
}

/// A command from a request handler, carrying the channel for its answer.
#[derive(Debug)]
pub enum ControlRequest {
    Feed {
        portions: u32,
        reply: SyncSender<FeedResult>,
    },
    Pump {
        on: bool,
        reply: SyncSender<PumpState>,
    },
}

/// Receiving end of the command queue, owned by the control loop.
#[derive(Debug)]
pub struct CommandInbox {
    rx: Receiver<ControlRequest>,
}

impl CommandInbox {
    pub fn try_next(&self) -> Option<ControlRequest> {
        self.rx.try_recv().ok()
    }

    /// Waits up to `timeout` for a command.
    pub fn next_within(&self, timeout: Duration) -> Option<ControlRequest> {
        match self.rx.recv_timeout(timeout) {
            Ok(r) => Some(r),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => {
                std::thread::sleep(timeout);
                None
            }
        }
    }
}

/// One page of history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPage {
    pub records: Vec<EventRecord>,
    /// Pass back as `cursor` to fetch the next page.
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub uptime_s: f64,
    pub clock_synced: bool,
}

#[derive(Debug)]
struct HubInner {
    snapshot: RwLock<Option<Arc<ReadingsSnapshot>>>,
    events: RwLock<Vec<EventRecord>>,
    commands: Mutex<Option<Sender<ControlRequest>>>,
    clock_synced: AtomicBool,
    started: Instant,
}

/// Cheaply clonable handle shared by the control loop and request handlers.
#[derive(Debug, Clone)]
pub struct TelemetryHub {
    inner: Arc<HubInner>,
}

impl TelemetryHub {
    /// A hub whose commands are served by the returned inbox.
    pub fn new() -> (Self, CommandInbox) {
        let (tx, rx) = mpsc::channel();
        (Self::build(Some(tx)), CommandInbox { rx })
    }

    /// A hub that serves readings and history but accepts no commands.
    pub fn read_only() -> Self {
        Self::build(None)
    }

    fn build(tx: Option<Sender<ControlRequest>>) -> Self {
        TelemetryHub {
            inner: Arc::new(HubInner {
                snapshot: RwLock::new(None),
                events: RwLock::new(Vec::new()),
                commands: Mutex::new(tx),
                clock_synced: AtomicBool::new(false),
                started: Instant::now(),
            }),
        }
    }

    pub fn publish_snapshot(&self, snapshot: ReadingsSnapshot) {
        *self.inner.snapshot.write().expect("snapshot lock") = Some(Arc::new(snapshot));
    }

    pub fn push_events(&self, records: impl IntoIterator<Item = EventRecord>) {
        self.inner.events.write().expect("events lock").extend(records);
    }

    pub fn set_clock_synced(&self, synced: bool) {
        self.inner.clock_synced.store(synced, Ordering::Relaxed);
    }

    /// Stops accepting commands; pending and later requests fail with
    /// `ControlUnavailable`.
    pub fn close_commands(&self) {
        self.inner.commands.lock().expect("commands lock").take();
    }

    pub fn event_count(&self) -> usize {
        self.inner.events.read().expect("events lock").len()
    }

    pub fn get_readings(&self) -> Result<Arc<ReadingsSnapshot>, TelemetryError> {
        self.inner
            .snapshot
            .read()
            .expect("snapshot lock")
            .clone()
            .ok_or(TelemetryError::ServiceStarting)
    }

    /// Records with `timestamp >= since` in log order, at most `limit` of
    /// them, starting after `cursor` when given.
    pub fn get_events(&self, since: Timestamp, limit: usize, cursor: Option<&str>) -> Result<EventPage, TelemetryError> {
        if limit == 0 {
            return Err(TelemetryError::InvalidLimit);
        }
        let after = cursor
            .map(|c| c.parse::<u64>().map_err(|_| TelemetryError::InvalidCursor(c.to_string())))
            .transpose()?;
        let events = self.inner.events.read().expect("events lock");
        let mut start = events.partition_point(|r| r.timestamp < since);
        if let Some(after) = after {
            start = start.max(events.partition_point(|r| r.sequence_number <= after));
        }
        let end = (start + limit).min(events.len());
        let records = events[start..end].to_vec();
        let next_cursor = (end < events.len())
            .then(|| records.last().map(|r| r.sequence_number.to_string()))
            .flatten();
        Ok(EventPage { records, next_cursor })
    }

    pub fn health(&self) -> Health {
        let ready = self.inner.snapshot.read().expect("snapshot lock").is_some();
        Health {
            status: if ready { "ok" } else { "starting" }.to_string(),
            uptime_s: self.inner.started.elapsed().as_secs_f64(),
            clock_synced: self.inner.clock_synced.load(Ordering::Relaxed),
        }
    }

    fn sender(&self) -> Result<Sender<ControlRequest>, TelemetryError> {
        self.inner
            .commands
            .lock()
            .expect("commands lock")
            .clone()
            .ok_or(TelemetryError::ControlUnavailable)
    }

    /// Asks the control loop to feed and waits for its verdict.
    pub fn post_feed(&self, portions: i64, timeout: Duration) -> Result<FeedResult, TelemetryError> {
        let portions = u32::try_from(portions)
            .ok()
            .filter(|p| *p >= 1)
            .ok_or(TelemetryError::InvalidPortions(portions))?;
        let (reply, answer) = mpsc::sync_channel(1);
        self.sender()?
            .send(ControlRequest::Feed { portions, reply })
            .map_err(|_| TelemetryError::ControlUnavailable)?;
        wait(answer, timeout)
    }

    pub fn post_pump(&self, on: bool, timeout: Duration) -> Result<PumpState, TelemetryError> {
        let (reply, answer) = mpsc::sync_channel(1);
        self.sender()?
            .send(ControlRequest::Pump { on, reply })
            .map_err(|_| TelemetryError::ControlUnavailable)?;
        wait(answer, timeout)
    }
}

fn wait<T>(answer: Receiver<T>, timeout: Duration) -> Result<T, TelemetryError> {
    match answer.recv_timeout(timeout) {
        Ok(v) => Ok(v),
        Err(RecvTimeoutError::Timeout) => Err(TelemetryError::Timeout),
        Err(RecvTimeoutError::Disconnected) => Err(TelemetryError::ControlUnavailable),
    }
}
