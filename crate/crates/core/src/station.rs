//! The edge device and the discrete-event loop that runs it against the
//! simulated plant.
//!
//! Everything happens in logical time: poll ticks, scripted fault edges and
//! publisher retries are ordered events on one timeline. Pacing only decides
//! how long the loop sleeps between events, so a run's log does not depend
//! on the speedup.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;

use crate::control::{ConfigError, ControlConfig, Controller};
use crate::domain::{
    ActuatorCommand, CommandSource, EventPayload, EventRecord, FaultKind, FeedOutcome, Monotonic, ParameterKind,
    ParameterReading, Timestamp,
};
use crate::eventlog::{replay_run, ClockModel, EventLog, LogError};
use crate::metrics::{MetricsError, TraceWriter};
use crate::plant::{consume_feed, sample, NoiseModel, Pacing, PlantConfig, PlantDriver, ScenarioError, Script};
use crate::signal::{CalibrationSet, Pipeline};
use crate::telemetry::publisher::PublishReport;
use crate::telemetry::{CommandInbox, ControlRequest, MemorySink, Publisher, ReadingsSnapshot, TelemetryHub, Transport};

/// 2025-06-01T00:00:00Z, the wall time of simulated second zero by default.
pub const DEFAULT_EPOCH: Timestamp = Timestamp::from_millis(1_748_736_000_000);

#[derive(Debug, thiserror::Error)]
pub enum StationError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Trace(#[from] MetricsError),
    #[error("invalid run settings: {0}")]
    Invalid(String),
}

/// Everything a simulated run needs.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub run_id: String,
    pub log_dir: PathBuf,
    pub duration_s: f64,
    pub pacing: Pacing,
    pub epoch: Timestamp,
    pub plant: PlantConfig,
    pub noise: NoiseModel,
    pub calibration: CalibrationSet,
    pub control: ControlConfig,
    pub script: Script,
    pub queue_capacity: usize,
    /// Write `<run-id>.trace.ndjson` next to the log.
    pub write_trace: bool,
}

impl SimulationConfig {
    pub fn new(run_id: impl Into<String>, log_dir: impl Into<PathBuf>) -> Self {
        SimulationConfig {
            run_id: run_id.into(),
            log_dir: log_dir.into(),
            duration_s: 72.0 * 3600.0,
            pacing: Pacing::Unpaced,
            epoch: DEFAULT_EPOCH,
            plant: PlantConfig::default(),
            noise: NoiseModel::default(),
            calibration: CalibrationSet::default(),
            control: ControlConfig::default(),
            script: Script::standard(),
            queue_capacity: crate::telemetry::publisher::DEFAULT_QUEUE_CAPACITY,
            write_trace: true,
        }
    }

    pub fn trace_path(&self) -> PathBuf {
        trace_path(&self.log_dir, &self.run_id)
    }

    pub fn validate(&self) -> Result<(), StationError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(StationError::Invalid(format!("duration must be > 0, got {}", self.duration_s)));
        }
        if self.queue_capacity == 0 {
            return Err(StationError::Invalid("publish queue capacity must be > 0".into()));
        }
        self.pacing.validate()?;
        self.script.validate()?;
        self.control.validate()?;
        self.noise.validate().map_err(StationError::Invalid)?;
        Ok(())
    }
}

/// Where a run's ground-truth trace is written.
pub fn trace_path(log_dir: &Path, run_id: &str) -> PathBuf {
    log_dir.join(format!("{run_id}.trace.ndjson"))
}

/// Wall-clock cost of poll cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CycleTiming {
    pub cycles: u64,
    pub total: Duration,
    pub max: Duration,
}

impl CycleTiming {
    fn record(&mut self, d: Duration) {
        self.cycles += 1;
        self.total += d;
        self.max = self.max.max(d);
    }

    pub fn mean(&self) -> Duration {
        if self.cycles == 0 {
            Duration::ZERO
        } else {
            self.total / self.cycles as u32
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub log_dir: PathBuf,
    pub trace_path: Option<PathBuf>,
    pub segments: u32,
    pub records: u64,
    pub alerts: u64,
    pub sim_seconds: f64,
    pub interrupted: bool,
    pub timing: CycleTiming,
    pub published: u64,
    pub publish_dropped: u64,
}

/// Device state that only exists while powered.
struct Device {
    controller: Controller,
    pipeline: Pipeline,
    log: EventLog,
    clock: ClockModel,
    boot_ms: u64,
    last_readings: Vec<ParameterReading>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    // same-instant order: faults, then retries, then the poll
    Fault(FaultKind),
    Retry,
    Poll,
}

/// One simulated run: plant, device, publisher and optional live service.
pub struct Simulation {
    cfg: SimulationConfig,
    plant: PlantDriver,
    rng: ChaCha8Rng,
    device: Option<Device>,
    publisher: Publisher<Box<dyn Transport>>,
    network_up: bool,
    hub: Option<TelemetryHub>,
    inbox: Option<CommandInbox>,
    trace: Option<TraceWriter>,
    stop: Arc<AtomicBool>,
    timing: CycleTiming,
    records: u64,
    alerts: u64,
    segments: u32,
    last_ms: u64,
}

impl Simulation {
    pub fn new(cfg: SimulationConfig) -> Result<Self, StationError> {
        cfg.validate()?;
        let plant = PlantDriver::new(cfg.plant.clone(), cfg.script.clone());
        let rng = cfg.noise.rng();
        let publisher = Publisher::with_capacity(Box::new(MemorySink::counting()) as Box<dyn Transport>, cfg.queue_capacity);
        Ok(Simulation {
            plant,
            rng,
            device: None,
            publisher,
            network_up: true,
            hub: None,
            inbox: None,
            trace: None,
            stop: Arc::new(AtomicBool::new(false)),
            timing: CycleTiming::default(),
            records: 0,
            alerts: 0,
            segments: 0,
            last_ms: 0,
            cfg,
        })
    }

    /// Sends published records to `transport` instead of discarding them.
    pub fn with_transport(mut self, transport: Box<dyn Transport>) -> Self {
        self.publisher = Publisher::with_capacity(transport, self.cfg.queue_capacity);
        self
    }

    /// Serves live readings and commands through `hub`.
    pub fn attach_hub(&mut self, hub: TelemetryHub, inbox: CommandInbox) {
        self.hub = Some(hub);
        self.inbox = Some(inbox);
    }

    /// Setting this flag ends the run at the next event; the log is closed
    /// cleanly.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    fn sim_ts(&self, ms: u64) -> Timestamp {
        self.cfg.epoch + Duration::from_millis(ms)
    }

    pub fn run(mut self) -> Result<RunSummary, StationError> {
        if self.cfg.write_trace {
            self.trace = Some(TraceWriter::create(&self.cfg.trace_path())?);
        }
        let end_ms = (self.cfg.duration_s * 1000.0).round() as u64;
        let poll_ms = (self.cfg.control.poll_period_s * 1000.0).round().max(1.0) as u64;
        let edges = self.cfg.script.fault_edges_ms();
        let wall_start = Instant::now();

        self.boot(0)?;
        let mut next_poll = 0u64;
        let mut edge_idx = 0usize;
        let mut interrupted = false;
        loop {
            let mut next: Option<(u64, Event)> = None;
            let mut offer = |at: u64, ev: Event| {
                if next.is_none_or(|n| (at, ev) < n) {
                    next = Some((at, ev));
                }
            };
            if let Some(&(at, fault)) = edges.get(edge_idx) {
                offer(at, Event::Fault(fault));
            }
            if self.device.is_some() {
                if let Some(due) = self.publisher.next_retry() {
                    let at = due.millis_since(self.cfg.epoch).max(0) as u64;
                    offer(at.max(self.last_ms), Event::Retry);
                }
            }
            offer(next_poll, Event::Poll);
            let (at, event) = next.expect("a poll is always scheduled");
            if at > end_ms {
                break;
            }
            self.wait_until(wall_start, at)?;
            if self.stop.load(Ordering::Relaxed) {
                interrupted = true;
                break;
            }
            self.plant.advance_to(at);
            self.last_ms = at;
            match event {
                Event::Fault(fault) => {
                    edge_idx += 1;
                    self.fault(fault, at)?;
                }
                Event::Retry => {
                    let ts = self.sim_ts(at);
                    let report = self.publisher.poll_retry(ts);
                    self.after_publish(report, ts)?;
                }
                Event::Poll => {
                    next_poll += poll_ms;
                    self.poll(at)?;
                }
            }
        }

        if let Some(dev) = self.device.as_mut() {
            dev.log.close()?;
        }
        if let Some(trace) = self.trace.take() {
            trace.finish()?;
        }
        if let Some(hub) = &self.hub {
            hub.close_commands();
        }
        let state = self.publisher.state();
        Ok(RunSummary {
            run_id: self.cfg.run_id.clone(),
            log_dir: self.cfg.log_dir.clone(),
            trace_path: self.cfg.write_trace.then(|| self.cfg.trace_path()),
            segments: self.segments,
            records: self.records,
            alerts: self.alerts,
            sim_seconds: self.last_ms as f64 / 1000.0,
            interrupted,
            timing: self.timing,
            published: state.delivered_total,
            publish_dropped: state.dropped_total,
        })
    }

    /// Sleeps until simulated `at_ms` is due, serving commands meanwhile.
    fn wait_until(&mut self, wall_start: Instant, at_ms: u64) -> Result<(), StationError> {
        let Pacing::Speedup(speedup) = self.cfg.pacing else {
            while let Some(req) = self.inbox.as_ref().and_then(CommandInbox::try_next) {
                self.command(req, self.last_ms)?;
            }
            return Ok(());
        };
        let due = wall_start + Duration::from_secs_f64(at_ms as f64 / 1000.0 / speedup);
        loop {
            let now = Instant::now();
            if now >= due || self.stop.load(Ordering::Relaxed) {
                return Ok(());
            }
            let slice = (due - now).min(Duration::from_millis(50));
            let Some(inbox) = self.inbox.as_ref() else {
                std::thread::sleep(slice);
                continue;
            };
            if let Some(req) = inbox.next_within(slice) {
                let elapsed_ms = (wall_start.elapsed().as_secs_f64() * speedup * 1000.0) as u64;
                let at = elapsed_ms.clamp(self.last_ms, at_ms);
                self.plant.advance_to(at);
                self.last_ms = at;
                self.command(req, at)?;
            }
        }
    }

    fn boot(&mut self, at_ms: u64) -> Result<(), StationError> {
        let mut clock = ClockModel::unsynced();
        clock.sync(self.sim_ts(at_ms), Monotonic::ZERO);
        let mut controller = Controller::new(&self.cfg.control)?;
        let log = if at_ms == 0 && self.segments == 0 {
            EventLog::create(&self.cfg.log_dir, &self.cfg.run_id)?
        } else {
            let history = replay_run(&self.cfg.log_dir, &self.cfg.run_id)?;
            controller.recover_from(&history.records);
            let (log, scan) = EventLog::reopen(&self.cfg.log_dir, &self.cfg.run_id)?;
            if scan.corrupt_lines > 0 {
                tracing::warn!(lost = scan.corrupt_lines, "torn record found in previous segment");
            }
            log
        };
        self.segments = log.segment_number();
        self.plant.state_mut().pump_on = controller.pump().on;
        if let Some(hub) = &self.hub {
            hub.set_clock_synced(clock.is_synced());
        }
        self.device = Some(Device {
            controller,
            pipeline: Pipeline::new(self.cfg.calibration.clone()),
            log,
            clock,
            boot_ms: at_ms,
            last_readings: Vec::new(),
        });
        Ok(())
    }

    fn now_ts(&self, at_ms: u64) -> Timestamp {
        match &self.device {
            Some(dev) => dev.clock.now(Monotonic(at_ms - dev.boot_ms)),
            None => self.sim_ts(at_ms),
        }
    }

    /// Appends to the log and hands the record to the publisher.
    fn record(&mut self, ts: Timestamp, payload: EventPayload) -> Result<(), StationError> {
        let publish = !matches!(
            payload,
            EventPayload::PublishResumed { .. } | EventPayload::PublishDropped { .. }
        );
        let Some(dev) = self.device.as_mut() else {
            return Ok(());
        };
        if matches!(payload, EventPayload::Alert(_)) {
            self.alerts += 1;
        }
        let rec = dev.log.append(ts, payload)?;
        self.records += 1;
        if let Some(hub) = &self.hub {
            hub.push_events([rec.clone()]);
        }
        if publish {
            let report = self.publisher.publish(rec, ts);
            self.after_publish(report, ts)?;
        }
        Ok(())
    }

    fn after_publish(&mut self, report: PublishReport, ts: Timestamp) -> Result<(), StationError> {
        let state = self.publisher.state();
        if report.dropped > 0 && state.dropped_in_interruption == report.dropped {
            let dropped_total = state.dropped_total;
            self.record(ts, EventPayload::PublishDropped { dropped_total })?;
        }
        if let Some(r) = report.resumed {
            self.record(
                ts,
                EventPayload::PublishResumed {
                    delivered: r.delivered,
                    dropped_total: r.dropped_total,
                },
            )?;
        }
        Ok(())
    }

    fn fault(&mut self, fault: FaultKind, at_ms: u64) -> Result<(), StationError> {
        let wall = self.sim_ts(at_ms);
        if let Some(trace) = self.trace.as_mut() {
            trace.fault(wall, fault)?;
        }
        match fault {
            FaultKind::NetworkDown => {
                self.network_up = false;
                if self.device.is_some() {
                    let ts = self.now_ts(at_ms);
                    self.publisher.set_link(false, ts);
                    self.record(ts, EventPayload::SystemFault { fault })?;
                }
            }
            FaultKind::NetworkUp => {
                self.network_up = true;
                if self.device.is_some() {
                    let ts = self.now_ts(at_ms);
                    self.record(ts, EventPayload::SystemFault { fault })?;
                    let report = self.publisher.set_link(true, ts);
                    self.after_publish(report, ts)?;
                }
            }
            FaultKind::PowerLoss => {
                if self.device.is_some() {
                    let ts = self.now_ts(at_ms);
                    self.record(ts, EventPayload::SystemFault { fault })?;
                    let mut dev = self.device.take().expect("checked above");
                    // the write in flight when power fails is torn
                    let cycle = dev.controller.cycle() + 1;
                    let readings = std::mem::take(&mut dev.last_readings);
                    dev.log.tear(ts, EventPayload::SensorSnapshot { cycle, readings })?;
                    let lost = self.publisher.discard_pending();
                    tracing::info!(at = %ts, queued_lost = lost, "power lost");
                }
                self.plant.state_mut().pump_on = false;
            }
            FaultKind::PowerRestore => {
                if self.device.is_none() {
                    self.boot(at_ms)?;
                    let ts = self.now_ts(at_ms);
                    self.record(ts, EventPayload::SystemFault { fault })?;
                    let report = self.publisher.set_link(self.network_up, ts);
                    self.after_publish(report, ts)?;
                }
            }
        }
        Ok(())
    }

    fn poll(&mut self, at_ms: u64) -> Result<(), StationError> {
        if let Some(trace) = self.trace.as_mut() {
            trace.sample(self.cfg.epoch + Duration::from_millis(at_ms), self.plant.state())?;
        }
        let Some(dev) = self.device.as_mut() else {
            return Ok(());
        };
        let started = Instant::now();
        let mono = Monotonic(at_ms - dev.boot_ms);
        let ts = dev.clock.now(mono);
        let mut readings = Vec::with_capacity(ParameterKind::ALL.len());
        for kind in ParameterKind::ALL {
            let curve = dev.pipeline.calibration().curve(kind);
            let Some(raw) = sample(self.plant.state(), kind, &self.cfg.noise, curve, mono, &mut self.rng) else {
                continue;
            };
            match dev.pipeline.process(&raw, ts) {
                Ok(r) => readings.push(r),
                Err(e) => tracing::warn!(%kind, error = %e, "dropping sample"),
            }
        }
        let out = dev.controller.poll_cycle(&readings, ts);
        dev.last_readings = readings;
        if let Some(feed) = out.feed {
            self.dispense(feed.outcome, feed.portions);
        }
        for (ts, payload) in out.records {
            self.record(ts, payload)?;
        }
        self.refresh_snapshot(ts);
        self.timing.record(started.elapsed());
        Ok(())
    }

    fn dispense(&mut self, outcome: FeedOutcome, portions: u32) {
        if outcome == FeedOutcome::Dispensed {
            match consume_feed(self.plant.config(), self.plant.state(), portions) {
                Ok(next) => *self.plant.state_mut() = next,
                Err(e) => tracing::warn!(error = %e, "feeder turned but nothing fell"),
            }
        }
    }

    fn refresh_snapshot(&self, ts: Timestamp) {
        if let (Some(hub), Some(dev)) = (&self.hub, &self.device) {
            hub.publish_snapshot(ReadingsSnapshot::new(
                dev.controller.cycle(),
                &dev.last_readings,
                dev.controller.rules(),
                *dev.controller.pump(),
                *dev.controller.feeder(),
                ts,
            ));
        }
    }

    fn command(&mut self, req: ControlRequest, at_ms: u64) -> Result<(), StationError> {
        if self.device.is_none() {
            // powered off: dropping the reply channel reports the loop as unavailable
            return Ok(());
        }
        let ts = self.now_ts(at_ms);
        let dev = self.device.as_mut().expect("checked above");
        match req {
            ControlRequest::Feed { portions, reply } => {
                let cmd = ActuatorCommand::feed(portions, CommandSource::Manual, ts);
                let Ok(out) = dev.controller.request_feed(&cmd, ts) else {
                    return Ok(());
                };
                self.dispense(out.result.outcome, portions);
                for (ts, payload) in out.records {
                    self.record(ts, payload)?;
                }
                self.refresh_snapshot(ts);
                let _ = reply.send(out.result);
            }
            ControlRequest::Pump { on, reply } => {
                let cmd = ActuatorCommand::pump(on, CommandSource::Manual, ts);
                let (state, records) = dev.controller.set_pump(&cmd, ts);
                self.plant.state_mut().pump_on = state.on;
                for (ts, payload) in records {
                    self.record(ts, payload)?;
                }
                self.refresh_snapshot(ts);
                let _ = reply.send(state);
            }
        }
        Ok(())
    }
}

/// Runs a simulation to completion without a live service.
pub fn run_simulation(cfg: SimulationConfig) -> Result<RunSummary, StationError> {
    Simulation::new(cfg)?.run()
}

/// All records of a finished run, in order.
pub fn load_run(log_dir: &Path, run_id: &str) -> Result<Vec<EventRecord>, StationError> {
    Ok(replay_run(log_dir, run_id)?.records)
}
