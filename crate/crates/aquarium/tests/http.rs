//! The HTTP contract, exercised over real sockets.

use std::sync::atomic::Ordering;
use std::thread;
use std::time::Duration;

use aquarium::api::{self, ErrorBody, FeedResponse};
use aquarium_core::control::{Controller, ControlConfig, PumpState};
use aquarium_core::domain::{
    ActuatorCommand, CommandSource, EventRecord, FeedOutcome, ParameterKind, ParameterReading, Quality, Timestamp,
};
use aquarium_core::plant::{Pacing, Script};
use aquarium_core::station::{Simulation, SimulationConfig};
use aquarium_core::telemetry::{ControlRequest, EventPage, Health, ReadingsSnapshot, Status, TelemetryHub};
use reqwest::StatusCode;
use serde_json::json;

struct Server {
    base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

async fn start(hub: TelemetryHub) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel();
    tokio::spawn(api::serve(listener, hub, async {
        let _ = rx.await;
    }));
    Server { base, stop: Some(tx) }
}

/// Waits for a snapshot whose smoothing windows have all filled.
async fn wait_ready(client: &reqwest::Client, base: &str) -> ReadingsSnapshot {
    for _ in 0..200 {
        let resp = client.get(format!("{base}/api/readings")).send().await.unwrap();
        if resp.status() == StatusCode::OK {
            let snap: ReadingsSnapshot = resp.json().await.unwrap();
            if snap.readings.values().all(|r| r.quality == Quality::Valid) {
                return snap;
            }
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("service never produced a snapshot");
}

/// A paced simulation behind a live hub; stopped when the guard drops.
struct LiveSim {
    stop: std::sync::Arc<std::sync::atomic::AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
    _dir: tempfile::TempDir,
}

impl LiveSim {
    fn start(hub: TelemetryHub, inbox: aquarium_core::telemetry::CommandInbox) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimulationConfig {
            duration_s: 24.0 * 3600.0,
            pacing: Pacing::Speedup(100.0),
            script: Script::empty(),
            write_trace: false,
            ..SimulationConfig::new("live", dir.path())
        };
        let mut sim = Simulation::new(cfg).unwrap();
        sim.attach_hub(hub, inbox);
        let stop = sim.stop_flag();
        let handle = thread::spawn(move || {
            sim.run().unwrap();
        });
        LiveSim { stop, handle: Some(handle), _dir: dir }
    }

    fn finish(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.take().unwrap().join().unwrap();
    }
}

impl Drop for LiveSim {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn live_service_end_to_end() {
    let (hub, inbox) = TelemetryHub::new();
    let sim = LiveSim::start(hub.clone(), inbox);
    let server = start(hub).await;
    let client = reqwest::Client::new();
    let base = &server.base;

    let snap = wait_ready(&client, base).await;
    assert_eq!(snap.readings.len(), 7);
    // one poll cycle per snapshot
    let stamps: Vec<Timestamp> = snap.readings.values().map(|r| r.timestamp).collect();
    assert!(stamps.windows(2).all(|w| w[0] == w[1]));
    for (kind, status) in &snap.statuses {
        let rule = aquarium_core::domain::RuleSet::default();
        let violated = rule.get(*kind).and_then(|r| r.violates(snap.readings[kind].value)).is_some();
        assert_eq!(*status == Status::Alert, violated, "{kind}");
    }

    let health: Health = client.get(format!("{base}/api/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health.status, "ok");
    assert!(health.clock_synced);

    let resp = client.post(format!("{base}/api/feed")).json(&json!({"portions": 1})).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let feed: FeedResponse = resp.json().await.unwrap();
    assert!(feed.accepted);
    assert_eq!(feed.result.outcome, FeedOutcome::Dispensed);
    assert_eq!(feed.result.dispensed_g, 0.5);
    assert_eq!(feed.result.source, CommandSource::Manual);

    for portions in [0, -3] {
        let resp = client.post(format!("{base}/api/feed")).json(&json!({ "portions": portions })).send().await.unwrap();
        assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
        let err: ErrorBody = resp.json().await.unwrap();
        assert_eq!(err.error, "invalid_portions");
    }

    let off: PumpState = client.post(format!("{base}/api/pump")).json(&json!({"on": false})).send().await.unwrap().json().await.unwrap();
    assert!(!off.on);
    for _ in 0..2 {
        let on: PumpState = client.post(format!("{base}/api/pump")).json(&json!({"on": true})).send().await.unwrap().json().await.unwrap();
        assert!(on.on);
    }

    // the feed and pump results are in the history, in acknowledgement order
    let page: EventPage = client.get(format!("{base}/api/events?limit=1000")).send().await.unwrap().json().await.unwrap();
    let kinds: Vec<&str> = page
        .records
        .iter()
        .map(|r| r.payload.type_name())
        .filter(|t| *t == "feed_result" || *t == "pump_result")
        .collect();
    assert_eq!(kinds, ["feed_result", "pump_result", "pump_result", "pump_result"]);

    sim.finish();
    let resp = client.post(format!("{base}/api/pump")).json(&json!({"on": false})).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    let err: ErrorBody = resp.json().await.unwrap();
    assert_eq!(err.error, "control_unavailable");
}

#[tokio::test]
async fn starting_service_reports_503() {
    let server = start(TelemetryHub::read_only()).await;
    let client = reqwest::Client::new();
    let resp = client.get(format!("{}/api/readings", server.base)).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    let err: ErrorBody = resp.json().await.unwrap();
    assert_eq!(err.error, "service_starting");
    let health: Health = client.get(format!("{}/api/health", server.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(health.status, "starting");
    let resp = client.post(format!("{}/api/feed", server.base)).json(&json!({"portions": 1})).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
}

fn record(seq: u64, secs: i64) -> EventRecord {
    EventRecord {
        sequence_number: seq,
        timestamp: Timestamp::from_millis(secs * 1000),
        payload: aquarium_core::domain::EventPayload::PumpResult { on: true, acknowledged: true },
    }
}

#[tokio::test]
async fn event_paging() {
    let hub = TelemetryHub::read_only();
    hub.push_events([record(0, 1), record(1, 2), record(2, 3)]);
    let server = start(hub).await;
    let client = reqwest::Client::new();
    let get = |q: &str| client.get(format!("{}/api/events{q}", server.base)).send();

    let all: EventPage = get("?since=1970-01-01T00:00:00Z&limit=10").await.unwrap().json().await.unwrap();
    assert_eq!(all.records.len(), 3);
    assert_eq!(all.next_cursor, None);

    let first: EventPage = get("?limit=2").await.unwrap().json().await.unwrap();
    assert_eq!(first.records.len(), 2);
    let cursor = first.next_cursor.expect("more records remain");
    let rest: EventPage = get(&format!("?limit=2&cursor={cursor}")).await.unwrap().json().await.unwrap();
    assert_eq!(rest.records.iter().map(|r| r.sequence_number).collect::<Vec<_>>(), [2]);
    assert_eq!(rest.next_cursor, None);

    let later: EventPage = get("?since=2100-01-01T00:00:00Z").await.unwrap().json().await.unwrap();
    assert!(later.records.is_empty());

    for (q, code) in [("?limit=0", "invalid_limit"), ("?since=yesterday", "invalid_since"), ("?cursor=abc", "invalid_cursor")] {
        let resp = get(q).await.unwrap();
        assert_eq!(resp.status(), StatusCode::BAD_REQUEST, "{q}");
        let err: ErrorBody = resp.json().await.unwrap();
        assert_eq!(err.error, code);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn empty_hopper_feed_is_rejected_with_low_food() {
    let (hub, inbox) = TelemetryHub::new();
    let control = thread::spawn(move || {
        let mut ctl = Controller::new(&ControlConfig { feed_schedule: vec![], ..ControlConfig::default() }).unwrap();
        let now = Timestamp::from_millis(1_000);
        let empty = ParameterReading { kind: ParameterKind::FoodDistance, value: 5.0, timestamp: now, quality: Quality::Valid };
        ctl.poll_cycle(&[empty], now);
        if let Some(ControlRequest::Feed { portions, reply }) = inbox.next_within(Duration::from_secs(10)) {
            let out = ctl.request_feed(&ActuatorCommand::feed(portions, CommandSource::Manual, now), now).unwrap();
            reply.send(out.result).unwrap();
        }
    });
    let server = start(hub).await;
    let resp = reqwest::Client::new()
        .post(format!("{}/api/feed", server.base))
        .json(&json!({"portions": 1}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let feed: FeedResponse = resp.json().await.unwrap();
    assert!(!feed.accepted);
    assert_eq!(feed.result.outcome, FeedOutcome::RejectedLowFood);
    assert_eq!(feed.result.dispensed_g, 0.0);
    control.join().unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn unanswered_command_times_out() {
    let (hub, _inbox) = TelemetryHub::new();
    let server = start(hub).await;
    let resp = reqwest::Client::new()
        .post(format!("{}/api/pump", server.base))
        .json(&json!({"on": false}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::GATEWAY_TIMEOUT);
    let err: ErrorBody = resp.json().await.unwrap();
    assert_eq!(err.error, "timeout");
}
