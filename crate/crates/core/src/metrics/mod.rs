//! Offline evaluation of a run: sensor accuracy against ground truth, alert
//! precision and recall, detection latency, fault recovery and actuator
//! endurance.

mod trace;

pub use trace::{GroundTruthTrace, TraceEntry, TraceSample, TraceWriter};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{
    AlertEvent, AlertKind, Direction, EventPayload, EventRecord, FaultKind, FeedOutcome, ParameterKind, Quality,
    RuleAction, RuleSet, Timestamp,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("trace line {line}: {message}")]
    TraceParse { line: usize, message: String },
    #[error("trace timestamps must strictly increase (at {0})")]
    TraceOrder(Timestamp),
    #[error("no valid {0} readings to score")]
    NoSamples(ParameterKind),
    #[error("no true-positive alerts")]
    NoAlerts,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Accuracy tolerances in engineering units.
pub fn default_tolerances() -> BTreeMap<ParameterKind, f64> {
    [
        (ParameterKind::WaterTemperature, 0.5),
        (ParameterKind::Ph, 0.3),
        (ParameterKind::Tds, 25.0),
        (ParameterKind::Turbidity, 10.0),
    ]
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub rules: RuleSet,
    pub tolerances: BTreeMap<ParameterKind, f64>,
    pub poll_period_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rules: RuleSet::default(),
            tolerances: default_tolerances(),
            poll_period_s: 5.0,
        }
    }
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 * 100.0 / den as f64)
}

/// Valid readings of `kind` logged in sensor snapshots.
fn valid_readings(log: &[EventRecord], kind: ParameterKind) -> impl Iterator<Item = (Timestamp, f64)> + '_ {
    log.iter()
        .filter_map(|r| match &r.payload {
            EventPayload::SensorSnapshot { readings, .. } => Some(readings),
            _ => None,
        })
        .flatten()
        .filter(move |r| r.kind == kind && r.quality == Quality::Valid)
        .map(|r| (r.timestamp, r.value))
}

/// Percentage of valid readings within `tolerance` of the interpolated true
/// value at the reading's timestamp. Readings outside the trace span are not
/// scored.
pub fn accuracy(
    trace: &GroundTruthTrace,
    log: &[EventRecord],
    kind: ParameterKind,
    tolerance: f64,
) -> Result<f64, MetricsError> {
    if !(tolerance > 0.0) {
        return Err(MetricsError::BadTolerance(tolerance));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (at, value) in valid_readings(log, kind) {
        if let Some(truth) = trace.value_at(kind, at) {
            total += 1;
            if (value - truth).abs() <= tolerance {
                hits += 1;
            }
        }
    }
    pct(hits, total).ok_or(MetricsError::NoSamples(kind))
}

/// A maximal ground-truth interval in which a parameter violates its rule
/// in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub kind: ParameterKind,
    pub direction: Direction,
    /// Interpolated crossing instant (first violating sample if the trace
    /// starts in violation).
    pub start: Timestamp,
    /// Last violating sample.
    pub end: Timestamp,
}

fn crossing(rules: &RuleSet, kind: ParameterKind, dir: Direction, a: &TraceSample, b: &TraceSample) -> Timestamp {
    let rule = rules.get(kind).expect("episode kinds have rules");
    let bound = match dir {
        Direction::BelowLower => rule.lower,
        _ => rule.upper,
    };
    let (va, vb) = (a.state.value(kind), b.state.value(kind));
    match bound {
        Some(bound) if vb != va => {
            let frac = ((bound - va) / (vb - va)).clamp(0.0, 1.0);
            let ms = a.timestamp.as_millis() as f64 + frac * b.timestamp.millis_since(a.timestamp) as f64;
            Timestamp::from_millis(ms.round() as i64)
        }
        _ => b.timestamp,
    }
}

/// Violation episodes of every alerting rule, ordered by start.
pub fn episodes(trace: &GroundTruthTrace, rules: &RuleSet) -> Vec<Episode> {
    let mut out = Vec::new();
    let samples = trace.samples();
    for rule in rules.iter().filter(|r| r.action == RuleAction::Alert) {
        let mut open: Option<Episode> = None;
        for (i, s) in samples.iter().enumerate() {
            let dir = rule.violates(s.state.value(rule.kind));
            match (&mut open, dir) {
                (Some(ep), Some(d)) if ep.direction == d => ep.end = s.timestamp,
                (_, d) => {
                    out.extend(open.take());
                    if let Some(direction) = d {
                        let start = match i.checked_sub(1) {
                            Some(p) => crossing(rules, rule.kind, direction, &samples[p], s),
                            None => s.timestamp,
                        };
                        open = Some(Episode {
                            kind: rule.kind,
                            direction,
                            start,
                            end: s.timestamp,
                        });
                    }
                }
            }
        }
        out.extend(open);
    }
    out.sort_by_key(|e| (e.start, e.kind, e.direction));
    out
}

/// Emitted parameter alerts (low-food alerts are not scored).
pub fn parameter_alerts(log: &[EventRecord]) -> Vec<&AlertEvent> {
    log.iter()
        .filter_map(EventRecord::alert)
        .filter(|a| matches!(a.kind, AlertKind::Parameter(_)))
        .collect()
}

fn matches_episode(alert: &AlertEvent, ep: &Episode, poll_ms: i64) -> bool {
    alert.kind == AlertKind::Parameter(ep.kind)
        && alert.direction == ep.direction
        && alert.timestamp >= ep.start
        && alert.timestamp.millis_since(ep.end) <= poll_ms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertQuality {
    pub precision_pct: Option<f64>,
    pub recall_pct: Option<f64>,
    pub alerts: usize,
    pub true_positive_alerts: usize,
    pub episodes: usize,
    pub detected_episodes: usize,
    /// Delay from each detected episode's start to its first alert, seconds.
    pub latencies_s: Vec<f64>,
}

/// Matches alerts to episodes. An alert is a true positive when it has the
/// episode's kind and direction and falls within `[start, end + poll]`.
pub fn alert_quality(trace: &GroundTruthTrace, log: &[EventRecord], config: &EvalConfig) -> AlertQuality {
    let eps = episodes(trace, &config.rules);
    let alerts = parameter_alerts(log);
    let poll_ms = (config.poll_period_s * 1000.0).round() as i64;
    let tp = alerts
        .iter()
        .filter(|a| eps.iter().any(|e| matches_episode(a, e, poll_ms)))
        .count();
    let mut latencies = Vec::new();
    for ep in &eps {
        if let Some(first) = alerts.iter().filter(|a| matches_episode(a, ep, poll_ms)).map(|a| a.timestamp).min() {
            latencies.push(first.seconds_since(ep.start));
        }
    }
    AlertQuality {
        precision_pct: pct(tp, alerts.len()),
        recall_pct: pct(latencies.len(), eps.len()),
        alerts: alerts.len(),
        true_positive_alerts: tp,
        episodes: eps.len(),
        detected_episodes: latencies.len(),
        latencies_s: latencies,
    }
}

/// Nearest-rank percentile: the value at rank `ceil(p * n / 100)`.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64 / 100.0).ceil() as usize).max(1);
    Some(sorted[rank - 1])
}

/// (p50, p95) detection latency in seconds.
pub fn latency_percentiles(
    trace: &GroundTruthTrace,
    log: &[EventRecord],
    config: &EvalConfig,
) -> Result<(f64, f64), MetricsError> {
    let q = alert_quality(trace, log, config);
    match (nearest_rank(&q.latencies_s, 50.0), nearest_rank(&q.latencies_s, 95.0)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(MetricsError::NoAlerts),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Outage start to the first successful publish, seconds.
    pub network_s: Vec<f64>,
    /// Power loss to the first record of the next segment, seconds.
    pub power_s: Vec<f64>,
    /// Records lost per power cycle, from sequence gaps.
    pub lost_per_power_cycle: Vec<u64>,
    pub records_lost: u64,
    pub network_outages: usize,
    pub power_cycles: usize,
    /// Outages after which publishing resumed without dropping records.
    pub network_success_pct: Option<f64>,
    /// Power cycles that lost no records.
    pub power_success_pct: Option<f64>,
}

pub fn recovery_times(log: &[EventRecord]) -> Recovery {
    let mut r = Recovery::default();
    let mut net_clean = 0;
    let mut dropped_before = 0u64;
    for (i, rec) in log.iter().enumerate() {
        match rec.fault() {
            Some(FaultKind::NetworkDown) => {
                r.network_outages += 1;
                let resumed = log[i + 1..].iter().find_map(|x| match x.payload {
                    EventPayload::PublishResumed { dropped_total, .. } => Some((x.timestamp, dropped_total)),
                    _ => None,
                });
                if let Some((at, dropped_total)) = resumed {
                    r.network_s.push(at.seconds_since(rec.timestamp));
                    if dropped_total == dropped_before {
                        net_clean += 1;
                    }
                    dropped_before = dropped_total;
                }
            }
            Some(FaultKind::PowerLoss) => {
                r.power_cycles += 1;
                if let Some(next) = log.get(i + 1) {
                    r.power_s.push(next.timestamp.seconds_since(rec.timestamp));
                    let lost = next.sequence_number.saturating_sub(rec.sequence_number + 1);
                    r.lost_per_power_cycle.push(lost);
                    r.records_lost += lost;
                }
            }
            _ => {}
        }
    }
    r.network_success_pct = pct(net_clean, r.network_outages);
    r.power_success_pct = pct(
        r.lost_per_power_cycle.iter().filter(|l| **l == 0).count(),
        r.power_cycles,
    );
    r
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Endurance {
    pub feed_attempts: u64,
    pub jams: u64,
    pub dispensed: u64,
    pub rejected_low_food: u64,
    pub rejected_no_reading: u64,
    pub dispensed_g: f64,
    pub servo_success_pct: Option<f64>,
    pub pump_commands: u64,
    pub pump_acknowledged: u64,
    pub pump_success_pct: Option<f64>,
}

/// Actuator success rates. A feed attempt is a rotation that was started:
/// dispensed or jammed.
pub fn endurance(log: &[EventRecord]) -> Endurance {
    let mut e = Endurance::default();
    for rec in log {
        match &rec.payload {
            EventPayload::FeedResult(f) => match f.outcome {
                FeedOutcome::Dispensed => {
                    e.dispensed += 1;
                    e.dispensed_g += f.dispensed_g;
                }
                FeedOutcome::Jammed => e.jams += 1,
                FeedOutcome::RejectedLowFood => e.rejected_low_food += 1,
                FeedOutcome::RejectedNoReading => e.rejected_no_reading += 1,
            },
            EventPayload::PumpResult { acknowledged, .. } => {
                e.pump_commands += 1;
                e.pump_acknowledged += u64::from(*acknowledged);
            }
            _ => {}
        }
    }
    e.feed_attempts = e.dispensed + e.jams;
    e.servo_success_pct = pct(e.dispensed as usize, e.feed_attempts as usize);
    e.pump_success_pct = pct(e.pump_acknowledged as usize, e.pump_commands as usize);
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindAccuracy {
    pub tolerance: f64,
    pub accuracy_pct: Option<f64>,
    pub readings: usize,
    /// Mean of the true values at the scored readings.
    pub truth_mean: Option<f64>,
    /// Mean of the scored readings.
    pub measured_mean: Option<f64>,
}

/// Everything the evaluator reports for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: BTreeMap<ParameterKind, KindAccuracy>,
    pub alerts: AlertQuality,
    pub latency_p50_s: Option<f64>,
    pub latency_p95_s: Option<f64>,
    pub recovery: Recovery,
    pub endurance: Endurance,
    pub records: usize,
    pub corrupt_records: usize,
}

pub fn evaluate(trace: &GroundTruthTrace, log: &[EventRecord], corrupt_records: usize, config: &EvalConfig) -> MetricsReport {
    let accuracy = config
        .tolerances
        .iter()
        .map(|(&kind, &tolerance)| {
            let scored: Vec<(f64, f64)> = valid_readings(log, kind)
                .filter_map(|(at, v)| trace.value_at(kind, at).map(|t| (v, t)))
                .collect();
            let n = scored.len();
            let mean = |f: fn(&(f64, f64)) -> f64| (n > 0).then(|| scored.iter().map(f).sum::<f64>() / n as f64);
            (
                kind,
                KindAccuracy {
                    tolerance,
                    accuracy_pct: accuracy(trace, log, kind, tolerance).ok(),
                    readings: n,
                    truth_mean: mean(|p| p.1),
                    measured_mean: mean(|p| p.0),
                },
            )
        })
        .collect();
    let alerts = alert_quality(trace, log, config);
    MetricsReport {
        accuracy,
        latency_p50_s: nearest_rank(&alerts.latencies_s, 50.0),
        latency_p95_s: nearest_rank(&alerts.latencies_s, 95.0),
        alerts,
        recovery: recovery_times(log),
        endurance: endurance(log),
        records: log.len(),
        corrupt_records,
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.digits$}"))
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricsReport {
    /// Human-readable table: one row per metric.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<[String; 4]> = Vec::new();
        for (kind, a) in &self.accuracy {
            rows.push([
                format!("{} ({})", kind.label(), kind.unit()),
                opt(a.truth_mean, 2),
                opt(a.measured_mean, 2),
                format!("{}% within ±{}", opt(a.accuracy_pct, 1), a.tolerance),
            ]);
        }
        let q = &self.alerts;
        rows.push([
            "Alert precision".into(),
            format!("{} episodes", q.episodes),
            format!("{} alerts", q.alerts),
            format!("{}%", opt(q.precision_pct, 1)),
        ]);
        rows.push([
            "Alert recall".into(),
            format!("{} episodes", q.episodes),
            format!("{} detected", q.detected_episodes),
            format!("{}%", opt(q.recall_pct, 1)),
        ]);
        rows.push([
            "Latency".into(),
            format!("p50 {} s", opt(self.latency_p50_s, 1)),
            format!("p95 {} s", opt(self.latency_p95_s, 1)),
            String::new(),
        ]);
        let r = &self.recovery;
        rows.push([
            "Network recovery".into(),
            format!("{} outages", r.network_outages),
            format!("mean {} s", opt(mean_of(&r.network_s), 1)),
            format!("{}% clean", opt(r.network_success_pct, 1)),
        ]);
        rows.push([
            "Power recovery".into(),
            format!("{} cycles", r.power_cycles),
            format!("mean {} s", opt(mean_of(&r.power_s), 1)),
            format!("{} records lost", r.records_lost),
        ]);
        let e = &self.endurance;
        rows.push([
            "Servo endurance".into(),
            format!("{} attempts", e.feed_attempts),
            format!("{} jams", e.jams),
            format!("{}% success", opt(e.servo_success_pct, 2)),
        ]);
        rows.push([
            "Pump control".into(),
            format!("{} commands", e.pump_commands),
            format!("{} acknowledged", e.pump_acknowledged),
            format!("{}% success", opt(e.pump_success_pct, 2)),
        ]);
        let header = ["Metric", "Ground truth", "Measured", "Result"];
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: [&str; 4]| {
            let cells: Vec<String> = cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        };
        line(&mut out, header);
        let _ = writeln!(
            out,
            "|{}|",
            widths.map(|w| "-".repeat(w + 2)).join("|")
        );
        for row in &rows {
            line(&mut out, [&row[0], &row[1], &row[2], &row[3]]);
        }
        let _ = writeln!(out, "{} records evaluated, {} corrupt lines skipped", self.records, self.corrupt_records);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeedResult, CommandSource, ParameterReading};
    use crate::plant::PlantConfig;

    fn t(s: f64) -> Timestamp {
        Timestamp::from_millis(1_748_736_000_000 + (s * 1000.0).round() as i64)
    }

    fn trace_of(values: &[(f64, f64)]) -> GroundTruthTrace {
        let base = PlantConfig::default().equilibrium(true);
        GroundTruthTrace::new(
            values
                .iter()
                .map(|&(s, ph)| TraceSample { timestamp: t(s), state: crate::plant::PlantState { ph, ..base } })
                .collect(),
            vec![],
        )
        .unwrap()
    }

    fn rec(seq: u64, at: f64, payload: EventPayload) -> EventRecord {
        EventRecord { sequence_number: seq, timestamp: t(at), payload }
    }

    fn ph_snapshot(seq: u64, at: f64, value: f64) -> EventRecord {
        rec(
            seq,
            at,
            EventPayload::SensorSnapshot {
                cycle: seq,
                readings: vec![ParameterReading { kind: ParameterKind::Ph, value, timestamp: t(at), quality: Quality::Valid }],
            },
        )
    }

    fn ph_alert(seq: u64, at: f64, dir: Direction) -> EventRecord {
        rec(seq, at, EventPayload::Alert(AlertEvent::new(AlertKind::Parameter(ParameterKind::Ph), dir, 6.0, t(at))))
    }

    #[test]
    fn interpolation() {
        let tr = trace_of(&[(0.0, 7.0), (10.0, 8.0)]);
        assert_eq!(tr.value_at(ParameterKind::Ph, t(5.0)), Some(7.5));
        assert_eq!(tr.value_at(ParameterKind::Ph, t(10.0)), Some(8.0));
        assert_eq!(tr.value_at(ParameterKind::Ph, t(11.0)), None);
        assert_eq!(tr.value_at(ParameterKind::Ph, t(-1.0)), None);
        assert!(GroundTruthTrace::new(tr.samples().iter().rev().copied().collect(), vec![]).is_err());
    }

    #[test]
    fn accuracy_counts_within_tolerance() {
        let tr = trace_of(&[(0.0, 7.0), (100.0, 7.0)]);
        let log: Vec<_> = (0..10).map(|i| ph_snapshot(i, i as f64, if i == 3 { 7.5 } else { 7.1 })).collect();
        assert_eq!(accuracy(&tr, &log, ParameterKind::Ph, 0.3).unwrap(), 90.0);
        assert!(matches!(accuracy(&tr, &log, ParameterKind::Tds, 25.0), Err(MetricsError::NoSamples(_))));
        assert!(accuracy(&tr, &log, ParameterKind::Ph, 0.0).is_err());
    }

    #[test]
    fn episodes_split_on_direction_and_reentry() {
        let tr = trace_of(&[(0.0, 7.0), (5.0, 6.0), (10.0, 6.0), (15.0, 7.0), (20.0, 9.0), (25.0, 9.0)]);
        let eps: Vec<_> = episodes(&tr, &RuleSet::default())
            .into_iter()
            .filter(|e| e.kind == ParameterKind::Ph)
            .collect();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].direction, Direction::BelowLower);
        // 7.0 -> 6.0 crosses 6.8 a fifth of the way through
        assert_eq!(eps[0].start, t(1.0));
        assert_eq!(eps[0].end, t(10.0));
        assert_eq!(eps[1].direction, Direction::AboveUpper);
    }

    #[test]
    fn precision_recall_and_latency() {
        let tr = trace_of(&[(0.0, 7.0), (5.0, 6.0), (10.0, 6.0), (15.0, 7.0), (100.0, 7.0)]);
        let cfg = EvalConfig::default();
        let log = vec![
            ph_alert(1, 4.0, Direction::BelowLower),
            ph_alert(2, 15.0, Direction::BelowLower),
            ph_alert(3, 15.5, Direction::BelowLower),
            ph_alert(4, 50.0, Direction::BelowLower),
            ph_alert(5, 6.0, Direction::AboveUpper),
        ];
        let q = alert_quality(&tr, &log, &cfg);
        assert_eq!(q.episodes, 1);
        assert_eq!(q.true_positive_alerts, 2);
        assert_eq!(q.precision_pct, Some(40.0));
        assert_eq!(q.recall_pct, Some(100.0));
        assert_eq!(q.latencies_s, vec![3.0]);
        assert_eq!(latency_percentiles(&tr, &log, &cfg).unwrap(), (3.0, 3.0));
    }

    #[test]
    fn vacuous_cases_are_not_applicable() {
        let tr = trace_of(&[(0.0, 7.0), (100.0, 7.0)]);
        let q = alert_quality(&tr, &[], &EvalConfig::default());
        assert_eq!((q.precision_pct, q.recall_pct), (None, None));
        assert!(matches!(latency_percentiles(&tr, &[], &EvalConfig::default()), Err(MetricsError::NoAlerts)));
        assert_eq!(recovery_times(&[]), Recovery::default());
        assert_eq!(endurance(&[]).servo_success_pct, None);
    }

    #[test]
    fn nearest_rank_definition() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 95.0), Some(95.0));
        assert_eq!(nearest_rank(&v, 50.0), Some(50.0));
        assert_eq!(nearest_rank(&[3.0], 95.0), Some(3.0));
        assert_eq!(nearest_rank(&[4.0, 1.0, 3.0, 2.0], 50.0), Some(2.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn recovery_from_fault_records() {
        let fault = |seq, at, fault| rec(seq, at, EventPayload::SystemFault { fault });
        let log = vec![
            fault(1, 0.0, FaultKind::NetworkDown),
            ph_snapshot(2, 5.0, 7.0),
            fault(3, 26.0, FaultKind::NetworkUp),
            rec(4, 26.0, EventPayload::PublishResumed { delivered: 5, dropped_total: 0 }),
            fault(5, 100.0, FaultKind::PowerLoss),
            fault(7, 127.0, FaultKind::PowerRestore),
        ];
        let r = recovery_times(&log);
        assert_eq!(r.network_s, vec![26.0]);
        assert_eq!(r.power_s, vec![27.0]);
        assert_eq!(r.records_lost, 1);
        assert_eq!(r.network_success_pct, Some(100.0));
        assert_eq!(r.power_success_pct, Some(0.0));
    }

    #[test]
    fn endurance_counts() {
        let feed = |seq, outcome| {
            rec(
                seq,
                seq as f64,
                EventPayload::FeedResult(FeedResult {
                    portions: 1,
                    source: CommandSource::Manual,
                    outcome,
                    dispensed_g: if outcome == FeedOutcome::Dispensed { 0.5 } else { 0.0 },
                    food_distance: Some(2.0),
                }),
            )
        };
        let mut log: Vec<_> = (0..99).map(|i| feed(i, FeedOutcome::Dispensed)).collect();
        log.push(feed(99, FeedOutcome::Jammed));
        log.push(feed(100, FeedOutcome::RejectedLowFood));
        log.push(rec(101, 101.0, EventPayload::PumpResult { on: false, acknowledged: true }));
        let e = endurance(&log);
        assert_eq!((e.feed_attempts, e.jams), (100, 1));
        assert_eq!(e.servo_success_pct, Some(99.0));
        assert_eq!(e.dispensed_g, 49.5);
        assert_eq!(e.pump_success_pct, Some(100.0));
    }

    #[test]
    fn report_is_deterministic_and_renders() {
        let tr = trace_of(&[(0.0, 7.0), (5.0, 6.0), (10.0, 7.0)]);
        let log = vec![ph_snapshot(1, 5.0, 6.1), ph_alert(2, 5.0, Direction::BelowLower)];
        let a = evaluate(&tr, &log, 0, &EvalConfig::default());
        let b = evaluate(&tr, &log, 0, &EvalConfig::default());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let table = a.render_table();
        assert!(table.contains("Alert precision"));
        assert!(table.contains("pH"));
    }
}
