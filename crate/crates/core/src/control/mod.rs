//! Threshold evaluation, cooldown-gated alerting, feed gating and dosing,
//! pump control, and the feeding schedule.
//!
//! The [`Controller`] owns all control state and is driven once per poll
//! cycle. It never touches the plant directly: feed and pump effects come
//! back to the caller in the returned outputs.

mod config;

pub use config::{ConfigError, ControlConfig, JamConfig};

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{Days, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ActuatorCommand, AlertEvent, AlertKind, CommandSource, CommandVariant, Direction, EventPayload,
    EventRecord, FeedOutcome, FeedResult, ParameterKind, ParameterReading, Quality, RuleSet,
    Timestamp,
};

/// Alerts gate independently per (subject, direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AlertKey {
    pub kind: AlertKind,
    pub direction: Direction,
}

impl AlertKey {
    pub fn new(kind: AlertKind, direction: Direction) -> Self {
        AlertKey { kind, direction }
    }

    pub fn low_food() -> Self {
        AlertKey::new(AlertKind::LowFood, Direction::LowFood)
    }
}

/// Last emission per alert key plus the cooldown that separates emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertGateState {
    cooldown_ms: i64,
    last_emission: BTreeMap<AlertKey, Timestamp>,
}

impl AlertGateState {
    pub fn new(cooldown: Duration) -> Self {
        assert!(!cooldown.is_zero(), "cooldown must be positive");
        AlertGateState {
            cooldown_ms: cooldown.as_millis() as i64,
            last_emission: BTreeMap::new(),
        }
    }

    pub fn cooldown(&self) -> Duration {
        Duration::from_millis(self.cooldown_ms as u64)
    }

    pub fn last_emission(&self, key: &AlertKey) -> Option<Timestamp> {
        self.last_emission.get(key).copied()
    }

    /// Emit iff the key has never fired or at least one cooldown has elapsed
    /// since it last fired. Records `now` on emission.
    pub fn admit(&mut self, key: AlertKey, now: Timestamp) -> bool {
        let open = match self.last_emission.get(&key) {
            None => true,
            Some(last) => now.millis_since(*last) >= self.cooldown_ms,
        };
        if open {
            self.last_emission.insert(key, now);
        }
        open
    }

    fn note_emission(&mut self, key: AlertKey, at: Timestamp) {
        let slot = self.last_emission.entry(key).or_insert(at);
        if at > *slot {
            *slot = at;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeederState {
    pub portion_mass_g: f64,
    pub total_dispensed_g: f64,
    pub jam_flag: bool,
    pub attempts: u64,
    pub jams: u64,
}

impl FeederState {
    pub fn new(portion_mass_g: f64) -> Self {
        FeederState {
            portion_mass_g,
            total_dispensed_g: 0.0,
            jam_flag: false,
            attempts: 0,
            jams: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpState {
    pub on: bool,
    pub last_toggle: Option<Timestamp>,
}

impl Default for PumpState {
    fn default() -> Self {
        PumpState {
            on: true,
            last_toggle: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("feeder jammed")]
pub struct FeederJam;

/// The servo behind the feeder.
pub trait FeederActuator: Send {
    fn rotate(&mut self, portions: u32) -> Result<(), FeederJam>;
}

/// Simulated servo that jams with a fixed probability per rotation once it
/// has completed `after_cycles` rotations.
#[derive(Debug, Clone)]
pub struct SimServo {
    probability: f64,
    after_cycles: u64,
    cycles: u64,
    rng: ChaCha8Rng,
}

impl SimServo {
    pub fn new(config: &JamConfig) -> Self {
        SimServo {
            probability: config.probability,
            after_cycles: config.after_cycles,
            cycles: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }
}

impl FeederActuator for SimServo {
    fn rotate(&mut self, portions: u32) -> Result<(), FeederJam> {
        for _ in 0..portions {
            self.cycles += 1;
            let draw: f64 = self.rng.random();
            if self.cycles > self.after_cycles && draw < self.probability {
                return Err(FeederJam);
            }
        }
        Ok(())
    }
}

/// Daily feeding times. A slot fires when a poll crosses it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedSchedule {
    slots: Vec<NaiveTime>,
    prev: Option<Timestamp>,
}

impl FeedSchedule {
    pub fn new(mut slots: Vec<NaiveTime>) -> Self {
        slots.sort();
        slots.dedup();
        FeedSchedule { slots, prev: None }
    }

    pub fn slots(&self) -> &[NaiveTime] {
        &self.slots
    }

    /// Returns one scheduled feed if any slot instant lies in `(prev, now]`.
    /// The first call only arms the schedule.
    pub fn poll(&mut self, now: Timestamp) -> Option<ActuatorCommand> {
        let prev = self.prev.replace(now.max(self.prev.unwrap_or(now)))?;
        if self.slots.is_empty() || now <= prev {
            return None;
        }
        let (from, to) = (prev.to_datetime(), now.to_datetime());
        let mut day = from.date_naive();
        while day <= to.date_naive() {
            for slot in &self.slots {
                let at = Timestamp::from_datetime(day.and_time(*slot).and_utc());
                if at > prev && at <= now {
                    return Some(ActuatorCommand::feed(1, CommandSource::Schedule, now));
                }
            }
            day = day.checked_add_days(Days::new(1))?;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("feed needs at least one portion, got {0}")]
    InvalidPortions(u32),
}

/// Result of one poll cycle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleOutput {
    pub alerts: Vec<AlertEvent>,
    pub records: Vec<(Timestamp, EventPayload)>,
    /// Scheduled feed processed during this cycle, if any.
    pub feed: Option<FeedResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedOutput {
    pub result: FeedResult,
    pub alert: Option<AlertEvent>,
    pub records: Vec<(Timestamp, EventPayload)>,
}

pub struct Controller {
    rules: RuleSet,
    hysteresis: BTreeMap<ParameterKind, f64>,
    gates: AlertGateState,
    feeder: FeederState,
    pump: PumpState,
    schedule: FeedSchedule,
    servo: Box<dyn FeederActuator>,
    violating: BTreeMap<ParameterKind, Direction>,
    latest_valid: BTreeMap<ParameterKind, ParameterReading>,
    cycle: u64,
}

impl std::fmt::Debug for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Controller")
            .field("cycle", &self.cycle)
            .field("pump", &self.pump)
            .field("feeder", &self.feeder)
            .finish_non_exhaustive()
    }
}

impl Controller {
    pub fn new(config: &ControlConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self::with_servo(config, Box::new(SimServo::new(&config.jam))))
    }

    pub fn with_servo(config: &ControlConfig, servo: Box<dyn FeederActuator>) -> Self {
        Controller {
            rules: config.rules.clone(),
            hysteresis: config.hysteresis.clone(),
            gates: AlertGateState::new(config.cooldown()),
            feeder: FeederState::new(config.portion_mass_g),
            pump: PumpState::default(),
            schedule: FeedSchedule::new(config.schedule_times().unwrap_or_default()),
            servo,
            violating: BTreeMap::new(),
            latest_valid: BTreeMap::new(),
            cycle: 0,
        }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn gates(&self) -> &AlertGateState {
        &self.gates
    }

    pub fn feeder(&self) -> &FeederState {
        &self.feeder
    }

    pub fn pump(&self) -> &PumpState {
        &self.pump
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn latest_valid(&self, kind: ParameterKind) -> Option<&ParameterReading> {
        self.latest_valid.get(&kind)
    }

    /// Rebuilds durable control state from an earlier log after a restart:
    /// alert cooldowns and feeder totals carry over, the pump returns to its
    /// default-on state.
    pub fn recover_from(&mut self, records: &[EventRecord]) {
        for rec in records {
            match &rec.payload {
                EventPayload::Alert(a) => {
                    self.gates.note_emission(AlertKey::new(a.kind, a.direction), a.timestamp)
                }
                EventPayload::FeedResult(f) => match f.outcome {
                    FeedOutcome::Dispensed => {
                        self.feeder.attempts += 1;
                        self.feeder.total_dispensed_g += f.dispensed_g;
                    }
                    FeedOutcome::Jammed => {
                        self.feeder.attempts += 1;
                        self.feeder.jams += 1;
                    }
                    _ => {}
                },
                EventPayload::SensorSnapshot { cycle, .. } => self.cycle = self.cycle.max(*cycle),
                _ => {}
            }
        }
    }

    /// Evaluates one snapshot of readings taken at `now`.
    pub fn poll_cycle(&mut self, readings: &[ParameterReading], now: Timestamp) -> CycleOutput {
        self.cycle += 1;
        let mut out = CycleOutput::default();
        out.records.push((
            now,
            EventPayload::SensorSnapshot {
                cycle: self.cycle,
                readings: readings.to_vec(),
            },
        ));
        for reading in readings.iter().filter(|r| r.quality == Quality::Valid) {
            self.latest_valid.insert(reading.kind, *reading);
            let Some(rule) = self.rules.get(reading.kind).filter(|r| r.action == crate::domain::RuleAction::Alert)
            else {
                continue;
            };
            let rule = *rule;
            match rule.violates(reading.value) {
                Some(direction) => {
                    self.violating.insert(reading.kind, direction);
                    let key = AlertKey::new(AlertKind::Parameter(reading.kind), direction);
                    self.gate(key, reading.value, now, &mut out.alerts, &mut out.records);
                }
                None => {
                    if let Some(&cleared) = self.violating.get(&reading.kind) {
                        let margin = self.hysteresis.get(&reading.kind).copied().unwrap_or(0.0);
                        if rule.cleared(reading.value, cleared, margin) {
                            self.violating.remove(&reading.kind);
                            out.records.push((
                                now,
                                EventPayload::RecoveryNote {
                                    kind: reading.kind,
                                    cleared,
                                    value: reading.value,
                                },
                            ));
                        }
                    }
                }
            }
        }
        if let Some(cmd) = self.schedule.poll(now) {
            if let Ok(feed) = self.request_feed(&cmd, now) {
                out.alerts.extend(feed.alert);
                out.records.extend(feed.records);
                out.feed = Some(feed.result);
            }
        }
        out
    }

    fn gate(
        &mut self,
        key: AlertKey,
        value: f64,
        now: Timestamp,
        alerts: &mut Vec<AlertEvent>,
        records: &mut Vec<(Timestamp, EventPayload)>,
    ) -> Option<AlertEvent> {
        let previous = self.gates.last_emission(&key);
        if self.gates.admit(key, now) {
            let alert = AlertEvent::new(key.kind, key.direction, value, now);
            alerts.push(alert.clone());
            records.push((now, EventPayload::Alert(alert.clone())));
            Some(alert)
        } else {
            records.push((
                now,
                EventPayload::AlertSuppressed {
                    kind: key.kind,
                    direction: key.direction,
                    observed_value: value,
                    last_emission: previous.expect("suppression implies an earlier emission"),
                },
            ));
            None
        }
    }

    /// Dispenses food when the hopper reads non-empty; otherwise raises a
    /// (cooldown-gated) low-food alert and rejects the command.
    ///
    /// The hopper counts as empty once the distance reaches the feeding rule's
    /// upper bound: at that point the sensor sees the bottom of the gap.
    pub fn request_feed(&mut self, cmd: &ActuatorCommand, now: Timestamp) -> Result<FeedOutput, ControlError> {
        let CommandVariant::Feed { portions } = cmd.variant else {
            panic!("request_feed called with a pump command");
        };
        if portions == 0 {
            return Err(ControlError::InvalidPortions(portions));
        }
        let mut records = vec![(now, EventPayload::Command(*cmd))];
        let mut alerts = Vec::new();
        let distance = self.latest_valid.get(&ParameterKind::FoodDistance).map(|r| r.value);
        let empty_at = self
            .rules
            .get(ParameterKind::FoodDistance)
            .and_then(|r| r.upper)
            .unwrap_or(5.0);
        let outcome = match distance {
            None => FeedOutcome::RejectedNoReading,
            Some(d) if d >= empty_at => {
                self.gate(AlertKey::low_food(), d, now, &mut alerts, &mut records);
                FeedOutcome::RejectedLowFood
            }
            Some(_) => {
                self.feeder.attempts += 1;
                match self.servo.rotate(portions) {
                    Ok(()) => {
                        self.feeder.jam_flag = false;
                        FeedOutcome::Dispensed
                    }
                    Err(FeederJam) => {
                        self.feeder.jam_flag = true;
                        self.feeder.jams += 1;
                        FeedOutcome::Jammed
                    }
                }
            }
        };
        let dispensed_g = if outcome == FeedOutcome::Dispensed {
            self.feeder.portion_mass_g * f64::from(portions)
        } else {
            0.0
        };
        self.feeder.total_dispensed_g += dispensed_g;
        let result = FeedResult {
            portions,
            source: cmd.source,
            outcome,
            dispensed_g,
            food_distance: distance,
        };
        // the result record follows the low-food alert or suppression, if any
        records.push((now, EventPayload::FeedResult(result)));
        Ok(FeedOutput {
            result,
            alert: alerts.pop(),
            records,
        })
    }

    /// Sets the pump; repeated sets are still logged.
    pub fn set_pump(&mut self, cmd: &ActuatorCommand, now: Timestamp) -> (PumpState, Vec<(Timestamp, EventPayload)>) {
        let CommandVariant::PumpSet { on } = cmd.variant else {
            panic!("set_pump called with a feed command");
        };
        self.pump = PumpState {
            on,
            last_toggle: Some(now),
        };
        let records = vec![
            (now, EventPayload::Command(*cmd)),
            (
                now,
                EventPayload::PumpResult {
                    on,
                    acknowledged: true,
                },
            ),
        ];
        (self.pump, records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: i64 = 60_000;

    fn t(ms: i64) -> Timestamp {
        Timestamp::from_millis(1_748_736_000_000 + ms)
    }

    fn reading(kind: ParameterKind, value: f64, at: Timestamp) -> ParameterReading {
        ParameterReading {
            kind,
            value,
            timestamp: at,
            quality: Quality::Valid,
        }
    }

    fn in_band(at: Timestamp) -> Vec<ParameterReading> {
        vec![
            reading(ParameterKind::WaterTemperature, 26.0, at),
            reading(ParameterKind::Ph, 7.5, at),
            reading(ParameterKind::Tds, 230.0, at),
            reading(ParameterKind::Turbidity, 20.0, at),
            reading(ParameterKind::AirTemperature, 24.0, at),
            reading(ParameterKind::Humidity, 55.0, at),
            reading(ParameterKind::FoodDistance, 2.0, at),
        ]
    }

    fn controller() -> Controller {
        Controller::new(&ControlConfig {
            feed_schedule: vec![],
            ..ControlConfig::default()
        })
        .unwrap()
    }

    fn with_water(value: f64, at: Timestamp) -> Vec<ParameterReading> {
        let mut r = in_band(at);
        r[0].value = value;
        r
    }

    #[test]
    fn gate_boundaries() {
        let key = AlertKey::new(AlertKind::Parameter(ParameterKind::Ph), Direction::BelowLower);
        let mut g = AlertGateState::new(Duration::from_secs(600));
        assert!(g.admit(key, t(0)));
        assert!(!g.admit(key, t(599_000)));
        assert!(!g.admit(key, t(599_999)));
        assert!(g.admit(key, t(600_000)));
        assert_eq!(g.last_emission(&key), Some(t(600_000)));
        // other keys gate independently
        let high = AlertKey::new(AlertKind::Parameter(ParameterKind::Ph), Direction::AboveUpper);
        assert!(g.admit(high, t(600_001)));
    }

    #[test]
    fn in_band_cycle_logs_only_the_snapshot() {
        let mut c = controller();
        let out = c.poll_cycle(&in_band(t(0)), t(0));
        assert!(out.alerts.is_empty());
        assert_eq!(out.records.len(), 1);
        assert!(matches!(out.records[0].1, EventPayload::SensorSnapshot { cycle: 1, .. }));
    }

    #[test]
    fn hot_water_alerts_then_suppresses() {
        let mut c = controller();
        let out = c.poll_cycle(&with_water(29.5, t(0)), t(0));
        assert_eq!(out.alerts.len(), 1);
        assert_eq!(out.alerts[0].direction, Direction::AboveUpper);
        assert_eq!(out.alerts[0].kind, AlertKind::Parameter(ParameterKind::WaterTemperature));

        let later = t(5 * MIN);
        let out = c.poll_cycle(&with_water(29.5, later), later);
        assert!(out.alerts.is_empty());
        let suppressed = out
            .records
            .iter()
            .filter(|(_, p)| matches!(p, EventPayload::AlertSuppressed { .. }))
            .count();
        assert_eq!(suppressed, 1);

        let out = c.poll_cycle(&with_water(29.5, t(10 * MIN)), t(10 * MIN));
        assert_eq!(out.alerts.len(), 1);
    }

    #[test]
    fn non_valid_readings_never_alert() {
        let mut c = controller();
        let mut r = with_water(40.0, t(0));
        r[0].quality = Quality::Smoothing;
        r[1] = ParameterReading { value: 2.0, quality: Quality::Invalid, ..r[1] };
        let out = c.poll_cycle(&r, t(0));
        assert!(out.alerts.is_empty());
    }

    #[test]
    fn recovery_note_on_reentry() {
        let mut c = controller();
        c.poll_cycle(&with_water(29.0, t(0)), t(0));
        let out = c.poll_cycle(&with_water(27.0, t(5000)), t(5000));
        assert!(out.records.iter().any(|(_, p)| matches!(
            p,
            EventPayload::RecoveryNote { kind: ParameterKind::WaterTemperature, cleared: Direction::AboveUpper, .. }
        )));
        // recovery does not reset the cooldown
        let out = c.poll_cycle(&with_water(29.0, t(10_000)), t(10_000));
        assert!(out.alerts.is_empty());
    }

    #[test]
    fn hysteresis_delays_recovery_note() {
        let mut cfg = ControlConfig { feed_schedule: vec![], ..ControlConfig::default() };
        cfg.hysteresis.insert(ParameterKind::WaterTemperature, 0.5);
        let mut c = Controller::new(&cfg).unwrap();
        c.poll_cycle(&with_water(29.0, t(0)), t(0));
        let out = c.poll_cycle(&with_water(27.8, t(5000)), t(5000));
        assert!(!out.records.iter().any(|(_, p)| matches!(p, EventPayload::RecoveryNote { .. })));
        let out = c.poll_cycle(&with_water(27.4, t(10_000)), t(10_000));
        assert!(out.records.iter().any(|(_, p)| matches!(p, EventPayload::RecoveryNote { .. })));
    }

    #[test]
    fn feed_dispenses_half_gram_per_portion() {
        let mut c = controller();
        c.poll_cycle(&in_band(t(0)), t(0));
        let one = c.request_feed(&ActuatorCommand::feed(1, CommandSource::Manual, t(1)), t(1)).unwrap();
        assert_eq!(one.result.outcome, FeedOutcome::Dispensed);
        assert_eq!(one.result.dispensed_g, 0.5);
        let two = c.request_feed(&ActuatorCommand::feed(2, CommandSource::Manual, t(2)), t(2)).unwrap();
        assert_eq!(two.result.dispensed_g, 1.0);
        assert_eq!(c.feeder().total_dispensed_g, 1.5);
        assert!(matches!(
            c.request_feed(&ActuatorCommand::feed(0, CommandSource::Manual, t(3)), t(3)),
            Err(ControlError::InvalidPortions(0))
        ));
    }

    #[test]
    fn empty_hopper_rejects_with_low_food_alert() {
        let mut c = controller();
        let mut r = in_band(t(0));
        r[6].value = 5.0;
        c.poll_cycle(&r, t(0));
        let out = c.request_feed(&ActuatorCommand::feed(1, CommandSource::Manual, t(1)), t(1)).unwrap();
        assert_eq!(out.result.outcome, FeedOutcome::RejectedLowFood);
        assert_eq!(out.result.dispensed_g, 0.0);
        let alert = out.alert.unwrap();
        assert_eq!(alert.kind, AlertKind::LowFood);
        // gated like any other alert
        let again = c.request_feed(&ActuatorCommand::feed(1, CommandSource::Manual, t(2)), t(2)).unwrap();
        assert!(again.alert.is_none());
        assert_eq!(c.feeder().total_dispensed_g, 0.0);
    }

    #[test]
    fn feed_without_reading_is_rejected() {
        let mut c = controller();
        let out = c.request_feed(&ActuatorCommand::feed(1, CommandSource::Manual, t(0)), t(0)).unwrap();
        assert_eq!(out.result.outcome, FeedOutcome::RejectedNoReading);
    }

    struct AlwaysJam;
    impl FeederActuator for AlwaysJam {
        fn rotate(&mut self, _: u32) -> Result<(), FeederJam> {
            Err(FeederJam)
        }
    }

    #[test]
    fn jam_aborts_feed() {
        let mut c = Controller::with_servo(&ControlConfig::default(), Box::new(AlwaysJam));
        c.poll_cycle(&in_band(t(0)), t(0));
        let out = c.request_feed(&ActuatorCommand::feed(1, CommandSource::Manual, t(1)), t(1)).unwrap();
        assert_eq!(out.result.outcome, FeedOutcome::Jammed);
        assert!(c.feeder().jam_flag);
        assert_eq!(c.feeder().jams, 1);
        assert_eq!(c.feeder().total_dispensed_g, 0.0);
    }

    #[test]
    fn sim_servo_respects_warmup_cycles() {
        let mut s = SimServo::new(&JamConfig { probability: 1.0, after_cycles: 3, seed: 1 });
        assert!(s.rotate(3).is_ok());
        assert_eq!(s.rotate(1), Err(FeederJam));
    }

    #[test]
    fn pump_defaults_on_and_sets_are_logged() {
        let mut c = controller();
        assert!(c.pump().on);
        let (p, recs) = c.set_pump(&ActuatorCommand::pump(false, CommandSource::Manual, t(0)), t(0));
        assert!(!p.on);
        assert_eq!(recs.len(), 2);
        let (p, _) = c.set_pump(&ActuatorCommand::pump(true, CommandSource::Manual, t(1)), t(1));
        assert!(p.on);
        let (p, recs) = c.set_pump(&ActuatorCommand::pump(true, CommandSource::Manual, t(2)), t(2));
        assert!(p.on);
        assert_eq!(p.last_toggle, Some(t(2)));
        assert_eq!(recs.len(), 2);
    }

    fn at(h: u32, m: u32, s: u32) -> Timestamp {
        let dt = chrono::NaiveDate::from_ymd_opt(2025, 6, 1)
            .unwrap()
            .and_hms_opt(h, m, s)
            .unwrap()
            .and_utc();
        Timestamp::from_datetime(dt)
    }

    #[test]
    fn schedule_crossing_fires_once() {
        let mut s = FeedSchedule::new(vec![NaiveTime::from_hms_opt(8, 0, 0).unwrap()]);
        assert!(s.poll(at(7, 59, 58)).is_none());
        let cmd = s.poll(at(8, 0, 3)).unwrap();
        assert_eq!(cmd.variant, CommandVariant::Feed { portions: 1 });
        assert_eq!(cmd.source, CommandSource::Schedule);
        assert!(s.poll(at(8, 0, 8)).is_none());
        assert!(s.poll(at(9, 0, 0)).is_none());
    }

    #[test]
    fn schedule_both_polls_after_slot_never_fires() {
        let mut s = FeedSchedule::new(vec![NaiveTime::from_hms_opt(8, 0, 0).unwrap()]);
        assert!(s.poll(at(8, 0, 1)).is_none());
        assert!(s.poll(at(8, 0, 6)).is_none());
    }

    #[test]
    fn schedule_crosses_midnight_and_empty_never_fires() {
        let mut s = FeedSchedule::new(vec![NaiveTime::from_hms_opt(0, 0, 0).unwrap()]);
        s.poll(at(23, 59, 58));
        assert!(s.poll(at(23, 59, 58) + Duration::from_secs(5)).is_some());
        let mut e = FeedSchedule::new(vec![]);
        for h in 0..24 {
            assert!(e.poll(at(h, 0, 0)).is_none());
        }
    }

    #[test]
    fn recovery_restores_cooldowns_and_totals() {
        let mut c = controller();
        let out = c.poll_cycle(&with_water(29.5, t(0)), t(0));
        let feed = c.request_feed(&ActuatorCommand::feed(1, CommandSource::Manual, t(1)), t(1)).unwrap();
        let records: Vec<EventRecord> = out
            .records
            .into_iter()
            .chain(feed.records)
            .enumerate()
            .map(|(i, (ts, payload))| EventRecord { sequence_number: i as u64 + 1, timestamp: ts, payload })
            .collect();
        let mut fresh = controller();
        fresh.recover_from(&records);
        assert_eq!(fresh.feeder().total_dispensed_g, 0.5);
        assert_eq!(fresh.cycle(), 1);
        let out = fresh.poll_cycle(&with_water(29.5, t(60_000)), t(60_000));
        assert!(out.alerts.is_empty(), "cooldown survived the restart");
    }
}
