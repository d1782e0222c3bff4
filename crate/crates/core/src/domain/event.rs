use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Direction, ParameterKind, ParameterReading, Timestamp, UnknownKind};

/// Subject of an alert: a monitored parameter, or the empty food hopper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlertKind {
    Parameter(ParameterKind),
    LowFood,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::Parameter(k) => k.as_str(),
            AlertKind::LowFood => "low_food",
        }
    }

    pub fn parameter(self) -> Option<ParameterKind> {
        match self {
            AlertKind::Parameter(k) => Some(k),
            AlertKind::LowFood => None,
        }
    }
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlertKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "low_food" {
            Ok(AlertKind::LowFood)
        } else {
            s.parse().map(AlertKind::Parameter)
        }
    }
}

impl Serialize for AlertKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AlertKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An emitted notification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub kind: AlertKind,
    pub direction: Direction,
    pub observed_value: f64,
    pub timestamp: Timestamp,
    pub message: String,
}

impl AlertEvent {
    pub fn new(kind: AlertKind, direction: Direction, observed_value: f64, timestamp: Timestamp) -> Self {
        let message = match (kind, direction) {
            (AlertKind::LowFood, _) => format!("food hopper empty (distance {observed_value:.2} cm)"),
            (AlertKind::Parameter(k), Direction::BelowLower) => {
                format!("{k} low: {observed_value:.2} {}", k.unit())
            }
            (AlertKind::Parameter(k), _) => format!("{k} high: {observed_value:.2} {}", k.unit()),
        };
        AlertEvent {
            kind,
            direction,
            observed_value,
            timestamp,
            message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Manual,
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CommandVariant {
    Feed { portions: u32 },
    PumpSet { on: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub variant: CommandVariant,
    pub source: CommandSource,
    pub timestamp: Timestamp,
}

impl ActuatorCommand {
    pub fn feed(portions: u32, source: CommandSource, timestamp: Timestamp) -> Self {
        ActuatorCommand {
            variant: CommandVariant::Feed { portions },
            source,
            timestamp,
        }
    }

    pub fn pump(on: bool, source: CommandSource, timestamp: Timestamp) -> Self {
        ActuatorCommand {
            variant: CommandVariant::PumpSet { on },
            source,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    NetworkDown,
    NetworkUp,
    PowerLoss,
    PowerRestore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedOutcome {
    Dispensed,
    /// Hopper reads empty; a low-food alert was raised (subject to cooldown).
    RejectedLowFood,
    /// No valid food-distance reading is available yet.
    RejectedNoReading,
    Jammed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedResult {
    pub portions: u32,
    pub source: CommandSource,
    pub outcome: FeedOutcome,
    pub dispensed_g: f64,
    pub food_distance: Option<f64>,
}

impl FeedResult {
    pub fn accepted(&self) -> bool {
        self.outcome == FeedOutcome::Dispensed
    }
}

/// Body of an event-log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    SensorSnapshot {
        cycle: u64,
        readings: Vec<ParameterReading>,
    },
    Command(ActuatorCommand),
    Alert(AlertEvent),
    /// A violation that the cooldown gate held back.
    AlertSuppressed {
        kind: AlertKind,
        direction: Direction,
        observed_value: f64,
        last_emission: Timestamp,
    },
    SystemFault {
        fault: FaultKind,
    },
    FeedResult(FeedResult),
    PumpResult {
        on: bool,
        acknowledged: bool,
    },
    /// A parameter returned inside its safe band.
    RecoveryNote {
        kind: ParameterKind,
        cleared: Direction,
        value: f64,
    },
    /// First successful cloud delivery after a connectivity loss.
    PublishResumed {
        delivered: u64,
        dropped_total: u64,
    },
    PublishDropped {
        dropped_total: u64,
    },
}

impl EventPayload {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventPayload::SensorSnapshot { .. } => "sensor_snapshot",
            EventPayload::Command(_) => "command",
            EventPayload::Alert(_) => "alert",
            EventPayload::AlertSuppressed { .. } => "alert_suppressed",
            EventPayload::SystemFault { .. } => "system_fault",
            EventPayload::FeedResult(_) => "feed_result",
            EventPayload::PumpResult { .. } => "pump_result",
            EventPayload::RecoveryNote { .. } => "recovery_note",
            EventPayload::PublishResumed { .. } => "publish_resumed",
            EventPayload::PublishDropped { .. } => "publish_dropped",
        }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub sequence_number: u64,
    pub timestamp: Timestamp,
    pub payload: EventPayload,
}

impl EventRecord {
    pub fn alert(&self) -> Option<&AlertEvent> {
        match &self.payload {
            EventPayload::Alert(a) => Some(a),
            _ => None,
        }
    }

    pub fn fault(&self) -> Option<FaultKind> {
        match self.payload {
            EventPayload::SystemFault { fault } => Some(fault),
            _ => None,
        }
    }
}
