//! Shared vocabulary: parameters and their units, readings, threshold rules,
//! actuator commands, alerts, and event-log records.
//!
//! Every type here is a plain value with a stable JSON shape
//! (lower_snake_case field names); the event log and the telemetry API both
//! serialize through these definitions.

mod event;
mod rules;
mod time;

pub use event::{
    ActuatorCommand, AlertEvent, AlertKind, CommandSource, CommandVariant, EventPayload,
    EventRecord, FaultKind, FeedOutcome, FeedResult,
};
pub use rules::{default_rules, violates, Direction, RuleAction, RuleError, RuleSet, ThresholdRule};
pub use time::{Monotonic, Timestamp, TimestampParseError};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Largest value produced by the 12-bit converter.
pub const ADC_MAX: u16 = 4095;

/// A measured water or air parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    AirTemperature,
    Humidity,
    WaterTemperature,
    Tds,
    Ph,
    Turbidity,
    FoodDistance,
}

impl ParameterKind {
    /// All kinds in display and polling order.
    pub const ALL: [ParameterKind; 7] = [
        ParameterKind::WaterTemperature,
        ParameterKind::Ph,
        ParameterKind::Tds,
        ParameterKind::Turbidity,
        ParameterKind::AirTemperature,
        ParameterKind::Humidity,
        ParameterKind::FoodDistance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParameterKind::AirTemperature => "air_temperature",
            ParameterKind::Humidity => "humidity",
            ParameterKind::WaterTemperature => "water_temperature",
            ParameterKind::Tds => "tds",
            ParameterKind::Ph => "ph",
            ParameterKind::Turbidity => "turbidity",
            ParameterKind::FoodDistance => "food_distance",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ParameterKind::AirTemperature | ParameterKind::WaterTemperature => "°C",
            ParameterKind::Humidity => "%RH",
            ParameterKind::Tds => "ppm",
            ParameterKind::Ph => "pH",
            ParameterKind::Turbidity => "NTU",
            ParameterKind::FoodDistance => "cm",
        }
    }

    /// Physical measurement range `(min, max)` in engineering units.
    pub fn range(self) -> (f64, f64) {
        match self {
            ParameterKind::AirTemperature | ParameterKind::WaterTemperature => (-10.0, 60.0),
            ParameterKind::Humidity => (0.0, 100.0),
            ParameterKind::Tds => (0.0, 1000.0),
            ParameterKind::Ph => (0.0, 14.0),
            ParameterKind::Turbidity => (0.0, 1000.0),
            ParameterKind::FoodDistance => (0.0, 5.0),
        }
    }

    pub fn in_range(self, value: f64) -> bool {
        let (lo, hi) = self.range();
        value >= lo && value <= hi
    }

    pub fn clamp(self, value: f64) -> f64 {
        let (lo, hi) = self.range();
        value.clamp(lo, hi)
    }

    /// Short label used on the 16x2 display.
    pub fn label(self) -> &'static str {
        match self {
            ParameterKind::AirTemperature => "Air",
            ParameterKind::Humidity => "Hum",
            ParameterKind::WaterTemperature => "Water",
            ParameterKind::Tds => "TDS",
            ParameterKind::Ph => "pH",
            ParameterKind::Turbidity => "Turb",
            ParameterKind::FoodDistance => "Food",
        }
    }
}

impl fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown parameter kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for ParameterKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParameterKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// Reading quality after validation and smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Valid,
    /// Smoothing window not yet full.
    Smoothing,
    Invalid,
}

/// One calibrated, timestamped measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterReading {
    pub kind: ParameterKind,
    pub value: f64,
    pub timestamp: Timestamp,
    pub quality: Quality,
}

/// Raw converter output for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub channel: ParameterKind,
    pub counts: u16,
    pub monotonic_time: Monotonic,
}

impl RawSample {
    /// Builds a sample, saturating `counts` to the 12-bit scale.
    pub fn new(channel: ParameterKind, counts: u16, monotonic_time: Monotonic) -> Self {
        RawSample {
            channel,
            counts: counts.min(ADC_MAX),
            monotonic_time,
        }
    }
}
