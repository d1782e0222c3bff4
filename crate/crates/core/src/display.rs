//! 16x2 character LCD emulation: one parameter per page, cycling on a fixed
//! period.

use std::time::Duration;

use crate::domain::ParameterKind;
use crate::telemetry::{ReadingsSnapshot, Status};

pub const COLUMNS: usize = 16;
pub const PAGE_PERIOD: Duration = Duration::from_secs(3);

/// Page order on the display.
pub const PAGES: [ParameterKind; 7] = [
    ParameterKind::AirTemperature,
    ParameterKind::Humidity,
    ParameterKind::WaterTemperature,
    ParameterKind::Tds,
    ParameterKind::Ph,
    ParameterKind::Turbidity,
    ParameterKind::FoodDistance,
];

/// Two lines of at most 16 characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub lines: [String; 2],
}

impl Frame {
    fn new(top: String, bottom: String) -> Self {
        Frame {
            lines: [fit(top), fit(bottom)],
        }
    }

    /// Lines padded to full width, as the panel shows them.
    pub fn padded(&self) -> [String; 2] {
        self.lines.clone().map(|l| format!("{l:<COLUMNS$}"))
    }
}

fn fit(mut s: String) -> String {
    if let Some((idx, _)) = s.char_indices().nth(COLUMNS) {
        s.truncate(idx);
    }
    s
}

fn decimals(kind: ParameterKind) -> usize {
    match kind {
        ParameterKind::Ph => 2,
        ParameterKind::Tds | ParameterKind::Humidity => 0,
        _ => 1,
    }
}

fn unit(kind: ParameterKind) -> &'static str {
    match kind {
        ParameterKind::AirTemperature | ParameterKind::WaterTemperature => "C",
        ParameterKind::Humidity => "%",
        ParameterKind::Tds => "ppm",
        ParameterKind::Ph => "",
        ParameterKind::Turbidity => "NTU",
        ParameterKind::FoodDistance => "cm",
    }
}

/// Top line for one value, e.g. `pH: 7.02`.
pub fn value_line(kind: ParameterKind, value: f64) -> String {
    fit(format!("{}: {:.*}{}", kind.label(), decimals(kind), value, unit(kind)))
}

/// Index of the page shown `elapsed` after the display started.
pub fn page_index(elapsed: Duration) -> usize {
    (elapsed.as_millis() / PAGE_PERIOD.as_millis()) as usize % PAGES.len()
}

/// Renders page `index` from a snapshot.
pub fn render(snapshot: &ReadingsSnapshot, index: usize) -> Frame {
    let kind = PAGES[index % PAGES.len()];
    let pump = if snapshot.pump.on { "ON" } else { "OFF" };
    match snapshot.readings.get(&kind) {
        Some(r) => {
            let status = match snapshot.statuses.get(&kind) {
                Some(Status::Alert) => "ALERT",
                _ => "OK",
            };
            Frame::new(value_line(kind, r.value), format!("{status:<6}Pump:{pump}"))
        }
        None => Frame::new(format!("{}: --", kind.label()), format!("{:<6}Pump:{pump}", "N/A")),
    }
}

/// Shown while the service cannot be reached.
pub fn unreachable_frame(attempt: u64) -> Frame {
    Frame::new("No connection".into(), format!("Retry #{attempt}"))
}
