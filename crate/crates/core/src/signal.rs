//! Edge-side signal conditioning: two-point linear calibration from converter
//! counts to engineering units, physical-range validation, and a five-sample
//! moving average.
//!
//! Order of operations for each sample is calibrate, then validate, then
//! smooth. Invalid values never enter the smoothing window.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ParameterKind, ParameterReading, Quality, RawSample, Timestamp, ADC_MAX};

pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("sample from channel {sample} cannot use the {curve} calibration curve")]
    CurveMismatch {
        sample: ParameterKind,
        curve: ParameterKind,
    },
    #[error("calibration points share the same count value {0}")]
    DegeneratePoints(u16),
    #[error("calibration points map to the same value {0}; curve would not be monotone")]
    FlatCurve(f64),
    #[error("reading calibration file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing calibration file: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Linear map `value = slope * counts + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub kind: ParameterKind,
    pub slope: f64,
    pub intercept: f64,
}

/// Exact line through two `(counts, value)` calibration points.
pub fn fit_curve(
    kind: ParameterKind,
    p1: (u16, f64),
    p2: (u16, f64),
) -> Result<CalibrationCurve, SignalError> {
    let (c1, v1) = p1;
    let (c2, v2) = p2;
    if c1 == c2 {
        return Err(SignalError::DegeneratePoints(c1));
    }
    if v1 == v2 {
        return Err(SignalError::FlatCurve(v1));
    }
    let slope = (v2 - v1) / (f64::from(c2) - f64::from(c1));
    let intercept = v1 - slope * f64::from(c1);
    Ok(CalibrationCurve {
        kind,
        slope,
        intercept,
    })
}

impl CalibrationCurve {
    /// Full 12-bit scale spanning the kind's physical range.
    pub fn default_for(kind: ParameterKind) -> Self {
        let (lo, hi) = kind.range();
        fit_curve(kind, (0, lo), (ADC_MAX, hi)).expect("physical ranges are non-empty")
    }

    pub fn value_at(&self, counts: f64) -> f64 {
        self.slope * counts + self.intercept
    }

    /// Unquantized counts that would calibrate to `value`.
    pub fn counts_for(&self, value: f64) -> f64 {
        (value - self.intercept) / self.slope
    }

    /// Engineering-unit width of one count.
    pub fn resolution(&self) -> f64 {
        self.slope.abs()
    }
}

/// Converts a raw sample to engineering units. The result is not clamped.
pub fn calibrate(sample: &RawSample, curve: &CalibrationCurve) -> Result<f64, SignalError> {
    if sample.channel != curve.kind {
        return Err(SignalError::CurveMismatch {
            sample: sample.channel,
            curve: curve.kind,
        });
    }
    Ok(curve.value_at(f64::from(sample.counts)))
}

pub fn validate(kind: ParameterKind, value: f64) -> Quality {
    if value.is_finite() && kind.in_range(value) {
        Quality::Valid
    } else {
        Quality::Invalid
    }
}

/// Moving-average window over the most recent accepted values.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingWindow {
    kind: ParameterKind,
    capacity: usize,
    buffer: VecDeque<f64>,
}

impl SmoothingWindow {
    pub fn new(kind: ParameterKind) -> Self {
        Self::with_capacity(kind, DEFAULT_WINDOW)
    }

    pub fn with_capacity(kind: ParameterKind, capacity: usize) -> Self {
        assert!(capacity > 0, "smoothing window needs capacity >= 1");
        SmoothingWindow {
            kind,
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        }
    }

    pub fn kind(&self) -> ParameterKind {
        self.kind
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.buffer.iter().copied()
    }

    /// Appends `value`, evicting the oldest when full, and returns the mean of
    /// the buffer with `Smoothing` quality until the window has filled.
    pub fn smooth(&mut self, value: f64) -> (f64, Quality) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(value);
        let mean = self.buffer.iter().sum::<f64>() / self.buffer.len() as f64;
        let quality = if self.is_full() {
            Quality::Valid
        } else {
            Quality::Smoothing
        };
        (mean, quality)
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
    }
}

/// calibrate, validate, smooth. Invalid samples leave `window` untouched and
/// carry their raw calibrated value.
pub fn process(
    sample: &RawSample,
    curve: &CalibrationCurve,
    window: &mut SmoothingWindow,
    timestamp: Timestamp,
) -> Result<ParameterReading, SignalError> {
    let raw = calibrate(sample, curve)?;
    let (value, quality) = match validate(sample.channel, raw) {
        Quality::Invalid => (raw, Quality::Invalid),
        _ => window.smooth(raw),
    };
    Ok(ParameterReading {
        kind: sample.channel,
        value,
        timestamp,
        quality,
    })
}

/// Per-parameter calibration curves, defaulting to full-scale maps.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    curves: BTreeMap<ParameterKind, CalibrationCurve>,
}

impl Default for CalibrationSet {
    fn default() -> Self {
        CalibrationSet {
            curves: ParameterKind::ALL
                .into_iter()
                .map(|k| (k, CalibrationCurve::default_for(k)))
                .collect(),
        }
    }
}

#[derive(Deserialize)]
struct CalibrationEntry {
    points: [(u16, f64); 2],
}

impl CalibrationSet {
    pub fn curve(&self, kind: ParameterKind) -> &CalibrationCurve {
        &self.curves[&kind]
    }

    pub fn set(&mut self, curve: CalibrationCurve) {
        self.curves.insert(curve.kind, curve);
    }

    /// Parses a calibration file of the form
    ///
    /// ```toml
    /// [ph]
    /// points = [[0, 0.0], [4095, 14.0]]
    /// ```
    ///
    /// Kinds absent from the file keep their default curve.
    pub fn from_toml_str(text: &str) -> Result<Self, SignalError> {
        let entries: BTreeMap<ParameterKind, CalibrationEntry> = toml::from_str(text)?;
        let mut set = CalibrationSet::default();
        for (kind, entry) in entries {
            let [p1, p2] = entry.points;
            set.set(fit_curve(kind, p1, p2)?);
        }
        Ok(set)
    }

    /// Loads `path`, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, SignalError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| SignalError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml_str(&text)
            }
        }
    }
}

/// Calibration plus one smoothing window per parameter, as owned by the poll loop.
#[derive(Debug, Clone)]
pub struct Pipeline {
    calibration: CalibrationSet,
    windows: BTreeMap<ParameterKind, SmoothingWindow>,
}

impl Pipeline {
    pub fn new(calibration: CalibrationSet) -> Self {
        let windows = ParameterKind::ALL
            .into_iter()
            .map(|k| (k, SmoothingWindow::new(k)))
            .collect();
        Pipeline {
            calibration,
            windows,
        }
    }

    pub fn calibration(&self) -> &CalibrationSet {
        &self.calibration
    }

    pub fn window(&self, kind: ParameterKind) -> &SmoothingWindow {
        &self.windows[&kind]
    }

    pub fn process(
        &mut self,
        sample: &RawSample,
        timestamp: Timestamp,
    ) -> Result<ParameterReading, SignalError> {
        let curve = self.calibration.curve(sample.channel);
        let window = self
            .windows
            .get_mut(&sample.channel)
            .expect("one window per kind");
        process(sample, curve, window, timestamp)
    }

    pub fn reset(&mut self) {
        self.windows.values_mut().for_each(SmoothingWindow::clear);
    }
}
