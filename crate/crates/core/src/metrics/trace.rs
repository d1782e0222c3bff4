//! Ground-truth plant trace written alongside a run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::domain::{FaultKind, ParameterKind, Timestamp};
use crate::plant::PlantState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub timestamp: Timestamp,
    pub state: PlantState,
}

/// One line of a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEntry {
    Sample { timestamp: Timestamp, state: PlantState },
    Fault { timestamp: Timestamp, fault: FaultKind },
}

/// True plant states in time order, plus the injected fault edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthTrace {
    samples: Vec<TraceSample>,
    faults: Vec<(Timestamp, FaultKind)>,
}

impl GroundTruthTrace {
    pub fn new(samples: Vec<TraceSample>, faults: Vec<(Timestamp, FaultKind)>) -> Result<Self, MetricsError> {
        if let Some(w) = samples.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(MetricsError::TraceOrder(w[1].timestamp));
        }
        Ok(GroundTruthTrace { samples, faults })
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn faults(&self) -> &[(Timestamp, FaultKind)] {
        &self.faults
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Linear interpolation of the true value at `at`; `None` outside the
    /// trace.
    pub fn value_at(&self, kind: ParameterKind, at: Timestamp) -> Option<f64> {
        let i = self.samples.partition_point(|s| s.timestamp < at);
        let hi = self.samples.get(i)?;
        if hi.timestamp == at {
            return Some(hi.state.value(kind));
        }
        let lo = self.samples.get(i.checked_sub(1)?)?;
        let span = hi.timestamp.millis_since(lo.timestamp) as f64;
        let frac = at.millis_since(lo.timestamp) as f64 / span;
        let (a, b) = (lo.state.value(kind), hi.state.value(kind));
        Some(a + (b - a) * frac)
    }

    /// Shifts every timestamp by `ms`.
    pub fn translated(&self, ms: i64) -> Self {
        let shift = |t: Timestamp| Timestamp::from_millis(t.as_millis() + ms);
        GroundTruthTrace {
            samples: self
                .samples
                .iter()
                .map(|s| TraceSample { timestamp: shift(s.timestamp), state: s.state })
                .collect(),
            faults: self.faults.iter().map(|(t, f)| (shift(*t), *f)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let file = File::open(path).map_err(|e| MetricsError::Io(path.display().to_string(), e))?;
        let mut samples = Vec::new();
        let mut faults = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| MetricsError::Io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TraceEntry = serde_json::from_str(&line).map_err(|e| MetricsError::TraceParse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match entry {
                TraceEntry::Sample { timestamp, state } => samples.push(TraceSample { timestamp, state }),
                TraceEntry::Fault { timestamp, fault } => faults.push((timestamp, fault)),
            }
        }
        Self::new(samples, faults)
    }

    pub fn save(&self, path: &Path) -> Result<(), MetricsError> {
        let mut w = TraceWriter::create(path)?;
        for s in &self.samples {
            w.sample(s.timestamp, &s.state)?;
        }
        for (t, f) in &self.faults {
            w.fault(*t, *f)?;
        }
        w.finish()
    }
}

/// Streams a trace to disk while a run progresses.
#[derive(Debug)]
pub struct TraceWriter {
    out: BufWriter<File>,
    path: String,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, MetricsError> {
        let file = File::create(path).map_err(|e| MetricsError::Io(path.display().to_string(), e))?;
        Ok(TraceWriter {
            out: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    fn write(&mut self, entry: &TraceEntry) -> Result<(), MetricsError> {
        let line = serde_json::to_string(entry).expect("trace entries always serialize");
        writeln!(self.out, "{line}").map_err(|e| MetricsError::Io(self.path.clone(), e))
    }

    pub fn sample(&mut self, timestamp: Timestamp, state: &PlantState) -> Result<(), MetricsError> {
        self.write(&TraceEntry::Sample { timestamp, state: *state })
    }

    pub fn fault(&mut self, timestamp: Timestamp, fault: FaultKind) -> Result<(), MetricsError> {
        self.write(&TraceEntry::Fault { timestamp, fault })
    }

    pub fn finish(mut self) -> Result<(), MetricsError> {
        self.out.flush().map_err(|e| MetricsError::Io(self.path.clone(), e))
    }
}
