//! Scripted perturbations and fault windows, and the driver that advances the
//! plant through them.
//!
//! Script files hold one perturbation per line:
//!
//! ```text
//! # type    start  magnitude  duration
//! heater    6h     0.5        8m
//! vinegar   20h    1.5        2m
//! soil      34h    150        5m
//! refill    60h
//! network   9h     -          26s
//! power     28h    -          27s
//! ```
//!
//! Heater magnitude is °C/min, vinegar is the total pH drop, soil the total
//! turbidity rise in NTU. Times accept `s`, `m`, `h`, `d` suffixes; a bare
//! number is seconds.

use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{step, Forcing, PlantConfig, PlantState};
use crate::domain::FaultKind;

/// The shipped 72 h desk scenario.
pub const STANDARD_72H: &str = include_str!("standard-72h.scenario");

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}: durations, rates and magnitudes must be strictly positive")]
    NonPositive(String),
    #[error("power cycles starting at {first}s and {second}s overlap")]
    ScriptOverlap { first: f64, second: f64 },
    #[error("scenario duration must be positive")]
    BadDuration,
    #[error("speedup must be >= 1, got {0}")]
    BadSpeedup(f64),
    #[error("reading scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerturbationKind {
    Heater { rate_c_per_min: f64, duration_s: f64 },
    Vinegar { ph_drop: f64, over_s: f64 },
    Soil { turbidity_rise: f64, over_s: f64 },
    Refill,
    NetworkOutage { duration_s: f64 },
    PowerCycle { duration_s: f64 },
}

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationKind::Heater { .. } => "heater",
            PerturbationKind::Vinegar { .. } => "vinegar",
            PerturbationKind::Soil { .. } => "soil",
            PerturbationKind::Refill => "refill",
            PerturbationKind::NetworkOutage { .. } => "network",
            PerturbationKind::PowerCycle { .. } => "power",
        }
    }

    pub fn duration_s(&self) -> f64 {
        match *self {
            PerturbationKind::Heater { duration_s, .. } => duration_s,
            PerturbationKind::Vinegar { over_s, .. } | PerturbationKind::Soil { over_s, .. } => over_s,
            PerturbationKind::Refill => 0.0,
            PerturbationKind::NetworkOutage { duration_s } | PerturbationKind::PowerCycle { duration_s } => {
                duration_s
            }
        }
    }

    pub fn is_fault(&self) -> bool {
        matches!(
            self,
            PerturbationKind::NetworkOutage { .. } | PerturbationKind::PowerCycle { .. }
        )
    }

    pub(super) fn add_forcing(&self, f: &mut Forcing) {
        match *self {
            PerturbationKind::Heater { rate_c_per_min, .. } => f.water_temp += rate_c_per_min / 60.0,
            PerturbationKind::Vinegar { ph_drop, over_s } => f.ph -= ph_drop / over_s,
            PerturbationKind::Soil { turbidity_rise, over_s } => f.turbidity += turbidity_rise / over_s,
            _ => {}
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let ok = match *self {
            PerturbationKind::Heater { rate_c_per_min, duration_s } => rate_c_per_min > 0.0 && duration_s > 0.0,
            PerturbationKind::Vinegar { ph_drop, over_s } => ph_drop > 0.0 && over_s > 0.0,
            PerturbationKind::Soil { turbidity_rise, over_s } => turbidity_rise > 0.0 && over_s > 0.0,
            PerturbationKind::Refill => true,
            PerturbationKind::NetworkOutage { duration_s } | PerturbationKind::PowerCycle { duration_s } => {
                duration_s > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::NonPositive(self.name().to_string()))
        }
    }
}

/// One scripted event, active over `[start_s, start_s + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub start_s: f64,
    #[serde(flatten)]
    pub kind: PerturbationKind,
}

impl Perturbation {
    pub fn new(start_s: f64, kind: PerturbationKind) -> Self {
        Perturbation { start_s, kind }
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.kind.duration_s()
    }

    fn start_ms(&self) -> u64 {
        secs_to_ms(self.start_s)
    }

    fn end_ms(&self) -> u64 {
        secs_to_ms(self.end_s())
    }

    fn active_at_ms(&self, t: u64) -> bool {
        t >= self.start_ms() && t < self.end_ms()
    }
}

fn secs_to_ms(s: f64) -> u64 {
    (s * 1000.0).round().max(0.0) as u64
}

/// Parses `90`, `26s`, `8m`, `6h`, `3d` into seconds.
pub fn parse_duration(text: &str) -> Option<f64> {
    let text = text.trim();
    let (num, scale) = match text.char_indices().last()? {
        (i, 's') => (&text[..i], 1.0),
        (i, 'm') => (&text[..i], 60.0),
        (i, 'h') => (&text[..i], 3600.0),
        (i, 'd') => (&text[..i], 86_400.0),
        _ => (text, 1.0),
    };
    let v: f64 = num.parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v * scale)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub entries: Vec<Perturbation>,
}

impl Script {
    pub fn new(mut entries: Vec<Perturbation>) -> Result<Self, ScenarioError> {
        entries.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        let script = Script { entries };
        script.validate()?;
        Ok(script)
    }

    pub fn empty() -> Self {
        Script::default()
    }

    pub fn standard() -> Self {
        Script::parse(STANDARD_72H).expect("shipped scenario parses")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for p in &self.entries {
            if !(p.start_s >= 0.0 && p.start_s.is_finite()) {
                return Err(ScenarioError::NonPositive(format!("{} start", p.kind.name())));
            }
            p.kind.validate()?;
        }
        let mut power: Vec<&Perturbation> = self
            .entries
            .iter()
            .filter(|p| matches!(p.kind, PerturbationKind::PowerCycle { .. }))
            .collect();
        power.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for pair in power.windows(2) {
            if pair[1].start_s < pair[0].end_s() {
                return Err(ScenarioError::ScriptOverlap {
                    first: pair[0].start_s,
                    second: pair[1].start_s,
                });
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError::Parse { line: idx + 1, message };
            let cols: Vec<&str> = line.split_whitespace().collect();
            let start = cols
                .get(1)
                .and_then(|s| parse_duration(s))
                .ok_or_else(|| err("missing or bad start time".into()))?;
            let magnitude = || -> Result<f64, ScenarioError> {
                cols.get(2)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| err(format!("{} needs a numeric magnitude", cols[0])))
            };
            let duration = || -> Result<f64, ScenarioError> {
                cols.get(3)
                    .and_then(|s| parse_duration(s))
                    .ok_or_else(|| err(format!("{} needs a duration", cols[0])))
            };
            let kind = match cols[0] {
                "heater" => PerturbationKind::Heater {
                    rate_c_per_min: magnitude()?,
                    duration_s: duration()?,
                },
                "vinegar" => PerturbationKind::Vinegar {
                    ph_drop: magnitude()?,
                    over_s: duration()?,
                },
                "soil" => PerturbationKind::Soil {
                    turbidity_rise: magnitude()?,
                    over_s: duration()?,
                },
                "refill" => PerturbationKind::Refill,
                "network" | "network_outage" => PerturbationKind::NetworkOutage { duration_s: duration()? },
                "power" | "power_cycle" => PerturbationKind::PowerCycle { duration_s: duration()? },
                other => return Err(err(format!("unknown perturbation type {other:?}"))),
            };
            entries.push(Perturbation::new(start, kind));
        }
        Script::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Script::parse(&text)
    }

    fn chemistry(&self) -> impl Iterator<Item = &Perturbation> {
        self.entries
            .iter()
            .filter(|p| !p.kind.is_fault() && p.kind != PerturbationKind::Refill)
    }

    fn faults(&self) -> impl Iterator<Item = &Perturbation> {
        self.entries.iter().filter(|p| p.kind.is_fault())
    }

    /// Fault transitions in time order as `(ms, fault)`. Overlapping network
    /// outages merge into one down/up pair.
    pub fn fault_edges_ms(&self) -> Vec<(u64, FaultKind)> {
        let mut raw: Vec<(u64, i32, bool)> = Vec::new();
        for p in self.faults() {
            let net = matches!(p.kind, PerturbationKind::NetworkOutage { .. });
            raw.push((p.start_ms(), 1, net));
            raw.push((p.end_ms(), -1, net));
        }
        // ends before starts at the same instant
        raw.sort_by_key(|&(t, d, net)| (t, d, net));
        let (mut net_depth, mut power_depth) = (0i32, 0i32);
        let mut edges = Vec::new();
        for (t, d, net) in raw {
            let depth = if net { &mut net_depth } else { &mut power_depth };
            let before = *depth;
            *depth += d;
            let fault = match (net, before, *depth) {
                (true, 0, 1) => Some(FaultKind::NetworkDown),
                (true, 1, 0) => Some(FaultKind::NetworkUp),
                (false, 0, 1) => Some(FaultKind::PowerLoss),
                (false, 1, 0) => Some(FaultKind::PowerRestore),
                _ => None,
            };
            edges.extend(fault.map(|f| (t, f)));
        }
        edges
    }
}

/// Advances a plant through a script, splitting steps at perturbation
/// boundaries so forcing is piecewise constant within each step.
#[derive(Debug, Clone)]
pub struct PlantDriver {
    config: PlantConfig,
    state: PlantState,
    script: Script,
    now_ms: u64,
    refills_done: usize,
}

impl PlantDriver {
    pub fn new(config: PlantConfig, script: Script) -> Self {
        let state = config.equilibrium(true);
        Self::with_state(config, script, state)
    }

    pub fn with_state(config: PlantConfig, script: Script, state: PlantState) -> Self {
        let mut d = PlantDriver {
            now_ms: secs_to_ms(state.sim_time),
            config,
            state,
            script,
            refills_done: 0,
        };
        d.apply_refills();
        d
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut PlantState {
        &mut self.state
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    fn refills(&self) -> impl Iterator<Item = &Perturbation> {
        self.script.entries.iter().filter(|p| p.kind == PerturbationKind::Refill)
    }

    fn apply_refills(&mut self) {
        let due = self.refills().filter(|p| p.start_ms() <= self.now_ms).count();
        if due > self.refills_done {
            self.state.food_depth = 0.0;
            self.refills_done = due;
        }
    }

    fn next_boundary(&self, after: u64, limit: u64) -> u64 {
        self.script
            .chemistry()
            .flat_map(|p| [p.start_ms(), p.end_ms()])
            .chain(self.refills().map(|p| p.start_ms()))
            .filter(|&b| b > after && b < limit)
            .min()
            .unwrap_or(limit)
    }

    pub fn advance_to(&mut self, target_ms: u64) {
        while self.now_ms < target_ms {
            let next = self.next_boundary(self.now_ms, target_ms);
            let active: Vec<Perturbation> = self
                .script
                .chemistry()
                .filter(|p| p.active_at_ms(self.now_ms))
                .copied()
                .collect();
            let dt = (next - self.now_ms) as f64 / 1000.0;
            self.state = step(&self.config, &self.state, dt, &active);
            self.now_ms = next;
            self.state.sim_time = next as f64 / 1000.0;
            self.apply_refills();
        }
    }
}

/// Wall-clock pacing for scenario replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// As fast as the host allows; logical time only.
    Unpaced,
    /// Simulated seconds per wall second (>= 1).
    Speedup(f64),
}

impl Pacing {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        match *self {
            Pacing::Speedup(s) if !(s >= 1.0 && s.is_finite()) => Err(ScenarioError::BadSpeedup(s)),
            _ => Ok(()),
        }
    }

    /// Blocks until the wall clock catches up with simulated `sim_ms`.
    pub fn wait_until(&self, wall_start: Instant, sim_ms: u64) {
        if let Pacing::Speedup(s) = *self {
            let due = wall_start + Duration::from_secs_f64(sim_ms as f64 / 1000.0 / s);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEdge {
    pub at_s: f64,
    pub fault: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFrame {
    pub sim_time: f64,
    pub state: PlantState,
    pub network_down: bool,
    pub power_off: bool,
    /// Fault transitions that happen exactly at this frame.
    pub faults: Vec<FaultEdge>,
}

/// Iterator over plant frames at a fixed step, plus extra frames at every
/// fault transition.
pub struct ScenarioRun {
    driver: PlantDriver,
    times: std::vec::IntoIter<u64>,
    edges: Vec<(u64, FaultKind)>,
    pacing: Pacing,
    wall_start: Option<Instant>,
    network_down: bool,
    power_off: bool,
}

impl Iterator for ScenarioRun {
    type Item = ScenarioFrame;

    fn next(&mut self) -> Option<ScenarioFrame> {
        let t = self.times.next()?;
        let wall_start = *self.wall_start.get_or_insert_with(Instant::now);
        self.driver.advance_to(t);
        let mut faults = Vec::new();
        for &(_, fault) in self.edges.iter().filter(|(at, _)| *at == t) {
            match fault {
                FaultKind::NetworkDown => self.network_down = true,
                FaultKind::NetworkUp => self.network_down = false,
                FaultKind::PowerLoss => self.power_off = true,
                FaultKind::PowerRestore => self.power_off = false,
            }
            faults.push(FaultEdge {
                at_s: t as f64 / 1000.0,
                fault,
            });
        }
        self.pacing.wait_until(wall_start, t);
        Some(ScenarioFrame {
            sim_time: t as f64 / 1000.0,
            state: *self.driver.state(),
            network_down: self.network_down,
            power_off: self.power_off,
            faults,
        })
    }
}

/// Replays `script` for `duration_s` simulated seconds, emitting a frame every
/// `frame_step_s` and at each fault transition.
pub fn run_scenario(
    config: PlantConfig,
    script: Script,
    duration_s: f64,
    pacing: Pacing,
    frame_step_s: f64,
) -> Result<ScenarioRun, ScenarioError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) || !(frame_step_s > 0.0) {
        return Err(ScenarioError::BadDuration);
    }
    pacing.validate()?;
    script.validate()?;
    let end = secs_to_ms(duration_s);
    let step = secs_to_ms(frame_step_s).max(1);
    let edges: Vec<(u64, FaultKind)> = script
        .fault_edges_ms()
        .into_iter()
        .filter(|(t, _)| *t <= end)
        .collect();
    let mut times: Vec<u64> = (0..=end / step).map(|k| k * step).collect();
    times.extend(edges.iter().map(|(t, _)| *t));
    times.push(end);
    times.sort_unstable();
    times.dedup();
    Ok(ScenarioRun {
        driver: PlantDriver::new(config, script),
        times: times.into_iter(),
        edges,
        pacing,
        wall_start: None,
        network_down: false,
        power_off: false,
    })
}
