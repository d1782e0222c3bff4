use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use chrono::NaiveTime;
use serde::{Deserialize, Serialize};

use crate::domain::{ParameterKind, RuleSet};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Servo jam injection: after `after_cycles` rotations, each rotation jams
/// with `probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JamConfig {
    pub probability: f64,
    pub after_cycles: u64,
    pub seed: u64,
}

impl Default for JamConfig {
    fn default() -> Self {
        JamConfig {
            probability: 0.0,
            after_cycles: 0,
            seed: 11,
        }
    }
}

/// Controller settings. Every field has a default, so an empty file is valid.
///
/// ```toml
/// cooldown_s = 600
/// poll_period_s = 5
/// feed_schedule = ["08:00", "18:00"]
///
/// [[rules]]
/// kind = "ph"
/// lower = 6.8
/// upper = 8.2
/// action = "alert"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub rules: RuleSet,
    pub cooldown_s: f64,
    pub poll_period_s: f64,
    /// Extra margin a value must move back inside its band before a recovery
    /// note is logged. Zero means the bound itself.
    pub hysteresis: BTreeMap<ParameterKind, f64>,
    /// Daily feed times, `HH:MM` in UTC.
    pub feed_schedule: Vec<String>,
    pub portion_mass_g: f64,
    pub jam: JamConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            rules: RuleSet::default(),
            cooldown_s: 600.0,
            poll_period_s: 5.0,
            hysteresis: BTreeMap::new(),
            feed_schedule: vec!["08:00".into(), "18:00".into()],
            portion_mass_g: 0.5,
            jam: JamConfig::default(),
        }
    }
}

impl ControlConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: ControlConfig = toml::from_str(text)?;
        // rules given in the file override the defaults kind by kind
        cfg.rules = RuleSet::new(
            crate::domain::default_rules()
                .into_iter()
                .chain(cfg.rules.iter().copied()),
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml_str(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.cooldown_s > 0.0) {
            return Err(ConfigError::Invalid("cooldown_s must be > 0".into()));
        }
        if !(self.poll_period_s > 0.0) {
            return Err(ConfigError::Invalid("poll_period_s must be > 0".into()));
        }
        if !(self.portion_mass_g > 0.0) {
            return Err(ConfigError::Invalid("portion_mass_g must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.jam.probability) {
            return Err(ConfigError::Invalid("jam.probability must be in [0, 1]".into()));
        }
        if self.hysteresis.values().any(|h| !(*h >= 0.0)) {
            return Err(ConfigError::Invalid("hysteresis margins must be >= 0".into()));
        }
        self.schedule_times()?;
        Ok(())
    }

    pub fn cooldown(&self) -> Duration {
        Duration::from_secs_f64(self.cooldown_s)
    }

    pub fn poll_period(&self) -> Duration {
        Duration::from_secs_f64(self.poll_period_s)
    }

    pub fn schedule_times(&self) -> Result<Vec<NaiveTime>, ConfigError> {
        let mut times = self
            .feed_schedule
            .iter()
            .map(|s| {
                NaiveTime::parse_from_str(s, "%H:%M")
                    .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
                    .map_err(|_| ConfigError::Invalid(format!("bad feed time {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        times.sort();
        if times.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid("feed schedule times must be distinct".into()));
        }
        Ok(times)
    }
}
