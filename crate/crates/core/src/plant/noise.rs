use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PlantState;
use crate::domain::{Monotonic, ParameterKind, RawSample, ADC_MAX};
use crate::signal::CalibrationCurve;

/// Per-kind Gaussian sensor noise (engineering units) plus random dropouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub sigma: BTreeMap<ParameterKind, f64>,
    pub dropout_probability: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        use ParameterKind::*;
        NoiseModel {
            sigma: [
                (WaterTemperature, 0.03),
                (AirTemperature, 0.2),
                (Humidity, 1.0),
                (Ph, 0.05),
                (Tds, 20.0),
                (Turbidity, 1.0),
                (FoodDistance, 0.02),
            ]
            .into_iter()
            .collect(),
            dropout_probability: 0.0,
            seed: 7,
        }
    }
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        NoiseModel {
            sigma: BTreeMap::new(),
            dropout_probability: 0.0,
            seed,
        }
    }

    pub fn sigma(&self, kind: ParameterKind) -> f64 {
        self.sigma.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some((k, s)) = self.sigma.iter().find(|(_, s)| !(**s >= 0.0 && s.is_finite())) {
            return Err(format!("noise sigma for {k} must be >= 0, got {s}"));
        }
        if !(0.0..1.0).contains(&self.dropout_probability) {
            return Err(format!(
                "dropout probability must be in [0, 1), got {}",
                self.dropout_probability
            ));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Simulated sensor read: true value through the inverse calibration, plus
/// noise, quantized to 12-bit counts. `None` models a dropped read.
///
/// Consumes the same number of random draws whatever the outcome, so one
/// dropout does not shift the noise sequence of later reads.
pub fn sample<R: Rng + ?Sized>(
    state: &PlantState,
    kind: ParameterKind,
    noise: &NoiseModel,
    curve: &CalibrationCurve,
    monotonic_time: Monotonic,
    rng: &mut R,
) -> Option<RawSample> {
    let sigma = noise.sigma(kind);
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    let drop_draw: f64 = rng.random();
    if drop_draw < noise.dropout_probability {
        return None;
    }
    let value = state.value(kind) + sigma * z;
    let counts = curve
        .counts_for(value)
        .round()
        .clamp(0.0, f64::from(ADC_MAX)) as u16;
    Some(RawSample::new(kind, counts, monotonic_time))
}
