//! Ground-truth tank model.
//!
//! Each chemistry and temperature field relaxes exponentially toward an
//! ambient target with its own time constant, plus constant forcing from the
//! fish load and any active perturbation. With piecewise-constant forcing the
//! update has a closed form, so `step` is exact for any `dt` and the result
//! does not depend on how an interval is subdivided (up to rounding).

mod noise;
mod scenario;

pub use noise::{sample, NoiseModel};
pub use scenario::{
    parse_duration, run_scenario, FaultEdge, Pacing, Perturbation, PerturbationKind, PlantDriver,
    ScenarioError, ScenarioFrame, ScenarioRun, Script, STANDARD_72H,
};

use serde::{Deserialize, Serialize};

use crate::domain::ParameterKind;

/// Physical state of the simulated tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub water_temp: f64,
    pub air_temp: f64,
    pub humidity: f64,
    pub ph: f64,
    pub tds: f64,
    pub turbidity: f64,
    /// Distance from the sensor to the food surface; 0 = full, 5 = empty.
    pub food_depth: f64,
    pub pump_on: bool,
    pub sim_time: f64,
}

impl PlantState {
    pub fn value(&self, kind: ParameterKind) -> f64 {
        match kind {
            ParameterKind::AirTemperature => self.air_temp,
            ParameterKind::Humidity => self.humidity,
            ParameterKind::WaterTemperature => self.water_temp,
            ParameterKind::Tds => self.tds,
            ParameterKind::Ph => self.ph,
            ParameterKind::Turbidity => self.turbidity,
            ParameterKind::FoodDistance => self.food_depth,
        }
    }

    fn clamp_to_ranges(&mut self) {
        self.water_temp = ParameterKind::WaterTemperature.clamp(self.water_temp);
        self.air_temp = ParameterKind::AirTemperature.clamp(self.air_temp);
        self.humidity = ParameterKind::Humidity.clamp(self.humidity);
        self.ph = ParameterKind::Ph.clamp(self.ph);
        self.tds = ParameterKind::Tds.clamp(self.tds);
        self.turbidity = ParameterKind::Turbidity.clamp(self.turbidity);
        self.food_depth = ParameterKind::FoodDistance.clamp(self.food_depth);
    }
}

/// Tank dynamics. Time constants are in seconds, drifts in units per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub ambient_water_temp: f64,
    pub ambient_air_temp: f64,
    pub ambient_humidity: f64,
    pub ambient_ph: f64,
    pub ambient_tds: f64,
    pub ambient_turbidity: f64,
    pub tau_temp_s: f64,
    pub tau_ph_s: f64,
    pub tds_tau_s: f64,
    pub tau_turbidity_pump_on_s: f64,
    pub tau_turbidity_pump_off_s: f64,
    /// Goldfish load: slow drifts in TDS (+), turbidity (+), and pH (-).
    pub fish_tds_per_h: f64,
    pub fish_turbidity_per_h: f64,
    pub fish_ph_per_h: f64,
    /// pH lift from pump aeration (CO2 stripping) while the pump runs.
    pub aeration_ph_lift: f64,
    pub depth_per_portion_cm: f64,
    pub feed_turbidity_bump: f64,
    pub food_use_cm_per_h: f64,
    pub initial_food_depth: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            ambient_water_temp: 26.0,
            ambient_air_temp: 24.0,
            ambient_humidity: 55.0,
            ambient_ph: 7.55,
            ambient_tds: 220.0,
            ambient_turbidity: 18.5,
            tau_temp_s: 30.0 * 60.0,
            tau_ph_s: 120.0 * 60.0,
            tds_tau_s: 240.0 * 60.0,
            tau_turbidity_pump_on_s: 90.0 * 60.0,
            tau_turbidity_pump_off_s: 300.0 * 60.0,
            fish_tds_per_h: 2.5,
            fish_turbidity_per_h: 1.0,
            fish_ph_per_h: -0.05,
            aeration_ph_lift: 0.05,
            depth_per_portion_cm: 0.05,
            feed_turbidity_bump: 0.5,
            food_use_cm_per_h: 0.01,
            initial_food_depth: 1.0,
        }
    }
}

/// Rate forcing in units per second, summed over fish load and perturbations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Forcing {
    pub water_temp: f64,
    pub ph: f64,
    pub turbidity: f64,
    pub tds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PlantError {
    #[error("feed dispensed from an empty hopper")]
    HopperEmpty,
    #[error("feed requires at least one portion")]
    ZeroPortions,
}

impl PlantConfig {
    fn tau_turbidity(&self, pump_on: bool) -> f64 {
        if pump_on {
            self.tau_turbidity_pump_on_s
        } else {
            self.tau_turbidity_pump_off_s
        }
    }

    fn ph_target(&self, pump_on: bool) -> f64 {
        self.ambient_ph + if pump_on { self.aeration_ph_lift } else { 0.0 }
    }

    /// Fixed point of the unperturbed dynamics.
    pub fn equilibrium(&self, pump_on: bool) -> PlantState {
        let mut s = PlantState {
            water_temp: self.ambient_water_temp,
            air_temp: self.ambient_air_temp,
            humidity: self.ambient_humidity,
            ph: self.ph_target(pump_on) + self.fish_ph_per_h / 3600.0 * self.tau_ph_s,
            tds: self.ambient_tds + self.fish_tds_per_h / 3600.0 * self.tds_tau_s,
            turbidity: self.ambient_turbidity
                + self.fish_turbidity_per_h / 3600.0 * self.tau_turbidity(pump_on),
            food_depth: self.initial_food_depth,
            pump_on,
            sim_time: 0.0,
        };
        s.clamp_to_ranges();
        s
    }

    fn fish_forcing(&self) -> Forcing {
        Forcing {
            water_temp: 0.0,
            ph: self.fish_ph_per_h / 3600.0,
            turbidity: self.fish_turbidity_per_h / 3600.0,
            tds: self.fish_tds_per_h / 3600.0,
        }
    }
}

/// Exact solution of `dx/dt = (target - x)/tau + forcing` after `dt` seconds.
fn relax(x: f64, target: f64, tau: f64, forcing: f64, dt: f64) -> f64 {
    let x_eq = target + forcing * tau;
    x_eq + (x - x_eq) * (-dt / tau).exp()
}

/// Advances the plant by `dt` seconds with `active` perturbations applied for
/// the whole interval.
pub fn step(
    config: &PlantConfig,
    state: &PlantState,
    dt: f64,
    active: &[Perturbation],
) -> PlantState {
    assert!(dt > 0.0, "step needs dt > 0");
    let mut forcing = config.fish_forcing();
    for p in active {
        p.kind.add_forcing(&mut forcing);
    }
    let mut next = *state;
    next.water_temp = relax(state.water_temp, config.ambient_water_temp, config.tau_temp_s, forcing.water_temp, dt);
    next.air_temp = relax(state.air_temp, config.ambient_air_temp, config.tau_temp_s, 0.0, dt);
    next.humidity = relax(state.humidity, config.ambient_humidity, config.tau_temp_s, 0.0, dt);
    next.ph = relax(state.ph, config.ph_target(state.pump_on), config.tau_ph_s, forcing.ph, dt);
    next.tds = relax(state.tds, config.ambient_tds, config.tds_tau_s, forcing.tds, dt);
    next.turbidity = relax(
        state.turbidity,
        config.ambient_turbidity,
        config.tau_turbidity(state.pump_on),
        forcing.turbidity,
        dt,
    );
    next.food_depth = state.food_depth + config.food_use_cm_per_h / 3600.0 * dt;
    next.sim_time = state.sim_time + dt;
    next.clamp_to_ranges();
    next
}

/// Applies one dispense of `portions`: the hopper level drops (distance grows)
/// and uneaten food clouds the water slightly.
pub fn consume_feed(
    config: &PlantConfig,
    state: &PlantState,
    portions: u32,
) -> Result<PlantState, PlantError> {
    if portions == 0 {
        return Err(PlantError::ZeroPortions);
    }
    if state.food_depth >= 5.0 {
        return Err(PlantError::HopperEmpty);
    }
    let mut next = *state;
    next.food_depth = state.food_depth + config.depth_per_portion_cm * f64::from(portions);
    next.turbidity = state.turbidity + config.feed_turbidity_bump * f64::from(portions);
    next.clamp_to_ranges();
    Ok(next)
}
