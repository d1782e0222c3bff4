//! Telemetry HTTP service and operator CLI for the simulated aquarium.

pub mod api;
pub mod cli;
