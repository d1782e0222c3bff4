//! Simulated smart-aquarium plant, edge control stack, append-only event log,
//! telemetry service and offline metrics evaluator.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod display;
pub mod domain;
pub mod eventlog;
pub mod metrics;
pub mod plant;
pub mod signal;
pub mod station;
pub mod telemetry;
