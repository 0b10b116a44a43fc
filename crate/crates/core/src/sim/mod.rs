//! Time-stepped microsimulation of a one-way corridor of fully actuated
//! signals.

mod config;
mod controller;
mod corridor;
mod detector;

use thiserror::Error;

use crate::series::SeriesError;

pub use config::{ControllerConfig, CorridorConfig, PanelAlignment};
pub use controller::{
    Controller, EndReason, PhaseSpec, PhaseState, PhaseTransition, SignalColor,
};
pub use corridor::{
    run_corridor, simulate_corridor, within_bounds, write_cycle_csv, CycleRecord,
    InvariantReport, SimulationRun,
};
pub use detector::{detector_events, DetectorEvent, DetectorKind, VehicleMove};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid corridor configuration: {0}")]
    InvalidConfig(String),
    #[error("max green {max_green_s} s must exceed min green {min_green_s} s")]
    MaxGreenBelowMin { min_green_s: f64, max_green_s: f64 },
    #[error("simulation horizon contains zero time steps")]
    ZeroSteps,
    #[error("detector event references unknown lane {lane} of phase {phase}")]
    UnknownLane { phase: usize, lane: usize },
    #[error("signal {signal} completed no cycles after warm-up")]
    NoCycles { signal: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}
