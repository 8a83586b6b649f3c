//! Simulator for a viscous Cahn–Hilliard type system with a singular
//! logarithmic potential, coupling a nonnegative chemical potential `mu`
//! and a phase variable `rho` in (0, 1) under Neumann boundary conditions.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod experiments;
pub mod grid;
pub mod newton;
pub mod potential;
pub mod simulation;
pub mod stepper;

use thiserror::Error;

pub use config::{parse_config, parse_config_str, ConfigError, Preset, SimConfig};
pub use grid::{Field, Grid, GridError};
pub use potential::PotentialSpec;
pub use stepper::{State, StepError, StepParams, Stepper};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("steady solve failed: {0}")]
    Steady(newton::NewtonError),
    #[error("{0}")]
    Invalid(String),
}
