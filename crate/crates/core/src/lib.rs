//! Phase-field model of prostate tumor growth with nutrient and PSA
//! coupling: finite-difference discretisation, IMEX time stepping, steady
//! states and trajectory analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod steady;
pub mod stepper;

pub use config::{load_config, Config, ModelParams, RunConfig, TherapySchedule};
pub use error::{Error, Result};
pub use grid::{BcKind, Field, Grid};
pub use stepper::{integrate, step, State};
