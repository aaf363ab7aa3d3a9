//! Experiment runner, configuration, and file output for the chve solver.
//!
//! The numerical kernels live in `chve-core`; this crate adds everything
//! that needs the standard library: run configuration and presets, seeded
//! initial data, the time loop, CSV time series, and VTK snapshots.

pub mod config;
pub mod csv;
pub mod error;
pub mod init;
pub mod runner;
pub mod vtk;

pub use config::{preset, InitialDeformation, InitialPhase, RunConfig, Scheme};
pub use error::CliError;
pub use runner::{run, RunOutcome};
