//! Experiment harness for the dissipative NLS laboratory.
//!
//! The core crate knows nothing about files, configuration, or randomness;
//! this crate supplies all three and stays deliberately thin on numerics:
//!
//! * [`config`] — TOML experiment descriptions, dotted-path overrides, and a
//!   content hash that identifies a configuration independently of field
//!   order in the input file;
//! * [`initial`] — the initial-data families (power decay, seeded
//!   perturbations of it, Gaussians) and their a-priori size report;
//! * [`oracle`] — an adaptive Runge–Kutta integrator for the scalar
//!   amplitude ODE, used only as an independent cross-check of closed forms;
//! * [`checkpoint`] — a small fixed binary format for exact-state save and
//!   resume;
//! * [`record`] — row files (CSV), summary files, and the run-record type
//!   returned to callers;
//! * [`runner`] — the orchestration: resolve a config, build data, run,
//!   write artifacts, evaluate named checks;
//! * [`acceptance`] — the self-contained verification suite the `dnls check`
//!   subcommand and the integration tests share.

pub mod acceptance;
pub mod checkpoint;
pub mod config;
pub mod initial;
pub mod oracle;
pub mod record;
pub mod runner;

use thiserror::Error;

/// Everything that can go wrong on the harness side. Core numerics errors
/// are wrapped, not flattened, so callers can still distinguish a bad
/// configuration from a run that died mid-flight.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("initial data: {0}")]
    InitialData(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] dnls_core::CoreError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
