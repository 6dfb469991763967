//! Simulation kernel for the dissipative nonlinear Schrödinger equation
//! `d_t u = i Lap u + lambda |u|^alpha u` (`Re lambda <= 0`) and for its
//! pseudo-conformally rescaled companion, together with the weighted
//! seminorm monitors and amplitude-profile diagnostics used to verify the
//! predicted decay structure.

pub mod error;
pub mod grid;
pub mod integrator;
pub mod params;
pub mod profile;
pub mod seminorm;
pub mod spectral;
pub mod transform;

pub use error::{CoreError, Result};
pub use integrator::{Carry, Equation, Snapshot, StepPlan, Trajectory};
pub use grid::{C64, Field, Grid};
pub use profile::{FitResult, ProfileSet, fit_loglog};
pub use transform::{TransformPair, equivalence_test, u_to_v, v_to_u};
pub use params::{
    IndexSet, ModelParams, PropagationConstants, SigmaSchedule, ThresholdConfig,
    closed_form_sigma_top, sigma_schedule, thresholds, validate_indices,
};
