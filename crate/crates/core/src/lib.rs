//! Predator-prey model of government tax-revenue harvesting from formal and
//! informal firms.
//!
//! The crate covers simulation of the three-compartment system, the
//! uniform-boundedness certificate, equilibrium location, local and global
//! stability checks, optimal penalty control by forward-backward sweep and a
//! small pipeline for tax-head/GDP ratio series.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod empirics;
pub mod equilibria;
pub mod error;
pub mod model;
pub mod poly;
pub mod stability;

pub use control::{forward_backward_sweep, AdjointState, ControlSolution};
pub use dynamics::{integrate, integrate_controlled, ControlSchedule, IntegrationOptions, Trajectory};
pub use equilibria::{EquilibriumClass, EquilibriumReport};
pub use error::{Error, Result};
pub use model::{ControlParams, Matrix3, Params, State};
pub use stability::{local_stability, Spectral, StabilityVerdict};
