//! Stationary free boundary problem for an electrostatically actuated
//! membrane (MEMS), solved on a fixed rectangle by Picard iteration of the
//! membrane map, together with the small-gap reference model and a harness
//! that checks the vanishing aspect ratio limit.
//!
//! Module map:
//!
//! - [`grid`]: uniform grids, difference operators, trapezoid norms, log-log fits.
//! - [`elliptic`]: the transformed potential problem, comparison bounds, energy identity.
//! - [`membrane`]: admissible set, load, the map `S`, the voltage threshold `lambda_0`.
//! - [`fixed_point`]: the coupled solver and the physical-domain reconstruction.
//! - [`small_gap`]: bifurcation curve, branches and pull-in voltage of the small-gap model.
//! - [`asymptotic`]: aspect ratio sweeps and rate fits.
//! - [`config`]: JSON configuration.

pub mod asymptotic;
mod banded;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod fixed_point;
pub mod grid;
pub mod membrane;
pub mod small_gap;

pub use config::{SolverConfig, SweepConfig, Tolerances};
pub use error::{Error, Result};
pub use fixed_point::{solve_coupled, CoupledSolution};
