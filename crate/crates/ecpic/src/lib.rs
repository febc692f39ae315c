//! Fully implicit, locally charge- and energy-conserving electrostatic
//! particle-in-cell simulation in 1D-3V with orbit averaging.
//!
//! The crate couples a Crank-Nicolson particle push with an Ampere-based
//! implicit field update through Picard iteration, stops particle substeps
//! exactly at mesh faces so that charge deposition telescopes cell by cell,
//! and reconstructs every term of the fully discrete per-cell energy balance
//! (kinetic and field energy rates, transport fluxes, E.j sources, and the
//! residual numerical flux) to round-off accuracy. A separate module checks
//! the corresponding staggered-mesh identities in 2D, including the
//! Coulomb-gauge electromagnetic flux balance, on synthetic fields.
//!
//! Entry points:
//! - [`scenario`] holds run configuration, presets (`mtsi`, `two-stream`),
//!   deterministic particle loading and the run driver;
//! - [`solver::advance_step`] advances one implicit field/particle step;
//! - [`ledger`] assembles the per-cell energy balance from converged steps;
//! - [`identities`] verifies the discrete multi-D and Darwin field algebra.
//!
//! See the crate `examples/` directory for one runnable example per
//! capability.

pub mod bspline;
pub mod grid;
pub mod identities;
pub mod kahan;
pub mod ledger;
pub mod output;
pub mod particles;
pub mod scenario;
pub mod solver;

pub use bspline::ShapeOrder;
pub use grid::{CellField, FaceField, Mesh1D};
pub use particles::{ImposedB, Particle, SubStepRecord};
