//! Cone invariance diagnostics and Monte Carlo simulation for semilinear
//! jump-diffusion SPDEs on grids.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: discretized Hilbert spaces (`L²`, weighted `L²`, Filipović);
//! * [`cones`]: closed convex cones, projections, generating systems and
//!   boundary pairs;
//! * [`semigroups`]: concrete semigroups with resolvents and Yosida
//!   approximations;
//! * [`conditions`]: boundary-condition checkers and the overall verdict;
//! * [`simulate`]: exponential Euler and Yosida schemes with cone-exit
//!   statistics;
//! * [`apps`]: the application gallery, configuration and report output.

pub mod apps;
pub mod cones;
pub mod conditions;
pub mod error;
pub mod grid;
mod qp;
pub mod semigroups;
pub mod simulate;

pub use error::{Error, Result};
