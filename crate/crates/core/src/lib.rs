//! Dirichlet forms and harmonic functions on post-critically finite
//! self-similar sets, with numerical checks of oscillation, current and
//! regularity estimates.
//!
//! Modules follow the data flow: [`structure`] defines the fractal,
//! [`graph`] builds the level-m networks, [`forms`] computes energies and
//! harmonic functions, [`verify`] scans the one-cell estimates and
//! [`regularity`] probes balls on cable systems and bounded copies.

pub mod cli;
pub mod error;
pub mod forms;
pub mod graph;
pub mod io;
pub mod rational;
pub mod regularity;
pub mod sampling;
pub mod sparse;
pub mod structure;
pub mod verify;

pub use error::{Error, Result};
