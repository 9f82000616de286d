//! Segregated multi-bump solutions of linearly coupled cubic Schrödinger systems.

pub mod corrections;
pub mod error;
pub mod field;
pub mod interaction;
pub mod io;
pub mod krylov;
pub mod landscape;
pub mod quad;
pub mod radial;

pub use error::{Result, SolverError};
