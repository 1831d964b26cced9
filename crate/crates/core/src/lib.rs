//! Simulation and compilation of linear optical networks built from
//! multimode Raman gradient-echo memories.

pub mod analytic;
pub mod compiler;
pub mod error;
pub mod fock;
#[cfg(doctest)]
pub mod guide;
pub mod modes;
pub mod pde;
pub mod regime;
pub mod scenario;
pub mod unitary;
pub mod units;

pub use error::{Error, Result};
