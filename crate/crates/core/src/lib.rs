//! Numerical core for the controlled relativistic Vlasov–Maxwell system in
//! two space and two momentum dimensions.
//!
//! Everything here is `no_std` with `alloc`; file formats, configuration and
//! the command line live in the `vctl` crate.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod control;
pub mod distribution;
pub mod error;
pub mod field;
pub mod forward;
pub mod grid;
pub mod interp;
pub mod kinematics;
pub mod math;
pub mod maxwell;
pub mod optimize;
pub mod sensitivity;
pub mod vlasov;
pub mod wave;

pub use error::{Result, SolverError};
