//! Joint optimization of correlated variational states and single-particle
//! orbital rotations for second-quantized fermion Hamiltonians.
//!
//! The crate is `no_std` with `alloc`; file formats and the command-line
//! drivers live in the companion `orbopt` crate.

#![no_std]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod active_space;
pub mod ansatz;
pub mod error;
pub mod estimators;
pub mod fock;
pub mod integrals;
pub mod optimizer;
pub mod oracle;
pub mod rdm;
pub mod rotation;
pub mod sampler;
pub mod vqe;

pub use error::{Error, Result};
