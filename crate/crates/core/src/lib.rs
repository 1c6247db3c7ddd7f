//! Stochastic recursive optimal control by a modified method of successive
//! approximations, for problems whose state is a decoupled forward-backward
//! SDE and whose cost is the initial value of the backward component.
//!
//! The crate is `no_std` with `alloc`. File formats, timing and the command
//! line live in the companion `msa` crate.

#![no_std]

extern crate alloc;

pub mod adjoint;
pub mod benchmarks;
pub mod bsde;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod model;
pub mod msa;
pub mod stats;
pub mod stochastics;

pub use error::{Error, Result};
pub use model::{ControlDomain, Dims, Problem};
pub use msa::{
    run_msa, run_msa_on, Clock, InitialControl, IterationRecord, MsaConfig, MsaResult, NoClock,
};
pub use stats::Estimate;
