//! Simulation and analysis toolkit for hybrid light-matter blind quantum computation.
//!
//! Module map:
//! - [`statevec`] dense states, density matrices and operators for small registers
//! - [`pauliframe`] byproduct tracking and adaptive angle selection
//! - [`blindgate`] the loss-tolerant delegated rotation as a two-party state machine
//! - [`circuitgen`] circuit families (bricklayer, Pauli rotations, Trotter, brickwork cell)
//! - [`analysis`] fidelity trade-off, blindness checks and frame potentials
//! - [`stabqec`] surface-code and Steane-code blind fault-tolerance engine
//! - [`resmodel`] photon budgets, timing and dark counts
//! - [`netlink`] client and server over a newline-delimited JSON stream

pub mod analysis;
pub mod blindgate;
pub mod circuitgen;
pub mod error;
pub mod netlink;
pub mod pauliframe;
pub mod resmodel;
pub mod rng;
pub mod stabqec;
pub mod statevec;

pub use error::{Error, Result};
