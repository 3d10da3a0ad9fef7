//! Variational Monte Carlo with autoregressive neural quantum states.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`] dense tensors, a small reverse-mode tape, Adam and schedules
//! * [`hamiltonian`] FCIDUMP ingestion, Jordan-Wigner mapping and the
//!   flip-mask grouped qubit Hamiltonian
//! * [`ansatz`] RetNet, transformer and MADE modulus networks with a
//!   feedforward phase network
//! * [`sampler`] exact breadth-first autoregressive sampling
//! * [`vmc`] local energies, estimators, annealed gradients and the training loop
//! * [`oracle`] exact diagonalisation and enumeration used for verification
//! * [`flops`] the leading-order parameter and FLOP cost model

pub mod ansatz;
pub mod basis;
pub mod error;
pub mod flops;
pub mod hamiltonian;
pub mod nn;
pub mod oracle;
pub mod par;
pub mod sampler;
pub mod vmc;

pub use basis::{Sector, SpinConfig};
pub use error::{NqsError, Result};
