//! Thermal out-of-time-ordered correlators on a two-copy transverse-field
//! Ising chain.
//!
//! The crate is organised bottom-up:
//!
//! * [`statevector`]: dense pure-state simulator (gates, expectation values,
//!   sampling).
//! * [`spinchain`]: exact-diagonalization oracle for the TFIM, exact TFD
//!   states and the thermal OTOC evaluated directly from its trace form.
//! * [`tfd`]: variational TFD preparation circuits and their optimizer.
//! * [`noise`]: Monte Carlo Pauli-error trajectories and readout flips.
//! * [`protocol`]: the measurement pipeline (perturb, evolve both copies,
//!   measure the mirrored correlator, postselect on parity) and decay rates.

pub mod error;
pub mod nelder_mead;
pub mod noise;
pub mod protocol;
pub mod rng;
pub mod spinchain;
pub mod statevector;
pub mod tfd;

pub use error::{OtocError, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
