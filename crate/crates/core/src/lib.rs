//! Simulator for a five-oscillator coupled cavity-QED network: two atomic
//! ensembles in two fiber cavities linked by a third fiber resonator.
//!
//! The crate derives physical rates from network geometry, computes the
//! normal-mode structure (including the atom-mediated cavity dark mode),
//! sweeps linear transmission spectra between the outer ports, solves the
//! nonlinear saturation response of the dark mode, and cross-checks the
//! linearized model against a truncated-Fock-space master equation.

pub mod cli;
pub mod config;
pub mod error;
pub mod modes;
pub mod oracle;
pub mod rates;
pub mod response;
pub mod saturation;

pub use error::{Error, Result};
