//! Finite-dimensional laboratory for multi-time Schrödinger systems.
//!
//! The crate checks the integrability condition for families of partial
//! Hamiltonians, measures path dependence of multi-time propagation, builds
//! Feshbach effective Hamiltonians for direct-sum partitions, quantifies how
//! interactions spoil per-factor evolution in tensor products, and diagnoses
//! non-Hermitian generators. [`runner`] drives all of it from JSON scenarios.
//!
//! Units are `ħ = 1`; times and energies are dimensionless.

pub mod error;
pub mod multitime;
pub mod opalg;
pub mod par;
pub mod partitions;
pub mod runner;
pub mod spectra;
pub mod tensorprod;
pub mod timefield;

pub use error::{Error, Result};
