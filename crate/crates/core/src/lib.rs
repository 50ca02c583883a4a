//! Magnetic (Peierls-phase) perturbations of lattice kernel operators and
//! numerical checks of how their spectral edges move with the field strength.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`] and [`field`] describe magnetic fields and how to integrate
//!   them over triangles.
//! * [`phase`] turns fields into fluxes and Peierls phases.
//! * [`lattice`] holds hopping symbols, general kernels and the assembled
//!   [`lattice::PeierlsMatrix`].
//! * [`spectral`] computes edges and spectra of those matrices.
//! * [`scaling`] sweeps the field strength, fits scaling laws and builds
//!   mid-convexity / modulus-of-continuity certificates.
//! * [`regularization`] is the mollifier harness.
//! * [`config`] and [`io`] are the file formats shared with the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod field;
pub mod io;
pub mod lattice;
pub mod phase;
pub mod quadrature;
pub mod regularization;
pub mod scaling;
pub mod spectral;

pub use error::{Error, Result};

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;
