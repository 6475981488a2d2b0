//! Quantum trajectories of free fermions on a periodic chain under continuous,
//! frustrated two-site density monitoring.
//!
//! The many-body state is a Slater determinant stored as an `L x N` matrix of
//! orthonormal single-particle modes. One time step applies the hopping
//! propagator, then stochastic Kraus updates on even bonds, a
//! re-orthonormalization, odd bonds, and a second re-orthonormalization.
//! Everything observable is read off the correlation matrix
//! `G_ij = <c_i^dag c_j>`.
//!
//! Module map:
//!
//! * [`params`], [`state`]: model parameters, mode matrix, normalization,
//!   correlation matrix.
//! * [`dynamics`]: propagator, noise stream, measurement layers, full steps.
//! * [`observables`]: entropy, charge cumulants, pair correlations, `C(q)`,
//!   particle-number covariance.
//! * [`theory`]: closed-form field-theory predictions.
//! * [`fock`]: exact fixed-particle-number simulation of the same protocol,
//!   used to certify the Gaussian engine on small chains.
//! * [`harness`]: run configuration, ensembles, fits, file output.

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod harness;
pub mod observables;
pub mod params;
pub mod state;
pub mod theory;

pub use error::{Error, Result};
pub use params::ModelParams;
pub use state::{CorrelationMatrix, GaussianState, QrMethod};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
