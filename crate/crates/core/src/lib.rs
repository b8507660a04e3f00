//! Simulation and analysis of qutrit-qutrit orbital-angular-momentum
//! entanglement between a photon and a collective atomic excitation.
//!
//! The crate is organised around the experimental pipeline:
//!
//! - [`qutrit`]: kets, density matrices and the fixed two-qutrit basis.
//! - [`measurement`]: the 81 product projectors used for tomography.
//! - [`sim`]: forward model from a planted state to coincidence counts,
//!   plus the Stokes/anti-Stokes cross-correlation model.
//! - [`tomography`]: linear inversion, maximum-likelihood reconstruction and
//!   Monte-Carlo error propagation.
//! - [`entanglement`]: fidelity to the maximally entangled family and the
//!   Schmidt-number-3 witness.
//! - [`optics`]: Laguerre-Gaussian fields, SLM phase masks and fiber-mode
//!   overlap integrals.
//!
//! Basis ordering is fixed everywhere: photon index major, atom index minor,
//! with photon basis `(|L>, |G>, |R>)` and atom basis `(|l>, |g>, |r>)`. The
//! two-qutrit index of `(photon a, atom b)` is `3 * a + b`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entanglement;
pub mod error;
pub mod measurement;
pub mod optics;
pub mod qutrit;
pub mod random;
pub mod sim;
pub mod tomography;

pub use error::{Error, Result};
pub use nalgebra::Complex;

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
