//! Desk-scale simulation of quantum metasurfaces: sub-wavelength atom arrays
//! whose reflectivity is conditioned on an ancilla.
//!
//! Units throughout: lengths in λ, rates and detunings in γ (the single-atom
//! linewidth), transverse wavevectors in k₀ = 2π/λ.

pub mod coupled_dipole;
pub mod defects_mc;
pub mod eit;
pub mod error;
pub mod geometry;
pub mod green;
pub mod linalg;
pub mod mode_selective;
pub mod photonic;
pub mod protocols;
mod quad;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Free-space wavenumber in units of 1/λ.
pub const K0: f64 = std::f64::consts::TAU;
