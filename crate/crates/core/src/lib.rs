//! Simulation core for DNA-origami-patterned Gd³⁺ spin arrays read out by
//! shallow NV centers.
//!
//! The crate is organized around the physical pipeline:
//!
//! * [`physics`]: the NV–spin relaxation kernel and its planar integrals.
//! * [`origami`]: breadboard geometry, label patterns, surface deposition.
//! * [`relaxometry`]: Monte Carlo NV ensembles, density sweeps, τ_c fitting.
//! * [`decay`]: stretched-exponential decay synthesis and fitting.
//! * [`dtwa`]: discrete truncated Wigner dynamics and spin squeezing.
//! * [`assay`]: shot-noise-limited detection-time model.
//!
//! Lengths are in nanometres, times in seconds and rates in 1/s unless a
//! name says otherwise.

pub mod assay;
pub mod constants;
pub mod decay;
pub mod dtwa;
pub mod error;
mod minimize;
pub mod origami;
pub mod physics;
pub mod quadrature;
pub mod relaxometry;
pub mod rng;
pub mod stats;

pub use constants::PhysicalConstants;
pub use error::{Result, SimError};
