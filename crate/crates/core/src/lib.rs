//! Simulation and feedback control of the bilinear Schrödinger equation
//!
//! ```text
//! i ż = −z'' + V(x) z + u(t) Q(x) z,   z(0) = z(L) = 0
//! ```
//!
//! on an interval, truncated to the lowest `M` eigenmodes of `−d²/dx² + V`.
//! The crate is `no_std` (it needs `alloc`); file formats, the experiment
//! runner and the command line live in the `schro` crate.
//!
//! Levels (eigenmode numbers) are 1-based throughout the public API, matching
//! the usual physics labelling `e_1, e_2, …`; slices are 0-based as always.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod conditions;
pub mod controllability;
mod error;
pub mod linalg;
pub mod lyapunov;
pub mod nonlinear;
pub mod potential;
pub mod propagator;
pub mod seed;
pub mod spectral;
pub mod stochastic;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use potential::Potential;
pub use propagator::{ControlSignal, PropagatorTables};
pub use spectral::{Grid, PotentialPair, QuantumState, SpectralBasis};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
