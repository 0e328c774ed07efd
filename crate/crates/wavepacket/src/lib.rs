//! A numerical laboratory for scalar-particle wave packets: spectral
//! split-operator Schroedinger evolution, central-moment (multipole)
//! analysis, Ehrenfest-based trajectory classification, emergent Newton-like
//! effective dynamics with multipole correction forces, and cross-checks
//! against Wigner phase-space and pilot-wave descriptions.
//!
//! Everything lives on periodic power-of-two grids with `p = 2 pi hbar k/L`
//! momentum lattices; all operators of the momentum are Fourier multipliers
//! and all integrals are uniform Riemann sums.

pub mod error;
pub mod multi_index;

pub mod grid;
pub mod potential;
pub mod states;

pub mod dynamics;
pub mod moments;

pub mod bohm;
pub mod classifier;
pub mod effective;
pub mod mixtures;
pub mod wigner;

pub mod io;

pub use error::{Error, Result};
pub use grid::{FourierMultiplier, Grid, Units, WaveFunction};
pub use multi_index::MultiIndex;
pub use potential::Potential;
