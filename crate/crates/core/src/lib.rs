//! Pseudospectral toolkit for the twisted Calabi flow on flat complex tori.
//!
//! The torus is `C^m / (Z^m + iZ^m)` with the flat Kähler form as background.
//! A Kähler potential `phi` deforms the metric as `g = I + hess(phi)` where
//! `hess` is the complex Hessian `d/dz_j d/dzbar_k`, all derivatives taken
//! spectrally on a uniform periodic grid. On top of that sit the twisted
//! curvature quantities, the twisted Lichnerowicz operator, the energy
//! functionals with their variational identities, an exponential time
//! differencing integrator for the flow itself, and matrix-free eigensolvers
//! for the spectral-gap bounds.
//!
//! Grid-local kernels and independent trajectories run data-parallel through
//! rayon when the `parallel` feature (default) is enabled; disabling it gives
//! a sequential build with identical results.

pub mod error;
pub mod exec;
pub mod fft;
pub mod flow;
pub mod functionals;
pub mod grid;
pub mod herm;
pub mod kahler;
pub mod operators;
pub mod sampling;
pub mod spectrum;

pub use error::{Error, Result};
pub use grid::{ComplexField, PeriodicGrid, ScalarField};
