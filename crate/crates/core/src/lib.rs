//! Gridless direction-of-arrival estimation from a single snapshot for
//! planar arrays of arbitrary geometry.
//!
//! The estimator solves the dual of an atomic-norm denoising problem. The
//! dual function is written as a trigonometric polynomial through a
//! truncated Fourier series of the array manifold, which turns the
//! infinite set of boundedness constraints into a finite semidefinite
//! program. Candidate directions are the unit-circle roots of
//! `1 - |b(z)|^2`; an l1 step over an augmented steering dictionary
//! discards extraneous roots and least squares recovers the amplitudes.

pub mod angle;
pub mod benchmark;
pub mod conic;
pub mod error;
pub mod geometry;
pub mod io;
pub mod manifold;
pub mod pipeline;
pub mod poly;
pub mod prune;
pub mod simulate;

pub use error::{DoaError, Result};
pub use num_complex::Complex64;
