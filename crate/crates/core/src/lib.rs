//! Computational tools for polynomial generic submanifolds `y = h(x, w)` of
//! `C^N` at the origin: bracket filtrations and Hörmander numbers, analytic
//! discs attached through Bishop's equation, sector tests for extension of
//! CR functions, and comparison of the resulting direction cones.

#![allow(clippy::needless_range_loop)]

pub mod bishop;
pub mod cones;
pub mod hormander;
pub mod linalg;
pub mod manifold;
pub mod polyalg;
pub mod sector;

pub use num_complex::Complex64;
