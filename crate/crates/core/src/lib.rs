//! Weighted conical Radon, Compton, divergent beam and spherical section
//! transforms in two and three dimensions, with range-condition checks and
//! the reconstruction formulas that accompany them.

pub mod error;
pub mod geometry;
pub mod par;
pub mod phantom;
pub mod planar;
pub mod quadrature;
pub mod vector;

pub use error::{Error, Result};
pub mod beam;
pub mod harmonics;
pub mod report;
pub mod linalg;
pub mod spherical;
pub mod cli;
pub mod cone;
pub mod config;
pub mod container;
pub mod corruption;
