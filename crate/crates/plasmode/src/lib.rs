//! Plasmonic quasi-normal modes of a 2D Drude nanoparticle by boundary integrals.
//!
//! The pipeline runs geometry -> kernels -> spectral -> resonance -> timedomain;
//! [`cli`] wires it to JSON scenario files.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod resonance;
pub mod specfun;
pub mod spectral;
pub mod timedomain;

pub use error::{Error, Result};
pub use num_complex::Complex64;
