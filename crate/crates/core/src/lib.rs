//! Ergodic coverage planning over surfaces given as triangle meshes.

pub mod analytic;
pub mod cli;
pub mod ergodic;
pub mod error;
pub mod geom;
pub mod laplace;
pub mod mesh;
pub mod optim;
pub mod sdf;
pub mod spectral;

pub use error::{Error, ErrorKind, Result};
