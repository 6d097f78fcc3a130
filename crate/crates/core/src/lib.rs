//! Irregular tensor low-rank representation for hyperspectral cubes.
//!
//! A cube is split into superpixel regions; each region's bounding box is
//! completed with persistent complement cells, and the resulting blocks are
//! decomposed into low-rank and sparse parts under a Schatten-p tensor norm
//! computed in the mode-3 Fourier domain. A negative global nuclear-norm
//! term keeps the per-region low-rank step from flattening minority
//! materials.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod regions;
pub mod segmentation;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use regions::LabelMap;
pub use solver::{solve, Decomposition, SolverConfig};
pub use tensor::{Cube, SpectrumStack};
