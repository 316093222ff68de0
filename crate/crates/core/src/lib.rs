//! Residual-constrained low-rank completion of frequency-sliced seismic
//! volumes.
//!
//! Each monochromatic slice is represented as `X = L R^H` and completed by
//! alternating over the factors; every factor update is a convex
//! residual-constrained problem solved by primal-dual splitting using only
//! products with the sampling operator and the thin factors.

pub mod altmin;
pub mod config;
pub mod dft;
pub mod error;
pub mod io;
pub mod levelset;
pub mod linalg;
pub mod pipeline;
pub mod sampling;
pub mod solver;
pub mod synth;
pub mod transforms;
pub mod volume;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use solver::{DualState, FactorPair, PdConfig};
pub use transforms::{Matricization, MeasurementOp, Mode, SamplingMask};
pub use volume::{Axis, ComplexVolume, SpatialDims, Tensor4};
