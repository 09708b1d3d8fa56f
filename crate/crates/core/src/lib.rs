//! Compressed-sensing reconstruction of 3D MR volumes from undersampled
//! non-Cartesian k-space.
//!
//! The pipeline: a radial phase-encoding (RPE) sampling simulator
//! ([`sampling`]), a coil-sensitivity + gridding encoding operator
//! ([`encoding`]), sparsifying transforms (band-limited shearlets, an
//! orthogonal wavelet, finite differences; [`transforms`]), a
//! multilevel-reweighted l1 ADMM solver with CG inner iterations
//! ([`solver`]), a phantom/coil/noise simulator ([`simulation`]) and an
//! image-quality metrics suite ([`metrics`]).

pub mod encoding;
pub mod error;
pub mod fft;
pub mod io;
pub mod metrics;
pub(crate) mod par;
pub mod sampling;
pub mod simulation;
pub mod solver;
pub mod transforms;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{inner_product, ComplexVolume, Grid3};
