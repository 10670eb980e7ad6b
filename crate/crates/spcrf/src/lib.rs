//! Dense pairwise CRF inference for pixel labeling, with superpixel-
//! conditioned pairwise terms.
//!
//! The model is a fully connected CRF whose Gibbs energy combines unary
//! potentials, the classic two-kernel contrast-sensitive pairwise
//! potential, and additional pairwise terms evaluated on segment-filtered
//! images (every pixel replaced by its superpixel's mean color). The extra
//! terms carry region-level cues at pairwise cost and reuse the pairwise
//! parameters, adding only a spatial bandwidth and a weight ratio.
//!
//! Modules:
//! - [`imaging`]: rasters, label maps, unary fields, segment maps, and
//!   their on-disk formats.
//! - [`superpixel`]: SLIC-style segmentation and segment-filtered images.
//! - [`potentials`]: kernels, compatibility, Gibbs energy, and the robust
//!   higher-order closed form.
//! - [`meanfield`]: mean-field inference with an exact quadratic backend
//!   and a fast filtering backend.
//! - [`oracle`]: exhaustive-enumeration inference for tiny instances.
//! - [`metrics`]: confusion-matrix evaluation (Global / Average / MeanIOU).
//! - [`tuner`]: grid search over the superpixel hyperparameters.
//! - [`synth`]: seeded synthetic instances for tests and benchmarks.

pub mod error;
pub mod imaging;
pub mod meanfield;
pub mod metrics;
pub mod oracle;
mod parallel;
pub mod potentials;
pub mod superpixel;
pub mod synth;
pub mod tuner;

mod guide;

pub use error::{Error, Result};
