//! Toolkit for wavelet-based ultra-high-resolution segmentation.
//!
//! - [`wavelet`]: orthonormal Haar DWT/IWT, Mallat and wavelet-packet forms.
//! - [`pyramid`]: Gaussian reduction and Laplacian residuals.
//! - [`loss`]: wavelet smooth loss, cross-entropy and the combined objective.
//! - [`toynet`]: a small two-branch network with manual backpropagation.
//! - [`richness`]: scene context richness of label maps.
//! - [`tiler`]: overlapping tile plans and merges.
//! - [`metrics`]: confusion matrix, mIoU, F1 and accuracy.
//! - [`cli`]: the `uhrseg` command line.

pub mod cli;
pub mod error;
pub mod io;
pub mod labels;
pub mod loss;
pub mod metrics;
pub mod plane;
pub mod pyramid;
pub mod richness;
pub mod rng;
pub mod tiler;
pub mod toynet;
pub mod wavelet;

pub use error::{Error, RawFormatError, Result};
pub use labels::{LabelMap, IGNORE};
pub use plane::{Plane, Real, Tensor};
pub use rng::SeededRng;
