//! MIMO detection by sphere decoding, with a Gaussian RBF network that
//! predicts the minimum path metric of every top-layer sub-tree.
//!
//! The crate is split by stage:
//!
//! - [`numerics`]: complex dense linear algebra, Householder QR, Gaussian
//!   sampling, the chi-square quantile and the operation counter.
//! - [`channel`]: constellations, the `y = Hx + v` model, SNR bookkeeping and
//!   the zero-forcing fallback.
//! - [`search`]: Schnorr-Euchner depth-first search, the exhaustive ML oracle
//!   and sub-tree minimum metrics.
//! - [`predictor`]: reduced feature vector, RBF network, SCG training,
//!   datasets and model files.
//! - [`dpp`]: the prediction-aided detector (learned initial radius, sub-tree
//!   ordering and early termination) and the conventional baseline.

pub mod channel;
pub mod dpp;
mod error;
pub mod numerics;
pub mod predictor;
pub mod search;

pub use error::{Error, Result};
pub use num_complex::Complex64;
