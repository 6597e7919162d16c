//! Signal detection and estimation from Gabor spectrogram level sets.
//!
//! Hermite modes corrupted by Gaussian white noise are analysed through the
//! level sets of their Gabor transform:
//!
//! - [`hermite`]: closed-form transforms of the modes and a quadrature oracle
//! - [`noise`]: the Gabor transform of white noise as a truncated random series
//! - [`spectrogram`]: fields on a grid over `B_L` and their level sets
//! - [`detector`]: the level-set test, annulus detection and estimators
//! - [`theory`]: thresholds of the detection and estimation guarantees
//! - [`harness`]: Monte Carlo evaluation with the mACC score
//! - [`cli`]: the `spectrolev` command-line front end

// `!(x > 0.0)` checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detector;
pub mod error;
pub mod harness;
pub mod hermite;
pub mod noise;
mod quadrature;
pub mod spectrogram;
pub mod theory;

pub use error::{Error, Result};
pub use hermite::{ModeIndex, PlanePoint};
pub use spectrogram::{Grid, LevelSet, ModeSpec, SpectrogramField};
