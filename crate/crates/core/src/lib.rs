//! Anti-aliased image resampling with scale factor point spread functions.
//!
//! Every image carries a Gaussian PSF. Resampling onto a new grid through a
//! spatial transform smooths the source just enough that its PSF, seen from the
//! target, matches the target's PSF. Where no smoothing is needed the result is
//! ordinary kernel interpolation.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod io;
pub mod matrix;
pub mod psf;
pub mod resample;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarImage, VectorImage};
pub use matrix::Covariance3;
pub use psf::{MatchingStrategy, SfPsf};
pub use resample::{
    resample_sfpsf, resample_standard, InterpKernel, ResampleConfig, ResampleStats,
};
pub use transform::{AffineTransform, DisplacementField, SpatialTransform};
