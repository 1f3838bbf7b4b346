//! Probabilistic volumes and synthetic blobs.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeReport {
    pub v_hr: f64,
    pub v_resampled: f64,
    pub rvd: f64,
    pub arvd: f64,
}

impl VolumeReport {
    pub fn new(v_hr: f64, v_resampled: f64) -> Self {
        let rvd = (v_resampled - v_hr) / v_hr;
        Self {
            v_hr,
            v_resampled,
            rvd,
            arvd: rvd.abs(),
        }
    }
}

/// Sum of probabilities (clamped to `[0, 1]`, NaN ignored) times voxel volume, in ml.
pub fn probabilistic_volume(img: &ScalarImage) -> f64 {
    let s = img.grid().spacing();
    let total: f64 = img
        .data()
        .iter()
        .filter(|v| !v.is_nan())
        .map(|v| v.clamp(0.0, 1.0))
        .sum();
    total * s[0] * s[1] * s[2] / 1000.0
}

/// Sphere with a linear edge ramp from 1 at `radius - softness` to 0 at `radius + softness`.
pub fn make_blob(
    grid: &GridSpec,
    center: &Vector3<f64>,
    radius: f64,
    softness: f64,
) -> Result<ScalarImage> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "blob radius must be > 0, got {radius}"
        )));
    }
    if !(softness >= 0.0) || !softness.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "blob softness must be >= 0, got {softness}"
        )));
    }
    Ok(ScalarImage::from_fn(grid.clone(), |ijk| {
        let d = (grid.voxel_center(ijk) - center).norm();
        if softness == 0.0 {
            if d <= radius {
                1.0
            } else {
                0.0
            }
        } else {
            ((radius + softness - d) / (2.0 * softness)).clamp(0.0, 1.0)
        }
    }))
}
