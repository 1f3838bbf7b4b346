//! Resampling engines.
//!
//! Both engines evaluate every target voxel independently and in parallel; the
//! result never depends on how voxels are split across threads.

mod kernel;
mod sfpsf;

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{GridSpec, ScalarImage};
use crate::transform::SpatialTransform;

pub use kernel::{is_inside, sample_index, InterpKernel};
pub use sfpsf::{
    gaussian_weight, resample_sfpsf, sample_lattice, GaussianDensity, LatticePoint, ResampleConfig,
    ResampleStats,
};

/// Kernel interpolation of `source` at `t(v)` for every voxel centre `v` of `target`.
pub fn resample_standard(
    source: &ScalarImage,
    t: &SpatialTransform,
    target: &GridSpec,
    kernel: InterpKernel,
    background: f64,
) -> Result<ScalarImage> {
    t.check_target(target)?;
    let src_grid = source.grid();
    let data: Vec<f64> = (0..target.len())
        .into_par_iter()
        .map(|n| {
            let v = target.voxel_center(target.voxel_coords(n));
            let idx = src_grid.world_to_index(&t.map_point(&v));
            sample_index(source, kernel, &idx).unwrap_or(background)
        })
        .collect();
    ScalarImage::new(target.clone(), data)
}
