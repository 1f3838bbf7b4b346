//! Aliasing phantom: a low-frequency square on a Nyquist-rate pattern.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarImage};
use crate::resample::{sample_index, InterpKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pattern {
    /// Columns alternating along x.
    #[default]
    Stripes,
    Checkerboard,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "stripes" => Ok(Self::Stripes),
            "checkerboard" => Ok(Self::Checkerboard),
            other => Err(format!(
                "unknown pattern '{other}' (expected stripes or checkerboard)"
            )),
        }
    }
}

/// `n x n` planar phantom at `spacing` mm with origin 0.
///
/// The pattern is 1 on the first half of every period. The square covers voxels
/// with `|i - c| < square_halfwidth` and `|j - c| < square_halfwidth` around the
/// centre `c`, so a half-width of 0 leaves the pure pattern.
pub fn make_phantom(
    n: usize,
    spacing: f64,
    square_halfwidth: usize,
    period: usize,
) -> Result<ScalarImage> {
    make_phantom_with(n, spacing, square_halfwidth, period, Pattern::Stripes)
}

pub fn make_phantom_with(
    n: usize,
    spacing: f64,
    square_halfwidth: usize,
    period: usize,
    pattern: Pattern,
) -> Result<ScalarImage> {
    if n % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "phantom size must be odd, got {n}"
        )));
    }
    if period < 2 {
        return Err(Error::InvalidConfig(format!(
            "pattern period must be >= 2, got {period}"
        )));
    }
    let grid = GridSpec::planar([n, n], [spacing; 2], [0.0; 2])?;
    let c = (n / 2) as i64;
    let hw = square_halfwidth as i64;
    let on = |x: usize| (x % period) * 2 < period;
    Ok(ScalarImage::from_fn(grid, |[i, j, _]| {
        let in_square = (i as i64 - c).abs() < hw && (j as i64 - c).abs() < hw;
        let background = match pattern {
            Pattern::Stripes => on(i),
            Pattern::Checkerboard => on(i) == on(j),
        };
        if in_square || background {
            1.0
        } else {
            0.0
        }
    }))
}

/// Lines every `factor` voxels, marking the coarse lattice on the fine grid.
pub fn grid_overlay(fine: &GridSpec, factor: usize) -> ScalarImage {
    ScalarImage::from_fn(fine.clone(), |[i, j, _]| {
        if i % factor == 0 || j % factor == 0 {
            1.0
        } else {
            0.0
        }
    })
}

/// Separable Gaussian blur with standard deviations `sigma_mm` (zero outside the
/// image) followed by linear sampling at the centres of `target`. The source and
/// target must share world axes.
pub fn blur_then_sample(
    source: &ScalarImage,
    target: &GridSpec,
    sigma_mm: [f64; 3],
) -> Result<ScalarImage> {
    let grid = source.grid();
    let dims = grid.dims();
    let spacing = grid.spacing();
    let mut data = source.data().to_vec();
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let sigma = sigma_mm[axis] / spacing[axis];
        if sigma < 1e-6 || dims[axis] < 2 {
            continue;
        }
        let radius = (5.0 * sigma).ceil() as i64;
        let taps: Vec<f64> = (-radius..=radius)
            .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
            .collect();
        let z: f64 = taps.iter().sum();
        let src = data.clone();
        for (n, out) in data.iter_mut().enumerate() {
            let pos = ((n / strides[axis]) % dims[axis]) as i64;
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                let q = pos + t as i64 - radius;
                if q >= 0 && q < dims[axis] as i64 {
                    acc += w * src[(n as i64 + (q - pos) * strides[axis] as i64) as usize];
                }
            }
            *out = acc / z;
        }
    }
    let blurred = ScalarImage::new(grid.clone(), data)?;
    Ok(ScalarImage::from_fn(target.clone(), |ijk| {
        let idx = grid.world_to_index(&target.voxel_center(ijk));
        sample_index(&blurred, InterpKernel::Linear, &idx).unwrap_or(0.0)
    }))
}

/// Root-mean-square difference over voxels finite in both images.
pub fn rmse(a: &ScalarImage, b: &ScalarImage) -> f64 {
    let (sum, count) = a
        .data()
        .iter()
        .zip(b.data())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .fold((0.0, 0usize), |(s, c), (x, y)| (s + (x - y).powi(2), c + 1));
    if count == 0 {
        f64::NAN
    } else {
        (sum / count as f64).sqrt()
    }
}
