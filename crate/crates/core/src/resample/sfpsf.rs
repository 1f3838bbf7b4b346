//! Gaussian scale-factor PSF resampling.
//!
//! For each target voxel `v` the engine estimates the source PSF seen from the
//! target through the local Jacobian, chooses the extra smoothing `Σ_P` that
//! brings it to the target PSF, and averages source samples over a Gaussian
//! lattice of offsets around `v`:
//!
//! `I_T(v) = 1/Z * Σ_o I_S(F(v - o)) * G_{Σ_P}(o)`.
//!
//! Covariances and lattice offsets live in the target voxel-axis frame; `R_T`
//! rotates them into world axes.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::kernel::{sample_index, InterpKernel};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarImage};
use crate::matrix::{transform_covariance, Covariance3, SINGULAR_DET};
use crate::psf::{
    matching_covariance_with, nominal_sfpsf, DiagonalComponents, MatchingStrategy, SfPsf,
    DIRAC_SIGMA,
};
use crate::transform::SpatialTransform;

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleConfig {
    /// Interpolator used to read the source at each lattice point.
    pub kernel: InterpKernel,
    pub strategy: MatchingStrategy,
    pub diagonal_components: DiagonalComponents,
    /// Covariance in the source voxel-axis frame.
    pub source_psf: SfPsf,
    /// Covariance in the target voxel-axis frame.
    pub target_psf: SfPsf,
    pub halfwidth_sigmas: f64,
    /// Odd, at least 3.
    pub samples_per_axis: usize,
    /// Value for samples outside the source. NaN switches to majority-vote masking.
    pub background: f64,
    pub clamp01: bool,
}

impl ResampleConfig {
    /// Defaults with both PSFs at FWHM equal to the voxel size.
    pub fn nominal(source: &GridSpec, target: &GridSpec) -> Self {
        Self {
            kernel: InterpKernel::Linear,
            strategy: MatchingStrategy::DiagonalApprox,
            diagonal_components: DiagonalComponents::Entries,
            source_psf: nominal_sfpsf(source),
            target_psf: nominal_sfpsf(target),
            halfwidth_sigmas: 3.0,
            samples_per_axis: 7,
            background: 0.0,
            clamp01: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_axis < 3 || self.samples_per_axis % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "samples_per_axis must be odd and >= 3, got {}",
                self.samples_per_axis
            )));
        }
        if !(self.halfwidth_sigmas > 0.0) || !self.halfwidth_sigmas.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "halfwidth_sigmas must be finite and > 0, got {}",
                self.halfwidth_sigmas
            )));
        }
        Ok(())
    }
}

/// Per-run counters. Every field except `voxels` counts voxels that took a fallback path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResampleStats {
    pub voxels: usize,
    /// `|det J| < 1e-12`: `Σ_P` set to the full target covariance.
    pub singular_jacobians: usize,
    /// Geometric matching impossible: Frobenius used instead.
    pub degenerate_targets: usize,
    /// Weights could not be formed: single sample at `v`.
    pub nonfinite_weights: usize,
    /// Output changed by `clamp01`.
    pub clamped: usize,
}

const SINGULAR: u8 = 1;
const DEGENERATE: u8 = 2;
const NONFINITE: u8 = 4;
const CLAMPED: u8 = 8;

/// Gaussian density restricted to the non-Dirac eigenspace of its covariance.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDensity {
    precision: Matrix3<f64>,
    norm: f64,
}

impl GaussianDensity {
    /// `None` when the normaliser is not finite.
    pub fn new(cov: &Covariance3) -> Option<Self> {
        let eig = cov.eigen();
        let mut rank = 0;
        let mut det = 1.0;
        let precision = eig.reconstruct_with(|l| {
            if l.max(0.0).sqrt() < DIRAC_SIGMA {
                0.0
            } else {
                1.0 / l
            }
        });
        for &l in &eig.values {
            if l.max(0.0).sqrt() >= DIRAC_SIGMA {
                rank += 1;
                det *= l;
            }
        }
        let norm = (2.0 * std::f64::consts::PI).powf(-0.5 * rank as f64) / det.sqrt();
        (norm.is_finite() && norm > 0.0 && precision.iter().all(|v| v.is_finite()))
            .then_some(Self { precision, norm })
    }

    pub fn eval(&self, offset: &Vector3<f64>) -> f64 {
        self.norm * (-0.5 * offset.dot(&(self.precision * offset))).exp()
    }
}

/// `(2π)^{-r/2} |Σ|^{-1/2} exp(-½ oᵀ Σ⁺ o)` over the rank-`r` non-Dirac subspace.
pub fn gaussian_weight(cov: &Covariance3, offset: &Vector3<f64>) -> f64 {
    GaussianDensity::new(cov).map_or(f64::NAN, |g| g.eval(offset))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePoint {
    pub offset: Vector3<f64>,
    /// Normalised: the weights of one lattice sum to 1.
    pub weight: f64,
}

/// Separable lattice on the principal axes of `cov`, spanning `±halfwidth` standard
/// deviations with `samples_per_axis` points per axis. Dirac axes contribute the
/// single offset 0. `None` when the weights are not finite.
pub fn sample_lattice(
    cov: &Covariance3,
    samples_per_axis: usize,
    halfwidth_sigmas: f64,
) -> Option<Vec<LatticePoint>> {
    let eig = cov.eigen();
    let half = (samples_per_axis / 2) as i64;
    let step = halfwidth_sigmas / half as f64;
    let axis_offsets: [Vec<Vector3<f64>>; 3] = std::array::from_fn(|a| {
        let sigma = eig.values[a].max(0.0).sqrt();
        if sigma < DIRAC_SIGMA {
            vec![Vector3::zeros()]
        } else {
            let axis = eig.vectors.column(a).into_owned();
            (-half..=half)
                .map(|k| axis * (k as f64 * step * sigma))
                .collect()
        }
    });
    if axis_offsets.iter().all(|o| o.len() == 1) {
        return Some(vec![LatticePoint {
            offset: Vector3::zeros(),
            weight: 1.0,
        }]);
    }
    let density = GaussianDensity::new(cov)?;
    let mut points = Vec::with_capacity(axis_offsets.iter().map(Vec::len).product());
    for oz in &axis_offsets[2] {
        for oy in &axis_offsets[1] {
            for ox in &axis_offsets[0] {
                let offset = ox + oy + oz;
                points.push(LatticePoint {
                    offset,
                    weight: density.eval(&offset),
                });
            }
        }
    }
    let z: f64 = points.iter().map(|p| p.weight).sum();
    if !(z.is_finite() && z > 0.0) {
        return None;
    }
    for p in &mut points {
        p.weight /= z;
    }
    Some(points)
}

struct Engine<'a> {
    source: &'a ScalarImage,
    t: &'a SpatialTransform,
    target: &'a GridSpec,
    cfg: &'a ResampleConfig,
    target_rot: Matrix3<f64>,
    /// `R_T^T`, left factor of the source-to-target covariance map.
    target_rot_t: Matrix3<f64>,
    source_rot: Matrix3<f64>,
}

impl Engine<'_> {
    fn matching(&self, v: &Vector3<f64>) -> (Covariance3, u8) {
        let target_cov = self.cfg.target_psf.cov();
        let jac = self.t.jacobian_at(v);
        let det = jac.determinant();
        let inv = if det.abs() >= SINGULAR_DET {
            jac.try_inverse()
        } else {
            None
        };
        let Some(inv) = inv else {
            return (*target_cov, SINGULAR);
        };
        let to_target = self.target_rot_t * inv * self.source_rot;
        let local = transform_covariance(self.cfg.source_psf.cov(), &to_target);
        let components = self.cfg.diagonal_components;
        match matching_covariance_with(target_cov, &local, self.cfg.strategy, components) {
            Ok(p) => (p, 0),
            Err(_) => {
                let p = matching_covariance_with(
                    target_cov,
                    &local,
                    MatchingStrategy::FrobeniusClosest,
                    components,
                )
                .expect("frobenius matching is total");
                (p, DEGENERATE)
            }
        }
    }

    fn read(&self, world: &Vector3<f64>) -> Option<f64> {
        let idx = self.source.grid().world_to_index(&self.t.map_point(world));
        sample_index(self.source, self.cfg.kernel, &idx)
    }

    fn voxel(&self, n: usize) -> (f64, u8) {
        let v = self.target.voxel_center(self.target.voxel_coords(n));
        let (cov, mut flags) = self.matching(&v);
        let lattice = sample_lattice(&cov, self.cfg.samples_per_axis, self.cfg.halfwidth_sigmas);
        let lattice = lattice.unwrap_or_else(|| {
            flags |= NONFINITE;
            vec![LatticePoint {
                offset: Vector3::zeros(),
                weight: 1.0,
            }]
        });

        // weights are nonnegative, so the exact result lies in the hull of the
        // samples; bounding to it only removes summation rounding
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut hull = |s: f64| {
            lo = lo.min(s);
            hi = hi.max(s);
            s
        };
        let background = self.cfg.background;
        let value = if background.is_nan() {
            let (mut acc, mut inside) = (0.0, 0.0);
            for p in &lattice {
                if let Some(s) = self.read(&(v - self.target_rot * p.offset)) {
                    acc += p.weight * hull(s);
                    inside += p.weight;
                }
            }
            if inside < 0.5 {
                f64::NAN
            } else {
                acc / inside
            }
        } else {
            let mut acc = 0.0;
            for p in &lattice {
                let s = self
                    .read(&(v - self.target_rot * p.offset))
                    .unwrap_or(background);
                acc += p.weight * hull(s);
            }
            acc
        };
        let mut value = if value.is_finite() {
            value.clamp(lo, hi)
        } else {
            value
        };

        if self.cfg.clamp01 && (value < 0.0 || value > 1.0) {
            value = value.clamp(0.0, 1.0);
            flags |= CLAMPED;
        }
        (value, flags)
    }
}

/// Resample `source` onto `target` through `t` with PSF-matched Gaussian smoothing.
pub fn resample_sfpsf(
    source: &ScalarImage,
    t: &SpatialTransform,
    target: &GridSpec,
    cfg: &ResampleConfig,
) -> Result<(ScalarImage, ResampleStats)> {
    cfg.validate()?;
    t.check_target(target)?;
    if cfg.strategy == MatchingStrategy::DiagonalApprox {
        // surfaces NonDiagonalTarget once instead of per voxel
        matching_covariance_with(
            cfg.target_psf.cov(),
            &Covariance3::ZERO,
            cfg.strategy,
            cfg.diagonal_components,
        )?;
    }
    let engine = Engine {
        source,
        t,
        target,
        cfg,
        target_rot: target.direction(),
        target_rot_t: target.direction().transpose(),
        source_rot: source.grid().direction(),
    };
    let out: Vec<(f64, u8)> = (0..target.len())
        .into_par_iter()
        .map(|n| engine.voxel(n))
        .collect();

    let mut stats = ResampleStats {
        voxels: out.len(),
        ..Default::default()
    };
    let mut data = Vec::with_capacity(out.len());
    for (value, flags) in out {
        data.push(value);
        stats.singular_jacobians += usize::from(flags & SINGULAR != 0);
        stats.degenerate_targets += usize::from(flags & DEGENERATE != 0);
        stats.nonfinite_weights += usize::from(flags & NONFINITE != 0);
        stats.clamped += usize::from(flags & CLAMPED != 0);
    }
    Ok((ScalarImage::new(target.clone(), data)?, stats))
}
