//! End-to-end experiments: phantom aliasing, supra-Nyquist power and volume
//! preservation. Each is a pure function of its configuration and seed.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;

use super::phantom::{blur_then_sample, grid_overlay, make_phantom_with, rmse, Pattern};
use super::spectrum::{
    fft3, signed_frequency, spectrum_report, suppression, zero_pad_upsample, SpectrumReport,
};
use super::stats::wilcoxon_signed_rank;
use super::volume::{make_blob, probabilistic_volume, VolumeReport};
use crate::error::Result;
use crate::grid::{GridSpec, ScalarImage, VectorImage};
use crate::psf::{fwhm_to_covariance, matching_covariance, nominal_sfpsf, MatchingStrategy, SfPsf};
use crate::resample::{resample_sfpsf, resample_standard, InterpKernel, ResampleConfig};
use crate::transform::{AffineTransform, DisplacementField, SpatialTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub size: usize,
    pub factor: usize,
    pub square_halfwidth: usize,
    pub period: usize,
    pub pattern: Pattern,
    pub kernel: InterpKernel,
    pub strategy: MatchingStrategy,
    pub samples_per_axis: usize,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            size: 63,
            factor: 3,
            square_halfwidth: 16,
            period: 2,
            pattern: Pattern::Stripes,
            kernel: InterpKernel::Linear,
            strategy: MatchingStrategy::DiagonalApprox,
            samples_per_axis: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhantomResult {
    pub source: ScalarImage,
    pub overlay: ScalarImage,
    /// Source resampled onto its own grid.
    pub high_res: ScalarImage,
    pub linear: ScalarImage,
    pub sinc: ScalarImage,
    pub sfpsf: ScalarImage,
    /// Source blurred by the matching Gaussian, then point-sampled.
    pub reference: ScalarImage,
    /// Matching standard deviation per axis (mm).
    pub sigma_p: [f64; 3],
    pub range: f64,
}

impl PhantomResult {
    /// `(method, RMSE against the reference)`.
    pub fn errors(&self) -> [(&'static str, f64); 3] {
        [
            ("linear", rmse(&self.linear, &self.reference)),
            ("sinc3", rmse(&self.sinc, &self.reference)),
            ("sfpsf", rmse(&self.sfpsf, &self.reference)),
        ]
    }
}

/// Resample the phantom `factor`-fold coarser with identity alignment.
pub fn run_phantom(cfg: &PhantomConfig) -> Result<PhantomResult> {
    let source = make_phantom_with(cfg.size, 1.0, cfg.square_halfwidth, cfg.period, cfg.pattern)?;
    let fine = source.grid().clone();
    let coarse_n = cfg.size / cfg.factor;
    let f = cfg.factor as f64;
    let coarse = fine.with_spacing([coarse_n, coarse_n, 1], [f, f, 1.0])?;
    let t = SpatialTransform::identity();

    let high_res = resample_standard(&source, &t, &fine, InterpKernel::Linear, 0.0)?;
    let linear = resample_standard(&source, &t, &coarse, InterpKernel::Linear, 0.0)?;
    let sinc = resample_standard(&source, &t, &coarse, InterpKernel::Sinc3, 0.0)?;
    let rcfg = ResampleConfig {
        kernel: cfg.kernel,
        strategy: cfg.strategy,
        samples_per_axis: cfg.samples_per_axis,
        ..ResampleConfig::nominal(&fine, &coarse)
    };
    let (sfpsf, _) = resample_sfpsf(&source, &t, &coarse, &rcfg)?;

    let p = matching_covariance(
        rcfg.target_psf.cov(),
        rcfg.source_psf.cov(),
        MatchingStrategy::DiagonalApprox,
    )?;
    let sigma_p = p.diag().map(f64::sqrt);
    let reference = blur_then_sample(&source, &coarse, sigma_p)?;
    let range = source.finite_range().map_or(0.0, |(lo, hi)| hi - lo);
    Ok(PhantomResult {
        overlay: grid_overlay(&fine, cfg.factor),
        source,
        high_res,
        linear,
        sinc,
        sfpsf,
        reference,
        sigma_p,
        range,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyConfig {
    pub cases: usize,
    /// Side of the random base image in voxels (1 mm).
    pub size: usize,
    pub upsample: usize,
    /// Periodic padding around the upsampled source, in upsampled voxels.
    pub margin: usize,
    /// Candidate warp wavelengths (mm); each must divide the field of view.
    pub wavelengths: Vec<f64>,
    /// Warp amplitude as a fraction of its wavelength, before a U(0.5, 1) factor.
    pub amplitude_fraction: f64,
    /// Base interpolator of the sfPSF branch.
    pub kernel: InterpKernel,
    pub samples_per_axis: usize,
    pub seed: u64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self {
            cases: 10,
            size: 64,
            upsample: 2,
            margin: 16,
            wavelengths: vec![16.0, 32.0],
            amplitude_fraction: 0.1,
            kernel: InterpKernel::Linear,
            samples_per_axis: 7,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrequencyCase {
    pub id: usize,
    pub sinc: SpectrumReport,
    pub sfpsf: SpectrumReport,
    /// `None` when the sinc output has no supra-Nyquist power.
    pub suppression: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FrequencyImages {
    pub source: ScalarImage,
    pub target: ScalarImage,
    pub sinc: ScalarImage,
    pub sfpsf: ScalarImage,
}

/// Gaussian-coloured noise band-limited by the nominal 1 mm PSF, Nyquist bin removed.
pub fn random_band_limited(n: usize, rng: &mut impl Rng) -> Result<ScalarImage> {
    let grid = GridSpec::planar([n, n], [1.0; 2], [0.0; 2])?;
    let mut data: Vec<Complex<f64>> = (0..n * n)
        .map(|_| Complex::new(rng.sample(StandardNormal), 0.0))
        .collect();
    fft3(&mut data, grid.dims(), false);
    let var = fwhm_to_covariance([1.0; 3])?.diag()[0];
    for (idx, c) in data.iter_mut().enumerate() {
        let [i, j, _] = grid.voxel_coords(idx);
        if 2 * i == n || 2 * j == n {
            *c = Complex::default();
            continue;
        }
        let fx = signed_frequency(i, n) as f64 / n as f64;
        let fy = signed_frequency(j, n) as f64 / n as f64;
        let h = (-2.0 * std::f64::consts::PI.powi(2) * var * (fx * fx + fy * fy)).exp();
        *c *= h;
    }
    fft3(&mut data, grid.dims(), true);
    let norm = 1.0 / (n * n) as f64;
    ScalarImage::new(grid, data.iter().map(|c| c.re * norm).collect())
}

/// Periodic extension by `margin` voxels on each in-plane side.
fn periodic_pad(img: &ScalarImage, margin: usize) -> Result<ScalarImage> {
    let g = img.grid();
    let [nx, ny, _] = g.dims();
    let s = g.spacing();
    let origin = g.index_to_world(&Vector3::new(-(margin as f64), -(margin as f64), 0.0));
    let grid = GridSpec::new(
        [nx + 2 * margin, ny + 2 * margin, 1],
        s,
        origin,
        g.direction(),
    )?;
    Ok(ScalarImage::from_fn(grid, |[i, j, _]| {
        img.get((i + nx - margin % nx) % nx, (j + ny - margin % ny) % ny, 0)
    }))
}

/// `u = (a_x sin(2π x / L_x + φ_x), a_y sin(2π y / L_y + φ_y), 0)` on `grid`.
fn sinusoidal_warp(
    grid: &GridSpec,
    cfg: &FrequencyConfig,
    rng: &mut impl Rng,
) -> DisplacementField {
    let mut axis = || {
        let l = cfg.wavelengths[rng.random_range(0..cfg.wavelengths.len())];
        let a = cfg.amplitude_fraction * l * rng.random_range(0.5..1.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        (a, l, phase)
    };
    let (ax, lx, px) = axis();
    let (ay, ly, py) = axis();
    let tau = std::f64::consts::TAU;
    DisplacementField::new(VectorImage::from_world_fn(grid.clone(), |p| {
        Vector3::new(
            ax * (tau * p.x / lx + px).sin(),
            ay * (tau * p.y / ly + py).sin(),
            0.0,
        )
    }))
}

/// One frequency case: the warped upsampled image by Sinc3 and by sfPSF.
pub fn frequency_case(
    cfg: &FrequencyConfig,
    id: usize,
) -> Result<(FrequencyCase, FrequencyImages)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64);
    let base = random_band_limited(cfg.size, &mut rng)?;
    let up = zero_pad_upsample(&base, cfg.upsample)?;
    let target_grid = up.grid().clone();
    let source = periodic_pad(&up, cfg.margin)?;
    let t: SpatialTransform = sinusoidal_warp(&target_grid, cfg, &mut rng).into();

    let sinc = resample_standard(&source, &t, &target_grid, InterpKernel::Sinc3, 0.0)?;
    let psf = SfPsf::from_fwhm([1.0, 1.0, 0.0])?;
    let rcfg = ResampleConfig {
        kernel: cfg.kernel,
        source_psf: psf,
        target_psf: psf,
        samples_per_axis: cfg.samples_per_axis,
        ..ResampleConfig::nominal(source.grid(), &target_grid)
    };
    let (sfpsf, _) = resample_sfpsf(&source, &t, &target_grid, &rcfg)?;

    let half = cfg.size / 2;
    let bx = [half, half, 0];
    let sinc_report = spectrum_report(&sinc, bx);
    let sf_report = spectrum_report(&sfpsf, bx);
    Ok((
        FrequencyCase {
            id,
            sinc: sinc_report,
            sfpsf: sf_report,
            suppression: suppression(&sinc_report, &sf_report).ok(),
        },
        FrequencyImages {
            source: up.clone(),
            target: up,
            sinc,
            sfpsf,
        },
    ))
}

pub fn run_frequency(cfg: &FrequencyConfig) -> Result<Vec<FrequencyCase>> {
    (0..cfg.cases)
        .into_par_iter()
        .map(|id| frequency_case(cfg, id).map(|(c, _)| c))
        .collect()
}

/// Mean over cases with a defined suppression.
pub fn mean_suppression(cases: &[FrequencyCase]) -> Option<f64> {
    let vals: Vec<f64> = cases.iter().filter_map(|c| c.suppression).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeConfig {
    pub blobs: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    pub softness: f64,
    /// Random rigid poses averaged per blob.
    pub poses: usize,
    pub hr_spacing: f64,
    pub lr_spacing: f64,
    pub samples_per_axis: usize,
    pub seed: u64,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self {
            blobs: 30,
            min_radius: 2.0,
            max_radius: 15.0,
            softness: 1.0,
            poses: 4,
            hr_spacing: 1.0,
            lr_spacing: 3.0,
            samples_per_axis: 7,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeCase {
    pub id: usize,
    pub radius: f64,
    /// Pose-averaged reports.
    pub linear: VolumeReport,
    pub sfpsf: VolumeReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSummary {
    pub cases: Vec<VolumeCase>,
    pub mean_rvd_linear: f64,
    pub mean_rvd_sfpsf: f64,
    pub mean_arvd_linear: f64,
    pub mean_arvd_sfpsf: f64,
    /// One-sided Wilcoxon p-value for ARVD(linear) > ARVD(sfPSF).
    pub p_value: f64,
}

pub fn blob_radius(cfg: &VolumeConfig, id: usize) -> f64 {
    if cfg.blobs < 2 {
        return cfg.min_radius;
    }
    let t = id as f64 / (cfg.blobs - 1) as f64;
    cfg.min_radius * (cfg.max_radius / cfg.min_radius).powf(t)
}

fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    let axis = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle)
}

pub fn volume_case(cfg: &VolumeConfig, id: usize) -> Result<VolumeCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64);
    let radius = blob_radius(cfg, id);
    let extent = radius + cfg.softness + 4.0 * cfg.lr_spacing;
    let k = (cfg.lr_spacing / cfg.hr_spacing).round() as usize;
    let coarse_n = (2.0 * extent / cfg.lr_spacing).ceil() as usize;
    let n = coarse_n * k;
    let half = (n as f64 - 1.0) * cfg.hr_spacing / 2.0;
    let hr_grid = GridSpec::axis_aligned([n; 3], [cfg.hr_spacing; 3], [-half; 3])?;
    let lr_grid = hr_grid.with_spacing([coarse_n; 3], [cfg.lr_spacing; 3])?;

    let jitter = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5) * cfg.hr_spacing);
    let blob = make_blob(&hr_grid, &jitter, radius, cfg.softness)?;
    let v_hr = probabilistic_volume(&blob);
    let rcfg = ResampleConfig {
        samples_per_axis: cfg.samples_per_axis,
        ..ResampleConfig::nominal(&hr_grid, &lr_grid)
    };

    let mut lin = Vec::with_capacity(cfg.poses);
    let mut sf = Vec::with_capacity(cfg.poses);
    for _ in 0..cfg.poses {
        let rot = random_rotation(&mut rng);
        let shift = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5) * cfg.lr_spacing);
        let t: SpatialTransform = AffineTransform::from_parts(*rot.matrix(), shift)?.into();
        let linear = resample_standard(&blob, &t, &lr_grid, InterpKernel::Linear, 0.0)?;
        lin.push(VolumeReport::new(v_hr, probabilistic_volume(&linear)));
        let (gauss, _) = resample_sfpsf(&blob, &t, &lr_grid, &rcfg)?;
        sf.push(VolumeReport::new(v_hr, probabilistic_volume(&gauss)));
    }
    Ok(VolumeCase {
        id,
        radius,
        linear: average(v_hr, &lin),
        sfpsf: average(v_hr, &sf),
    })
}

fn average(v_hr: f64, reports: &[VolumeReport]) -> VolumeReport {
    let m = reports.len().max(1) as f64;
    VolumeReport {
        v_hr,
        v_resampled: reports.iter().map(|r| r.v_resampled).sum::<f64>() / m,
        rvd: reports.iter().map(|r| r.rvd).sum::<f64>() / m,
        arvd: reports.iter().map(|r| r.arvd).sum::<f64>() / m,
    }
}

pub fn run_volumes(cfg: &VolumeConfig) -> Result<VolumeSummary> {
    let cases: Vec<VolumeCase> = (0..cfg.blobs)
        .into_par_iter()
        .map(|id| volume_case(cfg, id))
        .collect::<Result<_>>()?;
    let m = cases.len() as f64;
    let mean = |f: &dyn Fn(&VolumeCase) -> f64| cases.iter().map(f).sum::<f64>() / m;
    let pairs: Vec<(f64, f64)> = cases
        .iter()
        .map(|c| (c.linear.arvd, c.sfpsf.arvd))
        .collect();
    Ok(VolumeSummary {
        mean_rvd_linear: mean(&|c| c.linear.rvd),
        mean_rvd_sfpsf: mean(&|c| c.sfpsf.rvd),
        mean_arvd_linear: mean(&|c| c.linear.arvd),
        mean_arvd_sfpsf: mean(&|c| c.sfpsf.arvd),
        p_value: wilcoxon_signed_rank(&pairs)?,
        cases,
    })
}

/// Nominal PSFs and their matching increment for a pair of grids.
pub fn describe_psfs(
    source: &GridSpec,
    target: &GridSpec,
    strategy: MatchingStrategy,
) -> Result<[SfPsf; 3]> {
    let s = nominal_sfpsf(source);
    let t = nominal_sfpsf(target);
    let p = matching_covariance(t.cov(), s.cov(), strategy)?;
    Ok([s, t, SfPsf::new(p)])
}
