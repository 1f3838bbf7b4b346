//! Discrete spectra: zero-padding upsampling and supra-Nyquist power.
//!
//! Bin `k` of an axis of length `n` has signed frequency `k` for `k <= n/2` and
//! `k - n` above. Singleton axes are never transformed.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarImage};

/// In-place separable DFT over every axis longer than one sample (unnormalised).
pub fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], inverse: bool) {
    let mut planner = FftPlanner::new();
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        if n < 2 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let stride = strides[axis];
        let mut line = vec![Complex::default(); n];
        for start in 0..data.len() {
            // first sample of each line along `axis`
            if (start / stride) % n != 0 {
                continue;
            }
            for (i, c) in line.iter_mut().enumerate() {
                *c = data[start + i * stride];
            }
            fft.process(&mut line);
            for (i, c) in line.iter().enumerate() {
                data[start + i * stride] = *c;
            }
        }
    }
}

pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if 2 * k <= n {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn forward(img: &ScalarImage) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = img.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft3(&mut data, img.grid().dims(), false);
    data
}

/// Destinations of source bin `k` on an axis grown from `n` to `m` samples.
/// An even-length Nyquist bin is split evenly between `+n/2` and `-n/2`.
fn bin_targets(k: usize, n: usize, m: usize) -> ([(usize, f64); 2], usize) {
    if n == m {
        return ([(k, 1.0), (0, 0.0)], 1);
    }
    if n % 2 == 0 && 2 * k == n {
        return ([(k, 0.5), (m - k, 0.5)], 2);
    }
    let f = signed_frequency(k, n);
    let idx = if f >= 0 {
        f as usize
    } else {
        (m as i64 + f) as usize
    };
    ([(idx, 1.0), (0, 0.0)], 1)
}

/// Band-limited interpolation by `factor` along every non-singleton axis.
///
/// Original samples are reproduced exactly (to round-off) at every `factor`-th
/// output sample and the origin is unchanged.
pub fn zero_pad_upsample(img: &ScalarImage, factor: usize) -> Result<ScalarImage> {
    if factor < 2 {
        return Err(Error::InvalidConfig(format!(
            "upsampling factor must be >= 2, got {factor}"
        )));
    }
    let grid = img.grid();
    let dims = grid.dims();
    let grow = dims.map(|n| if n > 1 { factor } else { 1 });
    let new_dims = [dims[0] * grow[0], dims[1] * grow[1], dims[2] * grow[2]];
    let spec = forward(img);

    let mut padded = vec![Complex::default(); new_dims.iter().product()];
    for (n, &c) in spec.iter().enumerate() {
        let [i, j, k] = grid.voxel_coords(n);
        let (tx, nx) = bin_targets(i, dims[0], new_dims[0]);
        let (ty, ny) = bin_targets(j, dims[1], new_dims[1]);
        let (tz, nz) = bin_targets(k, dims[2], new_dims[2]);
        for &(z, wz) in &tz[..nz] {
            for &(y, wy) in &ty[..ny] {
                for &(x, wx) in &tx[..nx] {
                    padded[x + new_dims[0] * (y + new_dims[1] * z)] += c * (wx * wy * wz);
                }
            }
        }
    }
    fft3(&mut padded, new_dims, true);
    let norm = 1.0 / dims.iter().product::<usize>() as f64;
    let s = grid.spacing();
    let new_grid = GridSpec::new(
        new_dims,
        [
            s[0] / grow[0] as f64,
            s[1] / grow[1] as f64,
            s[2] / grow[2] as f64,
        ],
        grid.origin(),
        grid.direction(),
    )?;
    ScalarImage::new(new_grid, padded.iter().map(|c| c.re * norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumReport {
    /// Power over every bin except DC.
    pub total_power: f64,
    pub supra_nyquist_power: f64,
    pub fraction: f64,
    /// Inclusive half-widths (bins) of the pass band per axis.
    pub nyquist_box: [usize; 3],
}

/// Power outside the centred box `|k_a| <= nyquist_box[a]`. Power is normalised
/// so that `total_power` equals the sum of squared deviations from the mean.
pub fn spectrum_report(img: &ScalarImage, nyquist_box: [usize; 3]) -> SpectrumReport {
    let grid = img.grid();
    let dims = grid.dims();
    let spec = forward(img);
    let norm = 1.0 / grid.len() as f64;
    let (mut total, mut supra) = (0.0, 0.0);
    for (n, c) in spec.iter().enumerate().skip(1) {
        let ijk = grid.voxel_coords(n);
        let p = c.norm_sqr() * norm;
        total += p;
        if (0..3)
            .any(|a| signed_frequency(ijk[a], dims[a]).unsigned_abs() as usize > nyquist_box[a])
        {
            supra += p;
        }
    }
    SpectrumReport {
        total_power: total,
        supra_nyquist_power: supra,
        fraction: if total > 0.0 { supra / total } else { 0.0 },
        nyquist_box,
    }
}

/// `1 - sfpsf / sinc` on supra-Nyquist power.
pub fn suppression(sinc: &SpectrumReport, sfpsf: &SpectrumReport) -> Result<f64> {
    if !(sinc.supra_nyquist_power > 0.0) {
        return Err(Error::NotApplicable("reference has no supra-Nyquist power"));
    }
    Ok(1.0 - sfpsf.supra_nyquist_power / sinc.supra_nyquist_power)
}

/// Log-magnitude spectrum with DC moved to the centre, for figures.
pub fn centered_log_magnitude(img: &ScalarImage) -> ScalarImage {
    let grid = img.grid().clone();
    let dims = grid.dims();
    let spec = forward(img);
    let mut out = vec![0.0; spec.len()];
    for (n, c) in spec.iter().enumerate() {
        let [i, j, k] = grid.voxel_coords(n);
        let shift = |x: usize, d: usize| (x + d / 2) % d;
        let dst = grid.linear_index(shift(i, dims[0]), shift(j, dims[1]), shift(k, dims[2]));
        out[dst] = (1.0 + c.norm()).ln();
    }
    ScalarImage::new(grid, out).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn planar(n: usize, spacing: f64, f: impl Fn(usize, usize) -> f64) -> ScalarImage {
        let g = GridSpec::planar([n, n], [spacing; 2], [0.0; 2]).unwrap();
        ScalarImage::from_fn(g, |[i, j, _]| f(i, j))
    }

    fn noise(n: usize, seed: u64) -> ScalarImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::planar([n, n], [1.0; 2], [0.0; 2]).unwrap();
        let data = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        ScalarImage::new(g, data).unwrap()
    }

    #[test]
    fn fft_roundtrip() {
        let img = noise(12, 1);
        let mut d: Vec<Complex<f64>> = img.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft3(&mut d, img.grid().dims(), false);
        fft3(&mut d, img.grid().dims(), true);
        for (a, b) in d.iter().zip(img.data()) {
            assert!((a.re / 144.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_upsamples_to_constant() {
        let img = planar(6, 1.0, |_, _| 2.5);
        let up = zero_pad_upsample(&img, 2).unwrap();
        assert_eq!(up.grid().dims(), [12, 12, 1]);
        assert!(up.data().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn upsampled_spacing() {
        let g = GridSpec::axis_aligned([4, 4, 4], [1.1, 1.0, 1.0], [0.0; 3]).unwrap();
        let up = zero_pad_upsample(&ScalarImage::filled(g, 1.0), 2).unwrap();
        assert_eq!(up.grid().spacing(), [0.55, 0.5, 0.5]);
    }

    #[test]
    fn pure_tone_stays_in_band() {
        let n = 16;
        let img = planar(n, 1.0, |i, _| (2.0 * PI * 3.0 * i as f64 / n as f64).cos());
        let up = zero_pad_upsample(&img, 2).unwrap();
        for i in 0..2 * n {
            let want = (2.0 * PI * 3.0 * i as f64 / (2 * n) as f64).cos();
            assert!((up.get(i, 5, 0) - want).abs() < 1e-12);
        }
        let r = spectrum_report(&up, [n / 2, n / 2, 0]);
        assert!(r.fraction < 1e-10);
    }

    #[test]
    fn upsampling_interpolates_and_keeps_power() {
        for n in [9, 10] {
            let img = noise(n, n as u64);
            let up = zero_pad_upsample(&img, 3).unwrap();
            for j in 0..n {
                for i in 0..n {
                    assert!((up.get(3 * i, 3 * j, 0) - img.get(i, j, 0)).abs() < 1e-12);
                }
            }
            let before = spectrum_report(&img, [n / 2, n / 2, 0]);
            let after = spectrum_report(&up, [n / 2, n / 2, 0]);
            assert!(after.fraction < 1e-10, "{n}: {}", after.fraction);
            if n % 2 == 1 {
                // no Nyquist split: mean-square power is unchanged
                let rel = (after.total_power / 9.0 - before.total_power).abs() / before.total_power;
                assert!(rel < 1e-9);
            }
        }
    }

    #[test]
    fn supra_nyquist_tone() {
        let n = 32;
        let img = planar(n, 1.0, |i, j| {
            (2.0 * PI * (12.0 * i as f64 + 3.0 * j as f64) / n as f64).sin()
        });
        let r = spectrum_report(&img, [8, 8, 0]);
        assert!((r.fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn white_noise_quarter_band() {
        let n = 64;
        let mut sum = 0.0;
        for seed in 0..8 {
            sum += spectrum_report(&noise(n, seed), [16, 16, 0]).fraction;
        }
        // expected 1 - 33^2 / (64^2 - 1)
        let expected = 1.0 - 33.0 * 33.0 / (64.0 * 64.0 - 1.0);
        assert!((sum / 8.0 - expected).abs() < 0.01);
        assert!((sum / 8.0 - 0.75).abs() < 0.03);
    }

    #[test]
    fn fraction_is_scale_invariant() {
        let img = noise(16, 4);
        let scaled = ScalarImage::new(
            img.grid().clone(),
            img.data().iter().map(|v| 7.0 * v + 3.0).collect(),
        )
        .unwrap();
        let a = spectrum_report(&img, [4, 4, 0]);
        let b = spectrum_report(&scaled, [4, 4, 0]);
        assert!((a.fraction - b.fraction).abs() < 1e-12);
    }

    #[test]
    fn suppression_values() {
        let r = |supra| SpectrumReport {
            total_power: 1.0,
            supra_nyquist_power: supra,
            fraction: supra,
            nyquist_box: [1; 3],
        };
        assert_eq!(suppression(&r(0.3), &r(0.3)).unwrap(), 0.0);
        assert!((suppression(&r(1.0), &r(0.056)).unwrap() - 0.944).abs() < 1e-12);
        assert_eq!(suppression(&r(0.5), &r(0.0)).unwrap(), 1.0);
        assert!(matches!(
            suppression(&r(0.0), &r(0.1)),
            Err(Error::NotApplicable(_))
        ));
    }
}
