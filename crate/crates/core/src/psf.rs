//! Scale factor PSFs and per-voxel covariance matching.
//!
//! An [`SfPsf`] covariance is expressed in the voxel-axis frame of the image it
//! belongs to (mm^2), so the nominal PSF of any grid is diagonal. Use
//! [`SfPsf::world_cov`] to rotate it into world axes.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::matrix::{
    closest_spsd_frobenius, min_volume_dominating, transform_covariance,
    transform_covariance_inverse, Covariance3,
};
use crate::transform::SpatialTransform;

/// `8 ln 2`: squared FWHM / variance ratio of a Gaussian.
pub const FWHM2_PER_VARIANCE: f64 = 8.0 * std::f64::consts::LN_2;

/// Standard deviations under this (mm) are treated as a Dirac.
pub const DIRAC_SIGMA: f64 = 1e-6;

/// Gaussian PSF attached to an image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SfPsf {
    cov: Covariance3,
}

impl SfPsf {
    pub fn new(cov: Covariance3) -> Self {
        Self { cov }
    }

    pub fn dirac() -> Self {
        Self::default()
    }

    pub fn from_fwhm(fwhm: [f64; 3]) -> Result<Self> {
        Ok(Self::new(fwhm_to_covariance(fwhm)?))
    }

    pub fn cov(&self) -> &Covariance3 {
        &self.cov
    }

    /// Covariance in world axes for an image on `grid`.
    pub fn world_cov(&self, grid: &GridSpec) -> Covariance3 {
        transform_covariance(&self.cov, &grid.direction())
    }

    pub fn is_dirac(&self) -> bool {
        self.cov
            .diag()
            .iter()
            .all(|&v| v.max(0.0).sqrt() < DIRAC_SIGMA)
    }
}

/// How the increment `Σ_P` between source and target PSFs is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchingStrategy {
    /// `max(Σ_T - λ, 0)` on the diagonal.
    #[default]
    DiagonalApprox,
    /// Eigenvalue clamp of `Σ_T - Σ_S`.
    FrobeniusClosest,
    /// Minimum-determinant dominating covariance minus `Σ_S`.
    GeometricMinVolume,
}

impl std::str::FromStr for MatchingStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "diag" | "diagonal" => Ok(Self::DiagonalApprox),
            "frob" | "frobenius" => Ok(Self::FrobeniusClosest),
            "geom" | "geometric" => Ok(Self::GeometricMinVolume),
            other => Err(format!(
                "unknown strategy '{other}' (expected diag, frob or geom)"
            )),
        }
    }
}

/// Which per-axis components of the mapped source covariance the diagonal
/// approximation subtracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalComponents {
    /// The diagonal entries (the symmetric polar factor of an SPSD matrix is itself).
    #[default]
    Entries,
    /// Eigenvalues, each assigned to the axis its eigenvector is most aligned with.
    Eigenvalues,
}

pub fn fwhm_to_covariance(fwhm: [f64; 3]) -> Result<Covariance3> {
    for (axis, &value) in fwhm.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeFwhm { axis, value });
        }
    }
    Covariance3::diagonal(fwhm.map(|f| f * f / FWHM2_PER_VARIANCE))
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM2_PER_VARIANCE.sqrt()
}

/// Gaussian whose FWHM equals the voxel size.
pub fn nominal_sfpsf(grid: &GridSpec) -> SfPsf {
    SfPsf::from_fwhm(grid.spacing()).expect("grid spacing is positive")
}

/// `Σ_S^T(v) = A^{-1} Σ_S A^{-T}` with `A` the transform's Jacobian at `v`
/// (world frame in and out).
pub fn local_source_cov(
    source_world: &Covariance3,
    t: &SpatialTransform,
    v: &Vector3<f64>,
) -> Result<Covariance3> {
    let a = t.jacobian_at(v);
    transform_covariance_inverse(source_world, &a).map_err(|e| match e {
        Error::SingularMatrix { det } => Error::SingularJacobian { det },
        other => other,
    })
}

/// Increment `Σ_P^T` so that `Σ_P^T + Σ_S^T` approximates `Σ_T`.
pub fn matching_covariance(
    target: &Covariance3,
    source_in_target: &Covariance3,
    strategy: MatchingStrategy,
) -> Result<Covariance3> {
    matching_covariance_with(
        target,
        source_in_target,
        strategy,
        DiagonalComponents::Entries,
    )
}

pub fn matching_covariance_with(
    target: &Covariance3,
    source_in_target: &Covariance3,
    strategy: MatchingStrategy,
    components: DiagonalComponents,
) -> Result<Covariance3> {
    match strategy {
        MatchingStrategy::DiagonalApprox => {
            if !is_effectively_diagonal(target) {
                return Err(Error::NonDiagonalTarget);
            }
            let lambda = match components {
                DiagonalComponents::Entries => source_in_target.diag(),
                DiagonalComponents::Eigenvalues => axis_assigned_eigenvalues(source_in_target),
            };
            let t = target.diag();
            Covariance3::diagonal([
                (t[0] - lambda[0]).max(0.0),
                (t[1] - lambda[1]).max(0.0),
                (t[2] - lambda[2]).max(0.0),
            ])
        }
        MatchingStrategy::FrobeniusClosest => Ok(closest_spsd_frobenius(source_in_target, target)),
        MatchingStrategy::GeometricMinVolume => {
            let q = min_volume_dominating(source_in_target, target)?;
            Ok(Covariance3::project_psd(
                &(q.to_matrix() - source_in_target.to_matrix()),
            ))
        }
    }
}

fn is_effectively_diagonal(c: &Covariance3) -> bool {
    let d = c.diag();
    let scale = d[0].abs().max(d[1].abs()).max(d[2].abs());
    let e = c.entries();
    [e[1], e[2], e[4]].iter().all(|v| v.abs() <= 1e-12 * scale)
}

/// Eigenvalues permuted onto the axes that maximise total eigenvector alignment.
fn axis_assigned_eigenvalues(c: &Covariance3) -> [f64; 3] {
    if c.is_diagonal() {
        return c.diag();
    }
    let eig = c.eigen();
    let z: Matrix3<f64> = eig.vectors.abs();
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    // perm[e] = axis receiving eigenvalue e
    let best = PERMS
        .iter()
        .max_by(|p, q| {
            let score = |perm: &[usize; 3]| (0..3).map(|e| z[(perm[e], e)]).sum::<f64>();
            score(p).total_cmp(&score(q))
        })
        .expect("non-empty");
    let mut out = [0.0; 3];
    for e in 0..3 {
        out[best[e]] = eig.values[e].max(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::AffineTransform;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn diag(d: [f64; 3]) -> Covariance3 {
        Covariance3::diagonal(d).unwrap()
    }

    const ALL: [MatchingStrategy; 3] = [
        MatchingStrategy::DiagonalApprox,
        MatchingStrategy::FrobeniusClosest,
        MatchingStrategy::GeometricMinVolume,
    ];

    #[test]
    fn unit_fwhm() {
        let c = fwhm_to_covariance([1.0; 3]).unwrap();
        for v in c.diag() {
            assert!((v - 0.180337).abs() < 1e-6);
        }
        assert!(fwhm_to_covariance([0.0; 3]).unwrap().is_zero());
    }

    #[test]
    fn negative_fwhm_rejected() {
        let err = fwhm_to_covariance([1.0, -0.1, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NegativeFwhm { axis: 1, .. }));
    }

    #[test]
    fn downsampling_by_two_needs_sigma_0_7355() {
        let t = fwhm_to_covariance([2.0; 3]).unwrap();
        let s = fwhm_to_covariance([1.0; 3]).unwrap();
        let d = t.diag()[0] - s.diag()[0];
        assert!((d - 3.0 / FWHM2_PER_VARIANCE).abs() < 1e-15);
        assert!((d - 0.541).abs() < 1e-3);
        assert!((d.sqrt() - 0.7355).abs() < 1e-4);
    }

    #[test]
    fn nominal_psf_follows_spacing() {
        let g = GridSpec::axis_aligned([4; 3], [3.0; 3], [0.0; 3]).unwrap();
        assert!((nominal_sfpsf(&g).cov().diag()[0] - 1.62303).abs() < 1e-5);
        let g = GridSpec::axis_aligned([4; 3], [1.1, 1.0, 1.0], [0.0; 3]).unwrap();
        let d = nominal_sfpsf(&g).cov().diag();
        assert!((d[0] - 0.218208).abs() < 1e-6);
        assert!((d[1] - 0.180337).abs() < 1e-6);
        assert!((d[2] - 0.180337).abs() < 1e-6);
    }

    #[test]
    fn coincident_psfs_need_no_smoothing() {
        let t = diag([0.3, 0.5, 0.7]);
        for s in ALL {
            assert!(
                matching_covariance(&t, &t, s)
                    .unwrap()
                    .max_abs_diff(&Covariance3::ZERO)
                    < 1e-12
            );
        }
    }

    // (9 - 1) / (8 ln 2) happens to equal log2(e)
    #[allow(clippy::approx_constant)]
    #[test]
    fn three_fold_downsampling() {
        let t = nominal_sfpsf(&GridSpec::axis_aligned([4; 3], [3.0; 3], [0.0; 3]).unwrap());
        let s = nominal_sfpsf(&GridSpec::axis_aligned([4; 3], [1.0; 3], [0.0; 3]).unwrap());
        for strat in ALL {
            let p = matching_covariance(t.cov(), s.cov(), strat).unwrap();
            for v in p.diag() {
                assert!((v - 1.442695).abs() < 1e-6, "{strat:?}");
                assert!((v.sqrt() - 1.2011).abs() < 1e-4);
            }
            assert!(p.is_diagonal() || p.max_abs_diff(&diag(p.diag())) < 1e-12);
        }
    }

    #[test]
    fn upsampling_clamps_to_zero() {
        let t = diag([0.180337; 3]);
        let s = diag([0.72135; 3]);
        for strat in ALL {
            assert!(
                matching_covariance(&t, &s, strat)
                    .unwrap()
                    .max_abs_diff(&Covariance3::ZERO)
                    < 1e-12
            );
        }
    }

    #[test]
    fn diagonal_requires_diagonal_target() {
        let t =
            Covariance3::from_matrix(&Matrix3::new(1.0, 0.2, 0.0, 0.2, 1.0, 0.0, 0.0, 0.0, 1.0))
                .unwrap();
        let err =
            matching_covariance(&t, &diag([0.1; 3]), MatchingStrategy::DiagonalApprox).unwrap_err();
        assert!(matches!(err, Error::NonDiagonalTarget));
    }

    #[test]
    fn geometric_degenerate_target_propagates() {
        let err = matching_covariance(
            &diag([1.0, 1.0, 0.0]),
            &diag([0.1; 3]),
            MatchingStrategy::GeometricMinVolume,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget { .. }));
    }

    #[test]
    fn local_cov_examples() {
        let s = diag([4.0, 1.0, 1.0]);
        let v = Vector3::new(1.0, 2.0, 3.0);
        let id = SpatialTransform::identity();
        assert_eq!(local_source_cov(&s, &id, &v).unwrap(), s);

        let expand: SpatialTransform =
            AffineTransform::from_parts(Matrix3::identity() * 3.0, Vector3::zeros())
                .unwrap()
                .into();
        let got = local_source_cov(&s, &expand, &v).unwrap();
        assert!(got.max_abs_diff(&diag([4.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0])) < 1e-15);

        let rot = Rotation3::from_axis_angle(
            &Unit::new_normalize(Vector3::z()),
            std::f64::consts::FRAC_PI_4,
        );
        let t: SpatialTransform = AffineTransform::from_parts(*rot.matrix(), Vector3::zeros())
            .unwrap()
            .into();
        let got = local_source_cov(&s, &t, &v).unwrap();
        assert!((got.get(0, 0) - 2.5).abs() < 1e-12);
        assert!((got.get(1, 1) - 2.5).abs() < 1e-12);
        assert!((got.get(2, 2) - 1.0).abs() < 1e-12);
        assert!((got.get(0, 1).abs() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_variant_assigns_by_alignment() {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::z()), 0.3);
        let s = transform_covariance(&diag([0.1, 0.4, 0.05]), rot.matrix());
        let p = matching_covariance_with(
            &diag([1.0; 3]),
            &s,
            MatchingStrategy::DiagonalApprox,
            DiagonalComponents::Eigenvalues,
        )
        .unwrap();
        let want = [0.9, 0.6, 0.95];
        for (g, w) in p.diag().iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_between_isotropic_grids_is_dirac() {
        let sigma = fwhm_to_covariance([1.0; 3]).unwrap();
        for angle in [0.1, 0.7, 2.0] {
            let rot = Rotation3::from_euler_angles(angle, -angle * 0.5, 0.3);
            let t: SpatialTransform =
                AffineTransform::from_parts(*rot.matrix(), Vector3::new(1.0, 2.0, 3.0))
                    .unwrap()
                    .into();
            let local = local_source_cov(&sigma, &t, &Vector3::zeros()).unwrap();
            for strat in ALL {
                let p = matching_covariance(&sigma, &local, strat).unwrap();
                assert!(SfPsf::new(p).is_dirac(), "{strat:?} {p:?}");
            }
        }
    }

    fn psd_from(v: [f64; 6], floor: f64) -> Covariance3 {
        let b = Matrix3::new(v[0], v[1], v[2], 0.0, v[3], v[4], 0.0, 0.0, v[5]);
        Covariance3::from_matrix(&(b * b.transpose() + Matrix3::identity() * floor)).unwrap()
    }

    proptest! {
        #[test]
        fn coincidence_for_random_psd(v in prop::array::uniform6(-2.0f64..2.0)) {
            let t = psd_from(v, 0.05);
            for strat in [MatchingStrategy::FrobeniusClosest, MatchingStrategy::GeometricMinVolume] {
                let p = matching_covariance(&t, &t, strat).unwrap();
                prop_assert!(p.max_abs_diff(&Covariance3::ZERO) < 1e-9);
            }
            let d = diag(t.diag());
            let p = matching_covariance(&d, &d, MatchingStrategy::DiagonalApprox).unwrap();
            prop_assert!(p.is_zero());
        }

        #[test]
        fn diagonal_is_monotone(
            t in prop::array::uniform3(0.0f64..3.0),
            s in prop::array::uniform6(-1.0f64..1.0),
            axis in 0usize..3,
            bump in 0.0f64..2.0,
        ) {
            let src = psd_from(s, 0.0);
            let before = matching_covariance(&diag(t), &src, MatchingStrategy::DiagonalApprox).unwrap();
            let mut t2 = t;
            t2[axis] += bump;
            let after = matching_covariance(&diag(t2), &src, MatchingStrategy::DiagonalApprox).unwrap();
            prop_assert!(after.diag()[axis] >= before.diag()[axis]);
        }

        #[test]
        fn matched_sum_dominates_target(
            t in prop::array::uniform6(-2.0f64..2.0),
            s in prop::array::uniform6(-2.0f64..2.0),
        ) {
            let target = psd_from(t, 0.05);
            let source = psd_from(s, 0.0);
            for strat in [MatchingStrategy::FrobeniusClosest, MatchingStrategy::GeometricMinVolume] {
                let p = matching_covariance(&target, &source, strat).unwrap();
                let excess = p.to_matrix() + source.to_matrix() - target.to_matrix();
                let min = crate::matrix::eig_sym3(&excess).values[2];
                prop_assert!(min >= -1e-9, "{strat:?} min eig {min}");
                prop_assert!(p.min_eigenvalue() >= -1e-9);
            }
        }

        #[test]
        fn diagonal_sum_dominates_for_diagonal_source(
            t in prop::array::uniform3(0.0f64..3.0),
            s in prop::array::uniform3(0.0f64..3.0),
        ) {
            let p = matching_covariance(&diag(t), &diag(s), MatchingStrategy::DiagonalApprox).unwrap();
            for a in 0..3 {
                prop_assert!(p.diag()[a] + s[a] >= t[a] - 1e-12);
            }
        }
    }
}
