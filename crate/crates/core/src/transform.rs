//! Spatial transformations mapping target-space points to source space.
//!
//! Everything here works in world coordinates (mm). Displacement fields store `u`
//! with `F(v) = v + u(v)`, are read by trilinear interpolation and are extended
//! outside their grid by clamping to the edge voxels. Jacobians of fields use
//! one-voxel central differences along each grid axis, falling back to one-sided
//! differences where a neighbour would leave the grid.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, VectorImage};
use crate::matrix::SINGULAR_DET;

/// Homogeneous 4x4 affine map, target world -> source world.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    matrix: Matrix4<f64>,
}

impl AffineTransform {
    pub fn new(matrix: Matrix4<f64>) -> Result<Self> {
        let bottom = [
            matrix[(3, 0)],
            matrix[(3, 1)],
            matrix[(3, 2)],
            matrix[(3, 3)],
        ];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidAffine(format!(
                "bottom row must be (0, 0, 0, 1), got {bottom:?}"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAffine("non-finite entry".into()));
        }
        let det = matrix.fixed_view::<3, 3>(0, 0).determinant();
        if !(det.abs() > SINGULAR_DET) {
            return Err(Error::InvalidAffine(format!(
                "singular linear part (det = {det:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    pub fn from_parts(linear: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::new(m)
    }

    pub fn translation(offset: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), offset).expect("pure translation is always valid")
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn offset(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.linear() * p + self.offset()
    }
}

/// Dense displacement field defined on the target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    field: VectorImage,
}

impl DisplacementField {
    pub fn new(field: VectorImage) -> Self {
        Self { field }
    }

    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    pub fn field(&self) -> &VectorImage {
        &self.field
    }

    /// Trilinear interpolation of `u` at a continuous index, clamped to the grid.
    fn displacement_at_index(&self, idx: &Vector3<f64>) -> Vector3<f64> {
        let dims = self.field.grid().dims();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let max = (dims[a] - 1) as f64;
            let x = idx[a].clamp(0.0, max);
            let f = x.floor();
            lo[a] = f as usize;
            hi[a] = (lo[a] + 1).min(dims[a] - 1);
            frac[a] = x - f;
        }
        let mut acc = Vector3::zeros();
        for (dk, wk) in [(lo[2], 1.0 - frac[2]), (hi[2], frac[2])] {
            if wk == 0.0 {
                continue;
            }
            for (dj, wj) in [(lo[1], 1.0 - frac[1]), (hi[1], frac[1])] {
                if wj == 0.0 {
                    continue;
                }
                for (di, wi) in [(lo[0], 1.0 - frac[0]), (hi[0], frac[0])] {
                    if wi == 0.0 {
                        continue;
                    }
                    acc += self.field.get(di, dj, dk) * (wi * wj * wk);
                }
            }
        }
        acc
    }

    pub fn displacement(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let idx = self.field.grid().world_to_index(p);
        self.displacement_at_index(&idx)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p + self.displacement(p)
    }

    /// `I + du/dx` in world coordinates.
    pub fn jacobian(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        let grid = self.field.grid();
        let dims = grid.dims();
        let idx = grid.world_to_index(p);
        // columns: du / d(index_a)
        let mut du_dindex = Matrix3::zeros();
        for a in 0..3 {
            if dims[a] < 2 {
                continue;
            }
            let max = (dims[a] - 1) as f64;
            let mut fwd = idx;
            let mut back = idx;
            fwd[a] += 1.0;
            back[a] -= 1.0;
            let (fwd, back) = if back[a] < 0.0 {
                (fwd, idx)
            } else if fwd[a] > max {
                (idx, back)
            } else {
                (fwd, back)
            };
            let step = fwd[a] - back[a];
            let d = (self.displacement_at_index(&fwd) - self.displacement_at_index(&back)) / step;
            du_dindex.set_column(a, &d);
        }
        // d(index)/d(world) = diag(1/spacing) * direction^T
        let s = grid.spacing();
        let inv_spacing = Matrix3::from_diagonal(&Vector3::new(1.0 / s[0], 1.0 / s[1], 1.0 / s[2]));
        Matrix3::identity() + du_dindex * inv_spacing * grid.direction().transpose()
    }
}

/// Target -> source mapping.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialTransform {
    Affine(AffineTransform),
    Field(DisplacementField),
    /// The field is applied first (in target space), then the affine.
    Composed {
        affine: AffineTransform,
        field: DisplacementField,
    },
}

impl SpatialTransform {
    pub fn identity() -> Self {
        SpatialTransform::Affine(AffineTransform::identity())
    }

    pub fn map_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        match self {
            SpatialTransform::Affine(a) => a.apply(p),
            SpatialTransform::Field(f) => f.apply(p),
            SpatialTransform::Composed { affine, field } => affine.apply(&field.apply(p)),
        }
    }

    pub fn jacobian_at(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        match self {
            SpatialTransform::Affine(a) => a.linear(),
            SpatialTransform::Field(f) => f.jacobian(p),
            SpatialTransform::Composed { affine, field } => affine.linear() * field.jacobian(p),
        }
    }

    /// Grid the transform's field lives on, if any.
    pub fn field_grid(&self) -> Option<&GridSpec> {
        match self {
            SpatialTransform::Affine(_) => None,
            SpatialTransform::Field(f) | SpatialTransform::Composed { field: f, .. } => {
                Some(f.grid())
            }
        }
    }

    /// Fields must be sampled on exactly the grid being resampled onto.
    pub fn check_target(&self, target: &GridSpec) -> Result<()> {
        match self.field_grid() {
            Some(g) if !g.approx_eq(target, 1e-9) => Err(Error::GridMismatch),
            _ => Ok(()),
        }
    }
}

impl From<AffineTransform> for SpatialTransform {
    fn from(a: AffineTransform) -> Self {
        SpatialTransform::Affine(a)
    }
}

impl From<DisplacementField> for SpatialTransform {
    fn from(f: DisplacementField) -> Self {
        SpatialTransform::Field(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(n: usize) -> GridSpec {
        GridSpec::axis_aligned([n; 3], [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn identity_and_translation() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(SpatialTransform::identity().map_point(&p), p);
        let t: SpatialTransform = AffineTransform::translation(Vector3::new(5.0, 0.0, 0.0)).into();
        assert_eq!(t.map_point(&p), Vector3::new(6.0, 2.0, 3.0));
    }

    #[test]
    fn affine_validation() {
        let mut m = Matrix4::identity();
        m[(3, 0)] = 0.5;
        assert!(AffineTransform::new(m).is_err());
        let mut m = Matrix4::identity();
        m[(2, 2)] = 0.0;
        assert!(AffineTransform::new(m).is_err());
    }

    #[test]
    fn constant_field_maps_by_offset() {
        let u = Vector3::new(1.0, 1.0, 0.0);
        let field = VectorImage::from_world_fn(cube(10), |_| u);
        let t: SpatialTransform = DisplacementField::new(field).into();
        let q = t.map_point(&Vector3::new(2.5, 2.5, 2.5));
        assert!((q - Vector3::new(3.5, 3.5, 2.5)).norm() < 1e-15);
        // clamped extrapolation outside the grid
        let q = t.map_point(&Vector3::new(-4.0, 20.0, 2.0));
        assert!((q - Vector3::new(-3.0, 21.0, 2.0)).norm() < 1e-15);
        for p in [Vector3::new(0.0, 0.0, 0.0), Vector3::new(4.3, 9.0, 2.2)] {
            assert!((t.jacobian_at(&p) - Matrix3::identity()).abs().max() < 1e-15);
        }
    }

    #[test]
    fn affine_jacobian_is_constant() {
        let lin = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
        let t: SpatialTransform = AffineTransform::from_parts(lin, Vector3::new(1.0, -2.0, 0.5))
            .unwrap()
            .into();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = Vector3::from_fn(|_, _| rng.random_range(-100.0..100.0));
            assert_eq!(t.jacobian_at(&p), lin);
        }
    }

    #[test]
    fn linear_ramp_field_jacobian() {
        let field = VectorImage::from_world_fn(cube(10), |p| Vector3::new(0.1 * p.x, 0.0, 0.0));
        let t: SpatialTransform = DisplacementField::new(field).into();
        let want = Matrix3::from_diagonal(&Vector3::new(1.1, 1.0, 1.0));
        for i in 0..10 {
            for j in [0, 4, 9] {
                let p = Vector3::new(i as f64, j as f64, 5.0);
                assert!((t.jacobian_at(&p) - want).abs().max() < 1e-9, "at {p:?}");
            }
        }
    }

    #[test]
    fn jacobian_in_world_units_for_rotated_grid() {
        let rot = *Rotation3::from_euler_angles(0.0, 0.0, 0.6).matrix();
        let grid = GridSpec::new(
            [12, 12, 12],
            [0.5, 2.0, 1.0],
            Vector3::new(3.0, -1.0, 2.0),
            rot,
        )
        .unwrap();
        let lin = Matrix3::new(0.1, 0.02, 0.0, -0.03, 0.05, 0.01, 0.0, 0.04, -0.02);
        let field = VectorImage::from_world_fn(grid.clone(), |p| lin * p);
        let t: SpatialTransform = DisplacementField::new(field).into();
        let p = grid.voxel_center([5, 6, 7]);
        assert!(
            (t.jacobian_at(&p) - (Matrix3::identity() + lin))
                .abs()
                .max()
                < 1e-9
        );
    }

    #[test]
    fn smooth_field_second_order_accuracy() {
        // u = a sin(b v) per axis; central differences err by ~ a b (b h)^2 / 6
        let (a, b) = (2.0, 0.1);
        let grid = cube(32);
        let field = VectorImage::from_world_fn(grid.clone(), |p| {
            Vector3::new(
                a * (b * p.x).sin(),
                a * (b * p.y).sin(),
                a * (b * p.z).sin(),
            )
        });
        let t: SpatialTransform = DisplacementField::new(field).into();
        for i in 1..31 {
            let p = grid.voxel_center([i, (i * 7) % 30 + 1, (i * 13) % 30 + 1]);
            let want = Matrix3::identity()
                + Matrix3::from_diagonal(&Vector3::new(
                    a * b * (b * p.x).cos(),
                    a * b * (b * p.y).cos(),
                    a * b * (b * p.z).cos(),
                ));
            assert!((t.jacobian_at(&p) - want).abs().max() < 1e-3);
        }
    }

    #[test]
    fn composition_order() {
        let field = DisplacementField::new(VectorImage::from_world_fn(cube(8), |p| {
            Vector3::new(0.2 * p.y, 0.0, 0.1)
        }));
        let affine = AffineTransform::from_parts(
            Matrix3::new(1.0, 0.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0),
            Vector3::new(1.0, 2.0, 3.0),
        )
        .unwrap();
        let composed = SpatialTransform::Composed {
            affine: affine.clone(),
            field: field.clone(),
        };
        let p = Vector3::new(3.3, 2.1, 4.0);
        assert_eq!(composed.map_point(&p), affine.apply(&field.apply(&p)));
        let want = affine.linear() * field.jacobian(&p);
        assert_eq!(composed.jacobian_at(&p), want);
    }
}
