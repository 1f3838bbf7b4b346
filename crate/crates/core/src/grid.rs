//! Sampling lattices and the image containers defined on them.
//!
//! Voxel `(i, j, k)` sits at world position `origin + direction * diag(spacing) * (i, j, k)`
//! and samples are stored with `x` fastest, then `y`, then `z`. Two-dimensional images
//! are plain 3D images with `dims[2] == 1`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Geometry of a regular sampling lattice in world (mm) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: Vector3<f64>,
    direction: Matrix3<f64>,
}

impl GridSpec {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Vector3<f64>,
        direction: Matrix3<f64>,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGrid(format!(
                "dims must be >= 1, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        let gram = direction.transpose() * direction;
        let err = (gram - Matrix3::identity()).abs().max();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidGrid(format!(
                "direction is not orthonormal (|D'D - I| = {err:e})"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            direction,
        })
    }

    /// Grid with identity direction.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, Vector3::from(origin), Matrix3::identity())
    }

    /// Single-slice grid (`dims_z = 1`, `spacing_z = 1 mm`).
    pub fn planar(dims: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Result<Self> {
        Self::axis_aligned(
            [dims[0], dims[1], 1],
            [spacing[0], spacing[1], 1.0],
            [origin[0], origin[1], 0.0],
        )
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn direction(&self) -> Matrix3<f64> {
        self.direction
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `direction * diag(spacing)`: the linear part of the voxel-to-world map.
    pub fn index_to_world_matrix(&self) -> Matrix3<f64> {
        self.direction * Matrix3::from_diagonal(&Vector3::from(self.spacing))
    }

    pub fn index_to_world(&self, index: &Vector3<f64>) -> Vector3<f64> {
        let scaled = Vector3::new(
            index.x * self.spacing[0],
            index.y * self.spacing[1],
            index.z * self.spacing[2],
        );
        self.origin + self.direction * scaled
    }

    pub fn world_to_index(&self, point: &Vector3<f64>) -> Vector3<f64> {
        let local = self.direction.transpose() * (point - self.origin);
        Vector3::new(
            local.x / self.spacing[0],
            local.y / self.spacing[1],
            local.z / self.spacing[2],
        )
    }

    /// World position of the centre of voxel `(i, j, k)`.
    pub fn voxel_center(&self, ijk: [usize; 3]) -> Vector3<f64> {
        self.index_to_world(&Vector3::new(ijk[0] as f64, ijk[1] as f64, ijk[2] as f64))
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn voxel_coords(&self, linear: usize) -> [usize; 3] {
        let i = linear % self.dims[0];
        let rest = linear / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// True when the two grids describe the same lattice within `tol` (mm).
    pub fn approx_eq(&self, other: &GridSpec, tol: f64) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(a, b)| (a - b).abs() <= tol)
            && (self.origin - other.origin).abs().max() <= tol
            && (self.direction - other.direction).abs().max() <= tol
    }

    /// Grid covering the same field of view as `self` with a different voxel size.
    ///
    /// The outer voxel faces of both grids coincide along every axis, so a
    /// `k`-fold coarser grid has its voxel `j` covering fine voxels `k*j .. k*j + k - 1`.
    pub fn with_spacing(&self, dims: [usize; 3], spacing: [f64; 3]) -> Result<GridSpec> {
        let shift = Vector3::new(
            0.5 * (spacing[0] - self.spacing[0]),
            0.5 * (spacing[1] - self.spacing[1]),
            0.5 * (spacing[2] - self.spacing[2]),
        );
        GridSpec::new(
            dims,
            spacing,
            self.origin + self.direction * shift,
            self.direction,
        )
    }
}

/// Scalar samples on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    grid: GridSpec,
    data: Vec<f64>,
}

impl ScalarImage {
    pub fn new(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::SampleCount {
                expected: grid.len(),
                actual: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: GridSpec, value: f64) -> Self {
        let data = vec![value; grid.len()];
        Self { grid, data }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([usize; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|n| f(grid.voxel_coords(n))).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.linear_index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let n = self.grid.linear_index(i, j, k);
        self.data[n] = value;
    }

    /// Min and max over finite samples, `None` if there are none.
    pub fn finite_range(&self) -> Option<(f64, f64)> {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

/// Per-voxel 3-vectors (mm) on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorImage {
    grid: GridSpec,
    data: Vec<Vector3<f64>>,
}

impl VectorImage {
    pub fn new(grid: GridSpec, data: Vec<Vector3<f64>>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::SampleCount {
                expected: grid.len(),
                actual: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let data = vec![Vector3::zeros(); grid.len()];
        Self { grid, data }
    }

    /// Samples `f` at every voxel centre (world coordinates).
    pub fn from_world_fn(grid: GridSpec, mut f: impl FnMut(&Vector3<f64>) -> Vector3<f64>) -> Self {
        let data = (0..grid.len())
            .map(|n| f(&grid.voxel_center(grid.voxel_coords(n))))
            .collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Vector3<f64>] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.data[self.grid.linear_index(i, j, k)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn unit() -> GridSpec {
        GridSpec::axis_aligned([10, 10, 10], [1.0, 1.0, 1.0], [0.0; 3]).unwrap()
    }

    #[test]
    fn identity_geometry() {
        let p = unit().index_to_world(&Vector3::new(2.0, 3.0, 4.0));
        assert_eq!(p, Vector3::new(2.0, 3.0, 4.0));
    }

    #[test]
    fn origin_and_spacing() {
        let g = GridSpec::axis_aligned([4, 4, 4], [3.0; 3], [10.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            g.index_to_world(&Vector3::new(1.0, 0.0, 0.0)),
            Vector3::new(13.0, 0.0, 0.0)
        );
        assert_eq!(
            g.world_to_index(&Vector3::new(13.0, 0.0, 0.0)),
            Vector3::new(1.0, 0.0, 0.0)
        );

        let g = GridSpec::axis_aligned([4, 4, 4], [3.0; 3], [0.0; 3]).unwrap();
        assert_eq!(
            g.world_to_index(&Vector3::new(1.5, 0.0, 0.0)),
            Vector3::new(0.5, 0.0, 0.0)
        );
    }

    #[test]
    fn anisotropic_spacing() {
        let g = GridSpec::axis_aligned([4, 4, 4], [1.1, 1.0, 1.0], [0.0; 3]).unwrap();
        let p = g.index_to_world(&Vector3::new(2.0, 0.0, 0.0));
        assert!((p - Vector3::new(2.2, 0.0, 0.0)).norm() < 1e-15);
        let back = g.world_to_index(&p);
        assert!((back - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::axis_aligned([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(GridSpec::axis_aligned([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        let shear = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(GridSpec::new([1, 1, 1], [1.0; 3], Vector3::zeros(), shear).is_err());
    }

    #[test]
    fn linearization_x_fastest() {
        let g = GridSpec::axis_aligned([3, 4, 5], [1.0; 3], [0.0; 3]).unwrap();
        let img = ScalarImage::from_fn(g.clone(), |[i, j, k]| (100 * k + 10 * j + i) as f64);
        for k in 0..5 {
            for j in 0..4 {
                for i in 0..3 {
                    assert_eq!(
                        img.data()[i + 3 * (j + 4 * k)],
                        (100 * k + 10 * j + i) as f64
                    );
                    assert_eq!(g.voxel_coords(g.linear_index(i, j, k)), [i, j, k]);
                }
            }
        }
    }

    #[test]
    fn sample_count_checked() {
        let err = ScalarImage::new(unit(), vec![0.0; 999]).unwrap_err();
        assert!(matches!(
            err,
            Error::SampleCount {
                expected: 1000,
                actual: 999
            }
        ));
    }

    #[test]
    fn same_field_of_view_coarse_grid() {
        let fine = GridSpec::planar([63, 63], [1.0, 1.0], [0.0, 0.0]).unwrap();
        let coarse = fine.with_spacing([21, 21, 1], [3.0, 3.0, 1.0]).unwrap();
        assert_eq!(coarse.origin(), Vector3::new(1.0, 1.0, 0.0));
    }

    proptest! {
        #[test]
        fn world_index_round_trip(
            axis in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            angle in -3.1f64..3.1,
            spacing in (0.2f64..5.0, 0.2f64..5.0, 0.2f64..5.0),
            origin in (-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0),
            idx in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
        ) {
            let axis = Vector3::new(axis.0, axis.1, axis.2 + 1e-3);
            let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let g = GridSpec::new(
                [8, 8, 8],
                [spacing.0, spacing.1, spacing.2],
                Vector3::new(origin.0, origin.1, origin.2),
                *rot.matrix(),
            ).unwrap();
            let index = Vector3::new(idx.0, idx.1, idx.2);
            let p = g.index_to_world(&index);
            prop_assert!((g.world_to_index(&p) - index).norm() < 1e-10);
            let back = g.index_to_world(&g.world_to_index(&p));
            prop_assert!((back - p).norm() < 1e-10);
        }
    }
}
