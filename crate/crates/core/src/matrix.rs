//! Symmetric 3x3 algebra for PSF covariances.
//!
//! The eigensolver is the non-iterative trigonometric method (eigenvalues from the
//! characteristic cubic, eigenvectors from cross products of the shifted rows, the
//! middle one found in the orthogonal complement of an already known eigenvector).
//! When the deviatoric part of the matrix is tiny relative to its magnitude the
//! cubic is ill-conditioned and a cyclic Jacobi sweep is used instead.
//!
//! On top of it sit the two closed-form answers to "find an SPSD increment `P` so
//! that `S + P` covers `T`": the Frobenius-closest increment and the increment that
//! minimises `det(S + P)` subject to `S + P >= S` and `S + P >= T`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Eigenvalues down to this (mm^2) still count as positive semi-definite.
pub const PSD_TOL: f64 = 1e-9;

/// Below this eigenvalue a target covariance cannot be whitened.
pub const DEGENERATE_EIG: f64 = 1e-12;

/// Below this `|det A|` a linear map is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// Squared deviatoric norm (relative to the largest entry) under which the
/// analytic path hands over to Jacobi.
const RELATIVE_DISCRIMINANT: f64 = 1e-12;

/// Symmetric positive semi-definite 3x3 matrix (mm^2), stored as its six unique
/// entries `[xx, xy, xz, yy, yz, zz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3([f64; 6]);

impl Default for Covariance3 {
    fn default() -> Self {
        Self::ZERO
    }
}

impl Covariance3 {
    pub const ZERO: Covariance3 = Covariance3([0.0; 6]);

    /// Validates a symmetric matrix. The input is symmetrised first; eigenvalues in
    /// `[-PSD_TOL, 0)` are clamped to zero and anything more negative is rejected.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let sym = symmetrize(m);
        if sym.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPsd { min_eig: f64::NAN });
        }
        if is_offdiag_zero(&sym) {
            let d = [sym[(0, 0)], sym[(1, 1)], sym[(2, 2)]];
            return Self::diagonal(d);
        }
        let eig = eig_sym3(&sym);
        let min_eig = eig.values[2];
        if min_eig < -PSD_TOL {
            return Err(Error::NotPsd { min_eig });
        }
        if min_eig < 0.0 {
            return Ok(Self::from_sym(&eig.reconstruct_clamped()));
        }
        Ok(Self::from_sym(&sym))
    }

    pub fn diagonal(d: [f64; 3]) -> Result<Self> {
        let min = d[0].min(d[1]).min(d[2]);
        if !min.is_finite() || min < -PSD_TOL {
            return Err(Error::NotPsd { min_eig: min });
        }
        Ok(Covariance3([
            d[0].max(0.0),
            0.0,
            0.0,
            d[1].max(0.0),
            0.0,
            d[2].max(0.0),
        ]))
    }

    pub fn isotropic(variance: f64) -> Result<Self> {
        Self::diagonal([variance; 3])
    }

    /// Projects onto the PSD cone by zeroing every negative eigenvalue.
    pub fn project_psd(m: &Matrix3<f64>) -> Self {
        let sym = symmetrize(m);
        if is_offdiag_zero(&sym) {
            return Covariance3([
                sym[(0, 0)].max(0.0),
                0.0,
                0.0,
                sym[(1, 1)].max(0.0),
                0.0,
                sym[(2, 2)].max(0.0),
            ]);
        }
        let eig = eig_sym3(&sym);
        if eig.values[2] >= 0.0 {
            Self::from_sym(&sym)
        } else {
            Self::from_sym(&eig.reconstruct_clamped())
        }
    }

    fn from_sym(m: &Matrix3<f64>) -> Self {
        Covariance3([
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 2)],
        ])
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    pub fn entries(&self) -> [f64; 6] {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        const MAP: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        self.0[MAP[row][col]]
    }

    pub fn diag(&self) -> [f64; 3] {
        [self.0[0], self.0[3], self.0[5]]
    }

    pub fn is_diagonal(&self) -> bool {
        self.0[1] == 0.0 && self.0[2] == 0.0 && self.0[4] == 0.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn eigen(&self) -> SymEigen3 {
        eig_sym3(&self.to_matrix())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_diagonal() {
            let d = self.diag();
            return d[0].min(d[1]).min(d[2]);
        }
        self.eigen().values[2]
    }

    pub fn det(&self) -> f64 {
        self.to_matrix().determinant()
    }

    pub fn max_abs_diff(&self, other: &Covariance3) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Add for Covariance3 {
    type Output = Covariance3;

    fn add(self, rhs: Covariance3) -> Covariance3 {
        let mut out = self.0;
        out.iter_mut().zip(rhs.0.iter()).for_each(|(a, b)| *a += b);
        Covariance3(out)
    }
}

/// Spectral decomposition `M = Z diag(values) Z^T` with eigenvalues descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen3 {
    pub values: [f64; 3],
    /// Eigenvectors as columns, orthonormal.
    pub vectors: Matrix3<f64>,
}

impl SymEigen3 {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        self.reconstruct_with(|v| v)
    }

    pub fn reconstruct_clamped(&self) -> Matrix3<f64> {
        self.reconstruct_with(|v| v.max(0.0))
    }

    /// `Z diag(f(values)) Z^T`, symmetrised.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix3<f64> {
        let d = Vector3::new(f(self.values[0]), f(self.values[1]), f(self.values[2]));
        let z = &self.vectors;
        symmetrize(&(z * Matrix3::from_diagonal(&d) * z.transpose()))
    }
}

pub(crate) fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn is_offdiag_zero(m: &Matrix3<f64>) -> bool {
    m[(0, 1)] == 0.0 && m[(0, 2)] == 0.0 && m[(1, 2)] == 0.0
}

/// Eigendecomposition of a symmetric 3x3 matrix (only the upper triangle is read,
/// mirrored from the average of both triangles).
///
/// Eigenvalues come out descending. Each eigenvector is flipped so that its
/// largest-magnitude component is positive.
pub fn eig_sym3(m: &Matrix3<f64>) -> SymEigen3 {
    let a = symmetrize(m);
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        let values = if scale == 0.0 {
            [0.0; 3]
        } else {
            [f64::NAN; 3]
        };
        return SymEigen3 {
            values,
            vectors: Matrix3::identity(),
        };
    }
    let a = a / scale;

    let (mut values, mut vectors) = if is_offdiag_zero(&a) {
        ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], Matrix3::identity())
    } else {
        let q = a.trace() / 3.0;
        let b = a - Matrix3::identity() * q;
        let p2 = (b[(0, 0)].powi(2)
            + b[(1, 1)].powi(2)
            + b[(2, 2)].powi(2)
            + 2.0 * (a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2)))
            / 6.0;
        if p2 < RELATIVE_DISCRIMINANT {
            jacobi(&a)
        } else {
            let (_, v) = analytic(&a, q, &b, p2.sqrt());
            // acos loses half the digits near repeated roots; polish in the eigenbasis.
            let (values, w) = jacobi(&symmetrize(&(v.transpose() * a * v)));
            (values, v * w)
        }
    };

    values.iter_mut().for_each(|v| *v *= scale);
    sort_descending(&mut values, &mut vectors);
    for c in 0..3 {
        let col = vectors.column(c);
        let mut best = 0;
        for r in 1..3 {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            vectors.set_column(c, &(-vectors.column(c)));
        }
    }
    SymEigen3 { values, vectors }
}

fn analytic(a: &Matrix3<f64>, q: f64, b: &Matrix3<f64>, p: f64) -> ([f64; 3], Matrix3<f64>) {
    let c00 = b[(1, 1)] * b[(2, 2)] - a[(1, 2)] * a[(1, 2)];
    let c01 = a[(0, 1)] * b[(2, 2)] - a[(1, 2)] * a[(0, 2)];
    let c02 = a[(0, 1)] * a[(1, 2)] - b[(1, 1)] * a[(0, 2)];
    let det = (b[(0, 0)] * c00 - a[(0, 1)] * c01 + a[(0, 2)] * c02) / (p * p * p);
    let half_det = (0.5 * det).clamp(-1.0, 1.0);
    let angle = half_det.acos() / 3.0;
    let beta2 = 2.0 * angle.cos();
    let beta0 = 2.0 * (angle + 2.0 * PI / 3.0).cos();
    let beta1 = -(beta0 + beta2);
    let eval = [q + p * beta0, q + p * beta1, q + p * beta2];

    // Start from whichever extreme eigenvalue is better separated from the middle one.
    let (v0, v1, v2) = if half_det >= 0.0 {
        let v2 = eigenvector_from_rows(a, eval[2]);
        let v1 = eigenvector_in_complement(a, &v2, eval[1]);
        (v1.cross(&v2), v1, v2)
    } else {
        let v0 = eigenvector_from_rows(a, eval[0]);
        let v1 = eigenvector_in_complement(a, &v0, eval[1]);
        (v0, v1, v0.cross(&v1))
    };
    (eval, Matrix3::from_columns(&[v0, v1, v2]))
}

/// Unit vector orthogonal to two rows of `A - eval I` (largest cross product wins).
fn eigenvector_from_rows(a: &Matrix3<f64>, eval: f64) -> Vector3<f64> {
    let shifted = a - Matrix3::identity() * eval;
    let r0 = shifted.row(0).transpose();
    let r1 = shifted.row(1).transpose();
    let r2 = shifted.row(2).transpose();
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .copied()
        .unwrap_or_else(Vector3::x);
    let n = best.norm();
    if n > 0.0 {
        best / n
    } else {
        Vector3::x()
    }
}

fn orthogonal_complement(w: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = if w.x.abs() > w.y.abs() {
        let inv = 1.0 / (w.x * w.x + w.z * w.z).sqrt();
        Vector3::new(-w.z * inv, 0.0, w.x * inv)
    } else {
        let inv = 1.0 / (w.y * w.y + w.z * w.z).sqrt();
        Vector3::new(0.0, w.z * inv, -w.y * inv)
    };
    let v = w.cross(&u);
    (u, v)
}

/// Eigenvector for `eval` restricted to the plane orthogonal to the known eigenvector `w`.
fn eigenvector_in_complement(a: &Matrix3<f64>, w: &Vector3<f64>, eval: f64) -> Vector3<f64> {
    let (u, v) = orthogonal_complement(w);
    let au = a * u;
    let av = a * v;
    let mut m00 = u.dot(&au) - eval;
    let mut m01 = u.dot(&av);
    let mut m11 = v.dot(&av) - eval;
    let (abs00, abs01, abs11) = (m00.abs(), m01.abs(), m11.abs());
    if abs00 >= abs11 {
        if abs00.max(abs01) > 0.0 {
            if abs00 >= abs01 {
                m01 /= m00;
                m00 = 1.0 / (1.0 + m01 * m01).sqrt();
                m01 *= m00;
            } else {
                m00 /= m01;
                m01 = 1.0 / (1.0 + m00 * m00).sqrt();
                m00 *= m01;
            }
            u * m01 - v * m00
        } else {
            u
        }
    } else if abs11.max(abs01) > 0.0 {
        if abs11 >= abs01 {
            m01 /= m11;
            m11 = 1.0 / (1.0 + m01 * m01).sqrt();
            m01 *= m11;
        } else {
            m11 /= m01;
            m01 = 1.0 / (1.0 + m11 * m11).sqrt();
            m11 *= m01;
        }
        u * m11 - v * m01
    } else {
        u
    }
}

/// Cyclic Jacobi; converges in a handful of sweeps for 3x3.
fn jacobi(m: &Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let mut a = *m;
    let mut v = Matrix3::<f64>::identity();
    for _ in 0..50 {
        let off = a[(0, 1)].abs() + a[(0, 2)].abs() + a[(1, 2)].abs();
        if off <= f64::EPSILON * f64::EPSILON {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::<f64>::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], v)
}

fn sort_descending(values: &mut [f64; 3], vectors: &mut Matrix3<f64>) {
    for i in 0..2 {
        for j in 0..(2 - i) {
            if values[j] < values[j + 1] {
                values.swap(j, j + 1);
                vectors.swap_columns(j, j + 1);
            }
        }
    }
}

/// Symmetric PSD square root.
pub fn sqrt_psd(c: &Covariance3) -> Matrix3<f64> {
    c.eigen().reconstruct_with(|v| v.max(0.0).sqrt())
}

/// SPSD increment `P` minimising `||(S + P) - T||_F`: the eigenvalue clamp of `T - S`.
///
/// The result satisfies `S + P >= S` and `S + P >= T`.
pub fn closest_spsd_frobenius(s: &Covariance3, t: &Covariance3) -> Covariance3 {
    let diff = t.to_matrix() - s.to_matrix();
    Covariance3::project_psd(&diff)
}

/// Minimum-determinant `Q` with `Q >= S` and `Q >= T`.
///
/// Whitening by `T^{-1/2}` turns the constraints into `Q' >= I` and `Q' >= S'''`, whose
/// optimum is `Z(S''') max(I, Lambda(S''')) Z(S''')^T`; undoing the whitening gives
/// `Q = T^{1/2} Z max(I, Lambda) Z^T T^{1/2}`. Requires `T` positive definite.
pub fn min_volume_dominating(s: &Covariance3, t: &Covariance3) -> Result<Covariance3> {
    let et = t.eigen();
    let min_eig = et.values[2];
    if !(min_eig > DEGENERATE_EIG) {
        return Err(Error::DegenerateTarget { min_eig });
    }
    let root = et.reconstruct_with(f64::sqrt);
    let inv_root = et.reconstruct_with(|v| 1.0 / v.sqrt());
    let whitened = symmetrize(&(inv_root * s.to_matrix() * inv_root));
    let inner = eig_sym3(&whitened).reconstruct_with(|v| v.max(1.0));
    Ok(Covariance3::project_psd(&(root * inner * root)))
}

/// `A Σ A^T`.
pub fn transform_covariance(cov: &Covariance3, a: &Matrix3<f64>) -> Covariance3 {
    Covariance3::project_psd(&(a * cov.to_matrix() * a.transpose()))
}

/// `A^{-1} Σ A^{-T}`; fails when `|det A| < SINGULAR_DET`.
pub fn transform_covariance_inverse(cov: &Covariance3, a: &Matrix3<f64>) -> Result<Covariance3> {
    let det = a.determinant();
    if !(det.abs() >= SINGULAR_DET) {
        return Err(Error::SingularMatrix { det });
    }
    let inv = a.try_inverse().ok_or(Error::SingularMatrix { det })?;
    Ok(transform_covariance(cov, &inv))
}
