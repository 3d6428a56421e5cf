use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-12;

/// A proper rotation of R³ (orthogonal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let gram = m.transpose() * m - Matrix3::identity();
        let ortho_err = gram.abs().max();
        if ortho_err > ORTHO_TOL {
            return Err(Error::domain(format!(
                "matrix is not orthogonal (max |MᵀM - I| = {ortho_err:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::domain(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Right-handed rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let axis = Unit::new_normalize(Vector3::from(axis));
        Self(
            *UnitQuaternion::from_axis_angle(&axis, angle)
                .to_rotation_matrix()
                .matrix(),
        )
    }

    /// Haar-uniform random rotation (normalized Gaussian quaternion).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
            let unit = UnitQuaternion::from_quaternion(quat);
            return Self(*unit.to_rotation_matrix().matrix());
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let out = self.0 * Vector3::from(v);
        [out[0], out[1], out[2]]
    }

    /// Rotation about a fixed point: `center + R (v - center)`.
    pub fn apply_about(&self, v: [f64; 3], center: [f64; 3]) -> [f64; 3] {
        let d = self.apply([v[0] - center[0], v[1] - center[1], v[2] - center[2]]);
        [d[0] + center[0], d[1] + center[1], d[2] + center[2]]
    }
}
