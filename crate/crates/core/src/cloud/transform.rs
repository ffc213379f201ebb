use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Proper rigid motion `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformJson", into = "TransformJson")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::param("transform has non-finite entries"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if ortho > ORTHONORMAL_TOLERANCE || (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::param(format!(
                "not a proper rotation (orthonormality error {ortho:.3e}, det {det})"
            )));
        }
        Ok(Self { rotation, translation })
    }

    /// Skips validation. Callers guarantee a proper rotation (SVD products, compositions).
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::from_parts(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), translation)
    }

    /// Extrinsic X-Y-Z rotation, i.e. `R = Rz(z) Ry(y) Rx(x)`.
    pub fn from_euler_xyz(x: f64, y: f64, z: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_euler_angles(x, y, z).into_inner();
        Self::from_parts(rotation, translation)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_scaled_axis(axis.normalize() * angle).into_inner();
        Self::from_parts(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        Self::from_parts(
            self.rotation * first.rotation,
            self.rotation * first.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::from_parts(rt, -(rt * self.translation))
    }

    /// Geodesic angle (radians) between the two rotations.
    pub fn rotation_error(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let sin = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm()
            / 2.0;
        sin.atan2((rel.trace() - 1.0) / 2.0)
    }

    pub fn translation_error(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Row-major `[R | t]`.
    pub fn to_rows(&self) -> [[f64; 4]; 3] {
        let mut rows = [[0.0; 4]; 3];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().take(3).enumerate() {
                *v = self.rotation[(r, c)];
            }
            row[3] = self.translation[r];
        }
        rows
    }

    pub fn from_rows(rows: &[[f64; 4]; 3]) -> Result<Self> {
        let rotation = Matrix3::from_fn(|r, c| rows[r][c]);
        let translation = Vector3::new(rows[0][3], rows[1][3], rows[2][3]);
        Self::new(rotation, translation)
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// JSON form: `{"matrix": [[r00, r01, r02, t0], [..], [..]]}`.
#[derive(Serialize, Deserialize)]
struct TransformJson {
    matrix: [[f64; 4]; 3],
}

impl TryFrom<TransformJson> for RigidTransform {
    type Error = Error;

    fn try_from(value: TransformJson) -> Result<Self> {
        Self::from_rows(&value.matrix)
    }
}

impl From<RigidTransform> for TransformJson {
    fn from(value: RigidTransform) -> Self {
        Self {
            matrix: value.to_rows(),
        }
    }
}
