//! SE(3) transforms, Euler/quaternion conversions and covariance construction.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};

/// Rigid transform: `y = R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Se3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Se3 {
    pub fn identity() -> Self {
        Se3 {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Se3 {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    /// Checks R is a proper rotation (RᵀR = I within 1e-6, det +1).
    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().all(|v| v.is_finite())
            || !self.translation.iter().all(|v| v.is_finite())
        {
            return Err(SplatError::NonFinite("se3"));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if err > 1e-6 {
            return Err(SplatError::InvalidArgument(format!(
                "rotation not orthonormal (residual {err:.3e})"
            )));
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(SplatError::InvalidArgument(
                "rotation determinant is not +1".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Se3 {
        let rt = self.rotation.transpose();
        Se3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// `compose_se3(a, b)` applies `b` first, then `a`: equivalent to the 4x4
/// homogeneous product `A * B`.
pub fn compose_se3(a: &Se3, b: &Se3) -> Se3 {
    Se3 {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

/// Object pose as an unconstrained 6-vector: Euler angles (yaw, pitch, roll)
/// plus translation. This is the parameterization the trajectory ODE
/// integrates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// (yaw, pitch, roll) in radians, applied as Rz(yaw) * Ry(pitch) * Rx(roll).
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn to_se3(&self) -> Se3 {
        Se3 {
            rotation: euler_to_matrix(&self.rotation),
            translation: self.translation,
        }
    }
}

/// Rz(yaw) * Ry(pitch) * Rx(roll).
pub fn euler_to_matrix(ypr: &Vector3<f64>) -> Matrix3<f64> {
    let (yaw, pitch, roll) = (ypr.x, ypr.y, ypr.z);
    let rz = Matrix3::new(
        yaw.cos(),
        -yaw.sin(),
        0.0,
        yaw.sin(),
        yaw.cos(),
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let ry = Matrix3::new(
        pitch.cos(),
        0.0,
        pitch.sin(),
        0.0,
        1.0,
        0.0,
        -pitch.sin(),
        0.0,
        pitch.cos(),
    );
    let rx = Matrix3::new(
        1.0,
        0.0,
        0.0,
        0.0,
        roll.cos(),
        -roll.sin(),
        0.0,
        roll.sin(),
        roll.cos(),
    );
    rz * ry * rx
}

/// Inverse of [`euler_to_matrix`]. Stable away from the pitch = ±π/2 gimbal lock.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> Vector3<f64> {
    let pitch = (-r[(2, 0)]).asin();
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    Vector3::new(yaw, pitch, roll)
}

/// 3DGS covariance: Σ = R S Sᵀ Rᵀ with S = diag(exp(log_scale)).
pub fn build_covariance(
    log_scale: &Vector3<f64>,
    rotation: &UnitQuaternion<f64>,
) -> Result<Matrix3<f64>> {
    if !log_scale.iter().all(|v| v.is_finite()) || !rotation.coords.iter().all(|v| v.is_finite()) {
        return Err(SplatError::NonFinite("build_covariance input"));
    }
    let r = rotation.to_rotation_matrix();
    let s2 = Matrix3::from_diagonal(&Vector3::new(
        (2.0 * log_scale.x).exp(),
        (2.0 * log_scale.y).exp(),
        (2.0 * log_scale.z).exp(),
    ));
    let cov = r.matrix() * s2 * r.matrix().transpose();
    // Symmetrize away the last few ulps of drift.
    Ok((cov + cov.transpose()) * 0.5)
}

/// Maps frame index to normalized scene time in [-1, 1].
/// A single-frame scene maps to t = 0.
pub fn normalize_time(frame_index: usize, frame_count: usize) -> Result<f64> {
    if frame_count < 1 {
        return Err(SplatError::InvalidArgument("frame_count must be >= 1".into()));
    }
    if frame_index >= frame_count {
        return Err(SplatError::IndexOutOfRange {
            index: frame_index,
            len: frame_count,
        });
    }
    if frame_count == 1 {
        return Ok(0.0);
    }
    Ok(-1.0 + 2.0 * frame_index as f64 / (frame_count - 1) as f64)
}
