//! Rotations, rigid transforms and gaze-direction helpers.
//!
//! Angles cross the public API in degrees and are converted to radians
//! internally. The camera frame follows the usual computer-vision convention:
//! `+x` right, `+y` down, `+z` forward along the optical axis.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("zero-length direction vector")]
    ZeroVector,
    #[error("vector has non-finite components")]
    NonFinite,
}

/// 3D point (millimetres) or direction (unitless).
pub type Vec3 = Vector3<f64>;

/// Proper rotation matrix (orthonormal, determinant +1).
pub type RotationMatrix3 = Rotation3<f64>;

/// Yaw and pitch of a head pose or gaze direction, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AnglePair {
    pub yaw: f64,
    pub pitch: f64,
}

impl AnglePair {
    pub fn new(yaw: f64, pitch: f64) -> Self {
        Self { yaw, pitch }
    }
}

/// Element of SE(3): `x ↦ R·x + t`, translation in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: RotationMatrix3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: RotationMatrix3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix3::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(RotationMatrix3::identity(), translation)
    }

    /// Maps a point (homogeneous weight 1).
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// `(Rᵀ, −Rᵀt)`.
    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.inverse();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Elementary rotation about the lateral (`x`) axis by `pitch_deg`.
pub fn rotation_pitch(pitch_deg: f64) -> RotationMatrix3 {
    let (s, c) = pitch_deg.to_radians().sin_cos();
    #[rustfmt::skip]
    let m = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, c,   -s,
        0.0, s,   c,
    );
    Rotation3::from_matrix_unchecked(m)
}

/// Elementary rotation about the vertical (`y`) axis by `yaw_deg`.
pub fn rotation_yaw(yaw_deg: f64) -> RotationMatrix3 {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    #[rustfmt::skip]
    let m = Matrix3::new(
        c,   0.0, s,
        0.0, 1.0, 0.0,
        -s,  0.0, c,
    );
    Rotation3::from_matrix_unchecked(m)
}

/// Head-pose rotation `R(y, p) = R_pitch(p) · R_yaw(y)`.
///
/// Roll is not represented. Applied to `+z` the result has yaw `y` and
/// pitch `p` as measured by [`direction_to_yaw_pitch`].
pub fn rotation_from_yaw_pitch(angles: AnglePair) -> RotationMatrix3 {
    rotation_pitch(angles.pitch) * rotation_yaw(angles.yaw)
}

/// Recovers `(yaw, pitch)` from a rotation assumed to have the
/// `R_pitch · R_yaw` form. Any roll component is silently discarded: the
/// angles are those of `R·ẑ`.
pub fn yaw_pitch_from_rotation(rotation: &RotationMatrix3) -> AnglePair {
    let m = rotation.matrix();
    // R·ẑ = (sin y, −sin p cos y, cos p cos y)
    let yaw = m[(0, 2)].clamp(-1.0, 1.0).asin();
    let pitch = (-m[(1, 2)]).atan2(m[(2, 2)]);
    AnglePair::new(yaw.to_degrees(), pitch.to_degrees())
}

/// Yaw/pitch of a direction: `yaw = asin(x/‖g‖)`, `pitch = atan2(−y, z)`.
///
/// Consistent with [`rotation_from_yaw_pitch`]: the rotated optical axis
/// `R(y,p)·ẑ = (sin y, −sin p cos y, cos p cos y)` maps back to `(y, p)`.
pub fn direction_to_yaw_pitch(dir: &Vec3) -> Result<AnglePair, GeometryError> {
    let unit = unit_direction(dir)?;
    let yaw = unit.x.clamp(-1.0, 1.0).asin();
    let pitch = (-unit.y).atan2(unit.z);
    Ok(AnglePair::new(yaw.to_degrees(), pitch.to_degrees()))
}

pub fn apply_to_points(transform: &RigidTransform, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| transform.transform_point(p)).collect()
}

/// Rotates a direction. Directions carry homogeneous weight 0, so any
/// translation is ignored by construction.
pub fn apply_to_direction(rotation: &RotationMatrix3, dir: &Vec3) -> Result<Vec3, GeometryError> {
    check_nonzero(dir)?;
    Ok(rotation * dir)
}

pub fn inverse(transform: &RigidTransform) -> RigidTransform {
    transform.inverse()
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

/// Angular error in degrees, `acos(|g·gₑ| / (‖g‖‖gₑ‖))`.
///
/// The absolute value folds obtuse angles, so the result lies in `[0, 90]`
/// and antiparallel vectors score zero. Evaluated as
/// `atan2(‖g × gₑ‖, |g·gₑ|)`, which stays accurate for tiny angles.
pub fn angular_error(g: &Vec3, g_e: &Vec3) -> Result<f64, GeometryError> {
    check_nonzero(g)?;
    check_nonzero(g_e)?;
    let (a, b) = (g / g.norm(), g_e / g_e.norm());
    Ok(a.cross(&b).norm().atan2(a.dot(&b).abs()).to_degrees())
}

/// Geodesic distance between two rotations, degrees.
pub fn rotation_angle_between(a: &RotationMatrix3, b: &RotationMatrix3) -> f64 {
    let m = (a.inverse() * b).into_inner();
    let sin = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm() / 2.0;
    let cos = (m.trace() - 1.0) / 2.0;
    sin.atan2(cos).to_degrees()
}

pub fn unit_direction(dir: &Vec3) -> Result<Vec3, GeometryError> {
    check_nonzero(dir)?;
    Ok(dir / dir.norm())
}

fn check_nonzero(v: &Vec3) -> Result<(), GeometryError> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if v.norm_squared() == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    Ok(())
}

/// Rodrigues' formula for an axis-angle vector (radians).
pub(crate) fn exp_so3(omega: &Vec3) -> RotationMatrix3 {
    Rotation3::new(*omega)
}

pub(crate) fn skew(v: &Vec3) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0,  -v.z, v.y,
        v.z,  0.0,  -v.x,
        -v.y, v.x,  0.0,
    );
    m
}
