//! Gaze correction, head-pose sampling, re-posing and virtual cameras.
//!
//! Per sample: the annotated gaze is brought into the centred model frame
//! with the inverse of the recovered head pose, a new `(yaw, pitch)` is drawn
//! from a diagonal bivariate normal, mesh and gaze are rotated by
//! `R(yaw, pitch)`, and each eye gets a virtual camera placed `d_n` behind it
//! along `−z`, looking down `+z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::PixelPoint;
use crate::facemesh::TexturedMesh;
use crate::geometry::{
    apply_to_direction, rotation_from_yaw_pitch, AnglePair, GeometryError, RigidTransform,
    RotationMatrix3, Vec3,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Diagonal bivariate normal over head `(yaw, pitch)`; degrees and degrees².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPoseDistribution {
    pub mean_yaw: f64,
    pub mean_pitch: f64,
    pub var_yaw: f64,
    pub var_pitch: f64,
}

impl Default for HeadPoseDistribution {
    /// Camera below the user looking 30° up: `μ = (0°, 30°)`, `σ² = 10 deg²`.
    fn default() -> Self {
        Self {
            mean_yaw: 0.0,
            mean_pitch: 30.0,
            var_yaw: 10.0,
            var_pitch: 10.0,
        }
    }
}

impl HeadPoseDistribution {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let all = [self.mean_yaw, self.mean_pitch, self.var_yaw, self.var_pitch];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(AugmentError::InvalidParams("non-finite distribution parameter".into()));
        }
        if self.var_yaw < 0.0 || self.var_pitch < 0.0 {
            return Err(AugmentError::InvalidParams("variances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn mean(&self) -> AnglePair {
        AnglePair::new(self.mean_yaw, self.mean_pitch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    /// Normalized eye-to-camera distance, mm.
    pub d_n: f64,
    /// Normalized focal length, px.
    pub f_n: f64,
    pub patch_width: u32,
    pub patch_height: u32,
    pub seed: u64,
    pub distribution: HeadPoseDistribution,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self {
            d_n: 600.0,
            f_n: 650.0,
            patch_width: 96,
            patch_height: 64,
            seed: 42,
            distribution: HeadPoseDistribution::default(),
        }
    }
}

impl AugmentationParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.d_n.is_finite() && self.d_n > 0.0) {
            return Err(AugmentError::InvalidParams(format!("d_n must be positive, got {}", self.d_n)));
        }
        if !(self.f_n.is_finite() && self.f_n > 0.0) {
            return Err(AugmentError::InvalidParams(format!("f_n must be positive, got {}", self.f_n)));
        }
        if self.patch_width == 0 || self.patch_height == 0 {
            return Err(AugmentError::InvalidParams("patch dimensions must be positive".into()));
        }
        self.distribution.validate()
    }
}

/// Axis-aligned pinhole camera looking down `+z` from `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCamera {
    pub origin: Vec3,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl VirtualCamera {
    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Projects a world point; `None` when it is not in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<PixelPoint> {
        let c = p - self.origin;
        if !(c.z > 0.0) {
            return None;
        }
        let pp = self.principal_point();
        Some(PixelPoint::new(
            self.focal * c.x / c.z + pp.u,
            self.focal * c.y / c.z + pp.v,
        ))
    }
}

/// Brings an annotated gaze direction into the centred model frame:
/// `g_b = Rᵀ · g_a`. Translation does not act on directions.
pub fn correct_gaze_to_base(pose: &RigidTransform, gaze_actual: &Vec3) -> Result<Vec3, GeometryError> {
    apply_to_direction(&pose.rotation.inverse(), gaze_actual)
}

/// Per-sample generator derived from the master seed and the sample index,
/// so results do not depend on processing order.
pub fn sample_rng(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

/// Draws one `(yaw, pitch)` with independent normal components.
pub fn sample_head_pose<R: Rng + ?Sized>(dist: &HeadPoseDistribution, rng: &mut R) -> AnglePair {
    AnglePair::new(
        draw(dist.mean_yaw, dist.var_yaw, rng),
        draw(dist.mean_pitch, dist.var_pitch, rng),
    )
}

fn draw<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> f64 {
    if variance == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, variance.sqrt()).expect("validated variance");
    normal.sample(rng)
}

/// A re-posed sample: rotated mesh, rotated gaze and the head-pose label.
#[derive(Debug, Clone)]
pub struct AugmentedPose {
    pub mesh: TexturedMesh,
    pub gaze: Vec3,
    pub rotation: RotationMatrix3,
}

/// Rotates the centred mesh and base gaze by `R(yaw, pitch)`.
pub fn apply_augmentation(
    mesh: &TexturedMesh,
    gaze_base: &Vec3,
    angles: AnglePair,
) -> Result<AugmentedPose, GeometryError> {
    let rotation = rotation_from_yaw_pitch(angles);
    let gaze = apply_to_direction(&rotation, gaze_base)?;
    let mesh = mesh.transformed(&RigidTransform::new(rotation, Vec3::zeros()));
    Ok(AugmentedPose {
        mesh,
        gaze,
        rotation,
    })
}

/// Camera at `o_c = (e_x, e_y, e_z − d_n)`, focal `f_n`, principal point at
/// the patch centre.
pub fn make_virtual_camera(eye_pos: &Vec3, params: &AugmentationParams) -> VirtualCamera {
    VirtualCamera {
        origin: Vec3::new(eye_pos.x, eye_pos.y, eye_pos.z - params.d_n),
        focal: params.f_n,
        width: params.patch_width,
        height: params.patch_height,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_pitch;
    use crate::imaging::Image;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn mesh() -> TexturedMesh {
        TexturedMesh {
            vertices: vec![
                Vec3::new(-30.0, -20.0, -10.0),
                Vec3::new(30.0, -20.0, -12.0),
                Vec3::new(0.0, 40.0, -25.0),
                Vec3::new(5.0, 5.0, 20.0),
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            uv: vec![[0.1, 0.1], [0.9, 0.1], [0.5, 0.9], [0.5, 0.5]],
            texture: Image::new(4, 4, 1, 100).unwrap(),
            clamped_landmarks: false,
        }
    }

    #[test]
    fn identity_pose_leaves_gaze_unchanged() {
        let g = Vec3::new(0.1, -0.3, 0.9);
        assert_eq!(correct_gaze_to_base(&RigidTransform::identity(), &g).unwrap(), g);
    }

    #[test]
    fn exact_inverse_of_pitch() {
        let pose = RigidTransform::new(rotation_pitch(30.0), Vec3::new(1.0, 2.0, 600.0));
        let g_a = rotation_pitch(30.0) * Vec3::z();
        let g_b = correct_gaze_to_base(&pose, &g_a).unwrap();
        assert_relative_eq!(g_b, Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn zero_gaze_rejected() {
        assert!(correct_gaze_to_base(&RigidTransform::identity(), &Vec3::zeros()).is_err());
    }

    #[test]
    fn degenerate_distribution_returns_mean() {
        let dist = HeadPoseDistribution {
            var_yaw: 0.0,
            var_pitch: 0.0,
            ..Default::default()
        };
        let mut rng = sample_rng(7, 0);
        for _ in 0..100 {
            assert_eq!(sample_head_pose(&dist, &mut rng), AnglePair::new(0.0, 30.0));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let dist = HeadPoseDistribution::default();
        let a: Vec<_> = {
            let mut r = sample_rng(42, 3);
            (0..50).map(|_| sample_head_pose(&dist, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = sample_rng(42, 3);
            (0..50).map(|_| sample_head_pose(&dist, &mut r)).collect()
        };
        assert_eq!(a, b);
        let mut other = sample_rng(42, 4);
        assert_ne!(a[0], sample_head_pose(&dist, &mut other));
    }

    #[test]
    fn variance_check_over_ten_thousand_draws() {
        // Chi-square bound: var(s²)/σ⁴ ≈ 2/(n−1), so 10% is ~7 standard errors.
        let dist = HeadPoseDistribution::default();
        let mut rng = sample_rng(42, 0);
        let draws: Vec<_> = (0..10_000).map(|_| sample_head_pose(&dist, &mut rng)).collect();
        for pick in [|a: &AnglePair| a.yaw, |a: &AnglePair| a.pitch] {
            let xs: Vec<f64> = draws.iter().map(pick).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - 10.0).abs() < 1.0, "variance {var}");
        }
    }

    #[test]
    fn zero_angles_change_nothing() {
        let m = mesh();
        let g = Vec3::new(0.2, 0.1, -0.97);
        let out = apply_augmentation(&m, &g, AnglePair::new(0.0, 0.0)).unwrap();
        assert_eq!(out.mesh.vertices, m.vertices);
        assert_eq!(out.gaze, g);
        assert_eq!(out.mesh.uv, m.uv);
    }

    #[test]
    fn pitch_thirty_rotates_every_vertex() {
        let m = mesh();
        let out = apply_augmentation(&m, &Vec3::z(), AnglePair::new(0.0, 30.0)).unwrap();
        let (s, c) = 30f64.to_radians().sin_cos();
        for (v, w) in m.vertices.iter().zip(&out.mesh.vertices) {
            let expected = Vec3::new(v.x, c * v.y - s * v.z, s * v.y + c * v.z);
            assert_relative_eq!(*w, expected, epsilon = 1e-12);
        }
        assert_relative_eq!(out.gaze.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.gaze, Vec3::new(0.0, -0.5, c), epsilon = 1e-12);
    }

    #[test]
    fn virtual_camera_origin() {
        let p = AugmentationParams::default();
        let cam = make_virtual_camera(&Vec3::new(10.0, 20.0, 500.0), &p);
        assert_eq!(cam.origin, Vec3::new(10.0, 20.0, -100.0));
        let cam = make_virtual_camera(&Vec3::zeros(), &p);
        assert_eq!(cam.origin, Vec3::new(0.0, 0.0, -600.0));
        assert_eq!(cam.focal, 650.0);
        assert_eq!(cam.principal_point(), PixelPoint::new(48.0, 32.0));
    }

    #[test]
    fn eye_projects_to_patch_centre() {
        let p = AugmentationParams::default();
        let eye = Vec3::new(-31.7, 12.25, 43.9);
        let cam = make_virtual_camera(&eye, &p);
        let px = cam.project(&eye).unwrap();
        assert!((px.u - 48.0).abs() < 1e-6 && (px.v - 32.0).abs() < 1e-6);
    }

    #[test]
    fn params_validation() {
        assert!(AugmentationParams::default().validate().is_ok());
        let bad = AugmentationParams { d_n: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AugmentationParams {
            distribution: HeadPoseDistribution { var_pitch: -1.0, ..Default::default() },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn correction_round_trip(
            a in -3.1..3.1f64, b in -1.5..1.5f64, c in -3.1..3.1f64,
            x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
        ) {
            let g = Vec3::new(x, y, z);
            prop_assume!(g.norm() > 1e-3);
            let pose = RigidTransform::new(Rotation3::from_euler_angles(a, b, c), Vec3::new(5.0, 1.0, 600.0));
            let back = pose.rotation * correct_gaze_to_base(&pose, &g).unwrap();
            prop_assert!((back - g).norm() < 1e-9);
        }

        #[test]
        fn augmentation_is_rigid(yaw in -60.0..60.0f64, pitch in -60.0..60.0f64) {
            let m = mesh();
            let out = apply_augmentation(&m, &Vec3::z(), AnglePair::new(yaw, pitch)).unwrap();
            for i in 0..m.vertices.len() {
                for j in 0..m.vertices.len() {
                    let before = (m.vertices[i] - m.vertices[j]).norm();
                    let after = (out.mesh.vertices[i] - out.mesh.vertices[j]).norm();
                    prop_assert!((before - after).abs() < 1e-9);
                }
            }
        }
    }
}
