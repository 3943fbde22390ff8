//! Evaluation-time data normalization and gaze denormalization.
//!
//! A real camera frame is virtually rotated so its optical axis passes
//! through the eye centre with the head's lateral axis level (no roll), then
//! scaled so the eye sits at `d_n`. The resulting patch lives in the same
//! space as the rendered training patches. Gaze predicted in that space is
//! mapped back with the inverse rotation only.

use nalgebra::Matrix3;
use thiserror::Error;

use crate::augment::AugmentationParams;
use crate::camera::CameraIntrinsics;
use crate::geometry::{apply_to_direction, unit_direction, GeometryError, RotationMatrix3, Vec3};
use crate::imaging::{quantize, EyePatchImage, Image};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizeError {
    #[error("eye centre must be in front of the camera (z = {0})")]
    EyeBehindCamera(f64),
    #[error("head lateral axis is parallel to the eye direction")]
    DegenerateHeadAxis,
    #[error("warp is singular")]
    SingularWarp,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationResult {
    /// Camera frame to normalized camera frame.
    pub rotation: RotationMatrix3,
    /// `d_n / ‖eye_center‖`.
    pub scale: f64,
    /// Source pixel to normalized patch pixel homography.
    pub warp: Matrix3<f64>,
    pub patch_width: u32,
    pub patch_height: u32,
}

impl NormalizationResult {
    pub fn normalize_gaze(&self, gaze: &Vec3) -> Result<Vec3, GeometryError> {
        apply_to_direction(&self.rotation, gaze)
    }

    /// Head rotation expressed in the normalized camera frame.
    pub fn normalize_head_rotation(&self, head_rotation: &RotationMatrix3) -> RotationMatrix3 {
        self.rotation * head_rotation
    }
}

/// Intrinsics of the normalized camera: focal `f_n`, principal point at the
/// patch centre.
pub fn normalized_camera_matrix(params: &AugmentationParams) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        params.f_n, 0.0,        params.patch_width as f64 / 2.0,
        0.0,        params.f_n, params.patch_height as f64 / 2.0,
        0.0,        0.0,        1.0,
    );
    m
}

/// Builds the normalizing rotation, scale and pixel warp for one eye.
///
/// `z_n` points at the eye, `x_n` is the head's lateral axis (first column
/// of `head_rotation`) made orthogonal to `z_n`, and `y_n = z_n × x_n`. The
/// warp is `C_n · S · R_norm · C_r⁻¹` with `S = diag(1, 1, scale)`; the
/// frame is assumed to be undistorted.
pub fn compute_normalization(
    head_rotation: &RotationMatrix3,
    eye_center_cam: &Vec3,
    intrinsics: &CameraIntrinsics,
    params: &AugmentationParams,
) -> Result<NormalizationResult, NormalizeError> {
    if !(eye_center_cam.z > 0.0) {
        return Err(NormalizeError::EyeBehindCamera(eye_center_cam.z));
    }
    let distance = eye_center_cam.norm();
    let z_n = eye_center_cam / distance;
    let lateral: Vec3 = head_rotation.matrix().column(0).into();
    let x_raw = lateral - z_n * lateral.dot(&z_n);
    let x_norm = x_raw.norm();
    if x_norm < 1e-12 {
        return Err(NormalizeError::DegenerateHeadAxis);
    }
    let x_n = x_raw / x_norm;
    let y_n = z_n.cross(&x_n);
    let rotation = RotationMatrix3::from_matrix_unchecked(Matrix3::from_rows(&[
        x_n.transpose(),
        y_n.transpose(),
        z_n.transpose(),
    ]));
    let scale = params.d_n / distance;
    let s = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, scale));
    let c_r_inv = intrinsics
        .matrix()
        .try_inverse()
        .ok_or(NormalizeError::SingularWarp)?;
    let warp = normalized_camera_matrix(params) * s * rotation.matrix() * c_r_inv;
    Ok(NormalizationResult {
        rotation,
        scale,
        warp,
        patch_width: params.patch_width,
        patch_height: params.patch_height,
    })
}

/// Resamples `frame` into the normalized patch by inverse warping each patch
/// pixel centre, with bilinear interpolation. Lookups that land outside the
/// frame take `background`.
pub fn normalize_image(
    frame: &Image,
    result: &NormalizationResult,
    background: u8,
) -> Result<EyePatchImage, NormalizeError> {
    let inv = result.warp.try_inverse().ok_or(NormalizeError::SingularWarp)?;
    let channels = frame.channels();
    let mut out = Image::new(result.patch_width, result.patch_height, channels, background)
        .expect("frame channel count is valid");
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    let mut color = [0.0; 3];
    let mut px = [0u8; 3];
    for j in 0..result.patch_height {
        for i in 0..result.patch_width {
            let q = inv * Vec3::new(i as f64 + 0.5, j as f64 + 0.5, 1.0);
            if !(q.z.abs() > 0.0) {
                continue;
            }
            let (x, y) = (q.x / q.z, q.y / q.z);
            if !(0.0..=fw).contains(&x) || !(0.0..=fh).contains(&y) {
                continue;
            }
            frame.sample_bilinear(x, y, &mut color);
            for (o, c) in px.iter_mut().zip(color) {
                *o = quantize(c);
            }
            out.put(i, j, &px);
        }
    }
    Ok(out)
}

/// Maps a gaze predicted in normalized space back to the camera frame:
/// `g = R_normᵀ · g_n`, returned as a unit vector.
pub fn denormalize_gaze(g_n: &Vec3, result: &NormalizationResult) -> Result<Vec3, GeometryError> {
    unit_direction(&apply_to_direction(&result.rotation.inverse(), g_n)?)
}
