//! Pinhole camera with Brown–Conrady lens distortion.
//!
//! Distortion uses the radial `(k1, k2, k3)` plus tangential `(p1, p2)`
//! polynomial convention common to dataset intrinsics in the wild:
//!
//! ```text
//! x_d = x·(1 + k1 r² + k2 r⁴ + k3 r⁶) + 2 p1 x y + p2 (r² + 2x²)
//! y_d = y·(1 + k1 r² + k2 r⁴ + k3 r⁶) + p1 (r² + 2y²) + 2 p2 x y
//! ```

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

const UNDISTORT_MAX_ITERATIONS: usize = 20;
const UNDISTORT_STEP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("undistortion did not converge for points {indices:?}")]
    UndistortNotConverged { indices: Vec<usize> },
}

/// Lens distortion coefficients. All zero means an ideal pinhole.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    /// Builds from the OpenCV-ordered list `[k1, k2, p1, p2, k3]`.
    /// Shorter lists are zero-filled; more than five entries is an error.
    pub fn from_slice(coeffs: &[f64]) -> Result<Self, CameraError> {
        if coeffs.len() > 5 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "expected at most 5 distortion coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(CameraError::InvalidIntrinsics(
                "non-finite distortion coefficient".into(),
            ));
        }
        let mut c = [0.0; 5];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Self {
            k1: c[0],
            k2: c[1],
            p1: c[2],
            p2: c[3],
            k3: c[4],
        })
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&c| c == 0.0)
    }

    /// Maps an ideal normalized coordinate to its distorted position.
    pub fn distort(&self, p: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        Vector2::new(
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// Fixed-point inversion of [`Distortion::distort`]. Returns the ideal
    /// coordinate and whether the iteration met the step tolerance.
    pub fn undistort(&self, distorted: Vector2<f64>) -> (Vector2<f64>, bool) {
        if self.is_zero() {
            return (distorted, true);
        }
        let mut p = distorted;
        for _ in 0..UNDISTORT_MAX_ITERATIONS {
            let (x, y) = (p.x, p.y);
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
            let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
            let next = Vector2::new((distorted.x - dx) / radial, (distorted.y - dy) / radial);
            let step = (next - p).norm();
            p = next;
            if !step.is_finite() {
                return (p, false);
            }
            if step < UNDISTORT_STEP_TOLERANCE {
                return (p, true);
            }
        }
        (p, false)
    }
}

/// Pixel coordinate `(u, v)`; the implicit homogeneous weight is 1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub dist: Distortion,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            dist: Distortion::default(),
        }
    }

    pub fn with_distortion(mut self, dist: Distortion) -> Self {
        self.dist = dist;
        self
    }

    /// Same focal lengths and principal point, no distortion.
    pub fn ideal(&self) -> Self {
        Self::new(self.fx, self.fy, self.cx, self.cy)
    }

    /// Checks `fx, fy > 0` and, when an image size is given, that the
    /// principal point lies within ten image extents of the origin.
    pub fn validate(&self, image_size: Option<(u32, u32)>) -> Result<(), CameraError> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CameraError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if let Some((w, h)) = image_size {
            let (bx, by) = (10.0 * w as f64, 10.0 * h as f64);
            if self.cx.abs() > bx || self.cy.abs() > by {
                return Err(CameraError::InvalidIntrinsics(format!(
                    "principal point ({}, {}) outside sanity bound for {}x{} image",
                    self.cx, self.cy, w, h
                )));
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        #[rustfmt::skip]
        let k = Matrix3::new(
            self.fx, 0.0,     self.cx,
            0.0,     self.fy, self.cy,
            0.0,     0.0,     1.0,
        );
        k
    }

    pub fn to_normalized(&self, p: PixelPoint) -> Vector2<f64> {
        Vector2::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy)
    }

    pub fn from_normalized(&self, n: Vector2<f64>) -> PixelPoint {
        PixelPoint::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }

    /// Perspective divide, distortion, then the intrinsic mapping.
    pub fn project(&self, point: &Vec3) -> Result<PixelPoint, CameraError> {
        if !(point.z > 0.0) {
            return Err(CameraError::BehindCamera { z: point.z });
        }
        let n = Vector2::new(point.x / point.z, point.y / point.z);
        Ok(self.from_normalized(self.dist.distort(n)))
    }

    pub fn undistort_points(&self, points: &[PixelPoint]) -> Result<Vec<PixelPoint>, CameraError> {
        let mut failed = Vec::new();
        let out = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (n, ok) = self.dist.undistort(self.to_normalized(*p));
                if !ok {
                    failed.push(i);
                }
                self.from_normalized(n)
            })
            .collect();
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(CameraError::UndistortNotConverged { indices: failed })
        }
    }
}

pub fn project(intrinsics: &CameraIntrinsics, point: &Vec3) -> Result<PixelPoint, CameraError> {
    intrinsics.project(point)
}

pub fn undistort_points(
    intrinsics: &CameraIntrinsics,
    points: &[PixelPoint],
) -> Result<Vec<PixelPoint>, CameraError> {
    intrinsics.undistort_points(points)
}
