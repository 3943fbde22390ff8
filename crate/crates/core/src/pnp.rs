//! Perspective-n-point pose recovery.
//!
//! Finds the rigid transform taking canonical face-model points into the
//! camera frame by minimizing the squared pixel reprojection error with
//! Levenberg–Marquardt. The pose is parameterized by a left-multiplied
//! axis-angle increment on the rotation plus an additive translation step,
//! which stays singularity-free around any pose.
//!
//! Image points are expected to be undistorted already (see
//! [`PnPProblem::from_observations`]); residuals use the ideal pinhole part of
//! the intrinsics only.

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Matrix6, SMatrix, Vector2, Vector6};
use thiserror::Error;

use crate::camera::{CameraError, CameraIntrinsics, PixelPoint};
use crate::geometry::{exp_so3, skew, RigidTransform, RotationMatrix3, Vec3};

pub const MIN_CORRESPONDENCES: usize = 6;
const MAX_ITERATIONS: usize = 100;
const RELATIVE_DECREASE_TOLERANCE: f64 = 1e-10;
const STEP_TOLERANCE: f64 = 1e-10;
const INITIAL_DAMPING: f64 = 1e-3;
const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PnpError {
    #[error("need at least {MIN_CORRESPONDENCES} correspondences, got {0}")]
    NotEnoughPoints(usize),
    #[error("model has {model} points but image has {image}")]
    LengthMismatch { model: usize, image: usize },
    #[error("model points are collinear")]
    CollinearModel,
    #[error("non-finite input coordinate at index {0}")]
    NonFinite(usize),
    #[error("landmark {index} lies behind the camera (z = {z})")]
    BehindCamera { index: usize, z: f64 },
    #[error("normal equations are rank deficient beyond damping recovery")]
    Degenerate,
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// Correspondences between model points (mm, canonical frame) and
/// undistorted image points (px).
#[derive(Debug, Clone)]
pub struct PnPProblem {
    model_points: Vec<Vec3>,
    image_points: Vec<PixelPoint>,
    intrinsics: CameraIntrinsics,
}

impl PnPProblem {
    /// Builds a problem from already-undistorted image points.
    pub fn new(
        model_points: Vec<Vec3>,
        image_points: Vec<PixelPoint>,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, PnpError> {
        if model_points.len() != image_points.len() {
            return Err(PnpError::LengthMismatch {
                model: model_points.len(),
                image: image_points.len(),
            });
        }
        if model_points.len() < MIN_CORRESPONDENCES {
            return Err(PnpError::NotEnoughPoints(model_points.len()));
        }
        for (i, (m, p)) in model_points.iter().zip(&image_points).enumerate() {
            if !m.iter().all(|c| c.is_finite()) || !p.is_finite() {
                return Err(PnpError::NonFinite(i));
            }
        }
        if is_collinear(&model_points) {
            return Err(PnpError::CollinearModel);
        }
        intrinsics.validate(None)?;
        Ok(Self {
            model_points,
            image_points,
            intrinsics,
        })
    }

    /// Undistorts raw pixel observations with the camera's coefficients,
    /// then builds the problem.
    pub fn from_observations(
        model_points: Vec<Vec3>,
        raw_image_points: &[PixelPoint],
        intrinsics: &CameraIntrinsics,
    ) -> Result<Self, PnpError> {
        let undistorted = intrinsics.undistort_points(raw_image_points)?;
        Self::new(model_points, undistorted, intrinsics.ideal())
    }

    pub fn model_points(&self) -> &[Vec3] {
        &self.model_points
    }

    pub fn image_points(&self) -> &[PixelPoint] {
        &self.image_points
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn len(&self) -> usize {
        self.model_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_points.is_empty()
    }
}

fn is_collinear(points: &[Vec3]) -> bool {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let mut eig = cov.symmetric_eigenvalues().as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[0] <= 0.0 || eig[1] <= 1e-12 * eig[0]
}

#[derive(Debug, Clone)]
pub struct PnPSolution {
    pub pose: RigidTransform,
    /// Root-mean-square of the per-landmark pixel error `‖r_i‖`.
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective `Σ‖r_i‖²` at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// Per-landmark pixel residuals `project(T·X_m,i) − X_s,i`.
pub fn reprojection_residuals(
    pose: &RigidTransform,
    problem: &PnPProblem,
) -> Result<Vec<Vector2<f64>>, PnpError> {
    let cam = &problem.intrinsics;
    problem
        .model_points
        .iter()
        .zip(&problem.image_points)
        .enumerate()
        .map(|(index, (m, s))| {
            let p = pose.transform_point(m);
            if !(p.z > 0.0) {
                return Err(PnpError::BehindCamera { index, z: p.z });
            }
            Ok(Vector2::new(
                cam.fx * p.x / p.z + cam.cx - s.u,
                cam.fy * p.y / p.z + cam.cy - s.v,
            ))
        })
        .collect()
}

/// Sum of squared residual components.
pub fn objective(pose: &RigidTransform, problem: &PnPProblem) -> Result<f64, PnpError> {
    Ok(reprojection_residuals(pose, problem)?
        .iter()
        .map(|r| r.norm_squared())
        .sum())
}

/// Analytic Jacobian of the stacked residual vector `[Δu₀, Δv₀, Δu₁, …]`
/// with respect to the 6-vector `(ω, τ)` where the perturbed pose is
/// `(exp(ω)·R, t + τ)`. Shape `2N × 6`.
pub fn residual_jacobian(
    pose: &RigidTransform,
    problem: &PnPProblem,
) -> Result<DMatrix<f64>, PnpError> {
    let n = problem.len();
    let mut jac = DMatrix::zeros(2 * n, 6);
    for (i, m) in problem.model_points.iter().enumerate() {
        let block = point_jacobian(pose, m, &problem.intrinsics)
            .ok_or_else(|| PnpError::BehindCamera {
                index: i,
                z: pose.transform_point(m).z,
            })?;
        jac.view_mut((2 * i, 0), (2, 6)).copy_from(&block);
    }
    Ok(jac)
}

fn point_jacobian(
    pose: &RigidTransform,
    model_point: &Vec3,
    cam: &CameraIntrinsics,
) -> Option<SMatrix<f64, 2, 6>> {
    let rotated = pose.rotation * model_point;
    let p = rotated + pose.translation;
    if !(p.z > 0.0) {
        return None;
    }
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    #[rustfmt::skip]
    let d_proj = Matrix2x3::new(
        cam.fx * iz, 0.0,         -cam.fx * p.x * iz2,
        0.0,         cam.fy * iz, -cam.fy * p.y * iz2,
    );
    // d(exp(ω)·R·X)/dω at ω = 0 is −[R·X]×.
    let d_rot = d_proj * (-skew(&rotated));
    let mut block = SMatrix::<f64, 2, 6>::zeros();
    block.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_rot);
    block.fixed_view_mut::<2, 3>(0, 3).copy_from(&d_proj);
    Some(block)
}

/// Applies a 6-vector increment `(ω, τ)` to a pose.
pub fn retract(pose: &RigidTransform, delta: &Vector6<f64>) -> RigidTransform {
    let omega = Vec3::new(delta[0], delta[1], delta[2]);
    let tau = Vec3::new(delta[3], delta[4], delta[5]);
    RigidTransform::new(exp_so3(&omega) * pose.rotation, pose.translation + tau)
}

/// Weak-perspective initial guess: orthogonal Procrustes between the centred
/// model points and the centred normalized image points, with depth taken
/// from the fitted scale.
pub fn weak_perspective_init(problem: &PnPProblem) -> Result<RigidTransform, PnpError> {
    let cam = &problem.intrinsics;
    let n = problem.len() as f64;
    let normalized: Vec<Vector2<f64>> = problem
        .image_points
        .iter()
        .map(|p| cam.to_normalized(*p))
        .collect();
    let img_centroid = normalized.iter().sum::<Vector2<f64>>() / n;
    let model_centroid = problem.model_points.iter().sum::<Vec3>() / n;

    let mut cross = Matrix2x3::zeros();
    for (x, m) in normalized.iter().zip(&problem.model_points) {
        cross += (x - img_centroid) * (m - model_centroid).transpose();
    }
    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(PnpError::Degenerate),
    };
    let top = u * v_t;
    let r1 = Vec3::new(top[(0, 0)], top[(0, 1)], top[(0, 2)]);
    let r2 = Vec3::new(top[(1, 0)], top[(1, 1)], top[(1, 2)]);
    let r3 = r1.cross(&r2);
    let rotation = RotationMatrix3::from_matrix_unchecked(Matrix3::from_rows(&[
        r1.transpose(),
        r2.transpose(),
        r3.transpose(),
    ]));

    let spread: f64 = problem
        .model_points
        .iter()
        .map(|m| (top * (m - model_centroid)).norm_squared())
        .sum();
    let scale = svd.singular_values.sum() / spread;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(PnpError::Degenerate);
    }
    let depth = 1.0 / scale;
    let centre = Vec3::new(img_centroid.x * depth, img_centroid.y * depth, depth);
    let translation = centre - rotation * model_centroid;
    Ok(RigidTransform::new(rotation, translation))
}

/// Levenberg–Marquardt refinement of the pose.
///
/// Without `init`, starts from [`weak_perspective_init`]. The returned pose
/// never has a larger objective than the starting pose. `converged` is set
/// when the relative objective decrease or the parameter step drops below
/// `1e-10` before the iteration cap; otherwise the best iterate is returned
/// with `converged = false`.
pub fn solve_pnp(
    problem: &PnPProblem,
    init: Option<RigidTransform>,
) -> Result<PnPSolution, PnpError> {
    let mut pose = match init {
        Some(p) => p,
        None => weak_perspective_init(problem)?,
    };
    let mut cost = objective(&pose, problem)?;
    let mut trace = vec![cost];
    let mut lambda = INITIAL_DAMPING;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let (hessian, gradient) = normal_equations(&pose, problem)?;

        let delta = loop {
            let mut damped = hessian;
            for k in 0..6 {
                damped[(k, k)] += lambda * hessian[(k, k)].max(1e-12);
            }
            match damped.cholesky() {
                Some(chol) => break chol.solve(&(-gradient)),
                None => {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        return Err(PnpError::Degenerate);
                    }
                }
            }
        };

        let step = delta.norm();
        let candidate = retract(&pose, &delta);
        let candidate_cost = objective(&candidate, problem).ok().filter(|c| c.is_finite());

        match candidate_cost {
            Some(new_cost) if new_cost < cost => {
                let relative = (cost - new_cost) / cost;
                pose = candidate;
                cost = new_cost;
                trace.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                if relative < RELATIVE_DECREASE_TOLERANCE || step < STEP_TOLERANCE || cost == 0.0 {
                    converged = true;
                }
            }
            _ => {
                if step < STEP_TOLERANCE {
                    converged = true;
                } else {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        // No descent direction remains: we sit at a minimum
                        // up to floating-point resolution.
                        converged = true;
                    }
                }
            }
        }
    }

    Ok(PnPSolution {
        pose,
        rms_residual: (cost / problem.len() as f64).sqrt(),
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn normal_equations(
    pose: &RigidTransform,
    problem: &PnPProblem,
) -> Result<(Matrix6<f64>, Vector6<f64>), PnpError> {
    let residuals = reprojection_residuals(pose, problem)?;
    let mut hessian = Matrix6::zeros();
    let mut gradient = Vector6::zeros();
    for (i, (m, r)) in problem.model_points.iter().zip(&residuals).enumerate() {
        let block = point_jacobian(pose, m, &problem.intrinsics).ok_or(PnpError::BehindCamera {
            index: i,
            z: pose.transform_point(m).z,
        })?;
        hessian += block.transpose() * block;
        gradient += block.transpose() * r;
    }
    if !hessian.iter().all(|v| v.is_finite()) {
        return Err(PnpError::Degenerate);
    }
    Ok((hessian, gradient))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_angle_between, rotation_from_yaw_pitch, AnglePair};
    use approx::assert_relative_eq;

    fn cube_model() -> Vec<Vec3> {
        let mut pts = Vec::new();
        for &x in &[-40.0, 0.0, 40.0] {
            for &y in &[-50.0, 10.0, 45.0] {
                for &z in &[-20.0, 15.0] {
                    pts.push(Vec3::new(x + 0.3 * y, y, z + 0.1 * x));
                }
            }
        }
        pts
    }

    fn synth(pose: &RigidTransform, model: &[Vec3]) -> PnPProblem {
        let cam = CameraIntrinsics::new(800.0, 790.0, 320.0, 240.0);
        let img = model
            .iter()
            .map(|m| cam.project(&pose.transform_point(m)).unwrap())
            .collect();
        PnPProblem::new(model.to_vec(), img, cam).unwrap()
    }

    #[test]
    fn residuals_zero_at_truth() {
        let pose = RigidTransform::new(
            rotation_from_yaw_pitch(AnglePair::new(10.0, 20.0)),
            Vec3::new(5.0, -3.0, 600.0),
        );
        let problem = synth(&pose, &cube_model());
        for r in reprojection_residuals(&pose, &problem).unwrap() {
            assert!(r.norm() < 1e-7);
        }
    }

    #[test]
    fn constructed_unit_noise_gives_unit_rms_in_u() {
        let pose = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 600.0));
        let clean = synth(&pose, &cube_model());
        let shifted: Vec<PixelPoint> = clean
            .image_points()
            .iter()
            .map(|p| PixelPoint::new(p.u + 1.0, p.v))
            .collect();
        let problem = PnPProblem::new(cube_model(), shifted, *clean.intrinsics()).unwrap();
        let res = reprojection_residuals(&pose, &problem).unwrap();
        let rms_u = (res.iter().map(|r| r.x * r.x).sum::<f64>() / res.len() as f64).sqrt();
        assert_relative_eq!(rms_u, 1.0, epsilon = 1e-9);
        assert!(res.iter().all(|r| r.y.abs() < 1e-9));
    }

    #[test]
    fn objective_matches_scalar_recomputation() {
        let truth = RigidTransform::new(
            rotation_from_yaw_pitch(AnglePair::new(-12.0, 7.0)),
            Vec3::new(-20.0, 10.0, 650.0),
        );
        let problem = synth(&truth, &cube_model());
        let pose = RigidTransform::new(
            rotation_from_yaw_pitch(AnglePair::new(3.0, -4.0)),
            Vec3::new(1.0, 2.0, 580.0),
        );
        let k = problem.intrinsics().matrix();
        let mut expected = 0.0;
        for (m, s) in problem.model_points().iter().zip(problem.image_points()) {
            let h = k * (pose.rotation.matrix() * m + pose.translation);
            let (u, v) = (h.x / h.z, h.y / h.z);
            expected += (u - s.u).powi(2) + (v - s.v).powi(2);
        }
        assert_relative_eq!(objective(&pose, &problem).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn recovers_pose_from_exact_projection() {
        let truth = RigidTransform::new(
            rotation_from_yaw_pitch(AnglePair::new(10.0, 20.0)),
            Vec3::new(0.0, 0.0, 600.0),
        );
        let problem = synth(&truth, &cube_model());
        let sol = solve_pnp(&problem, None).unwrap();
        assert!(sol.converged);
        assert!(rotation_angle_between(&sol.pose.rotation, &truth.rotation) < 0.1);
        assert!((sol.pose.translation - truth.translation).norm() < 0.5);
        assert!(sol.rms_residual < 1e-6);
    }

    #[test]
    fn objective_trace_non_increasing() {
        let truth = RigidTransform::new(
            rotation_from_yaw_pitch(AnglePair::new(-25.0, 15.0)),
            Vec3::new(30.0, -10.0, 700.0),
        );
        let problem = synth(&truth, &cube_model());
        let init = RigidTransform::new(
            rotation_from_yaw_pitch(AnglePair::new(0.0, 0.0)),
            Vec3::new(0.0, 0.0, 500.0),
        );
        let sol = solve_pnp(&problem, Some(init)).unwrap();
        assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.objective_trace.last().unwrap() <= &sol.objective_trace[0]);
    }

    #[test]
    fn input_validation() {
        let cam = CameraIntrinsics::new(800.0, 800.0, 0.0, 0.0);
        let few = vec![Vec3::zeros(); 5];
        assert_eq!(
            PnPProblem::new(few, vec![PixelPoint::default(); 5], cam).unwrap_err(),
            PnpError::NotEnoughPoints(5)
        );
        assert!(matches!(
            PnPProblem::new(cube_model(), vec![PixelPoint::default(); 3], cam),
            Err(PnpError::LengthMismatch { .. })
        ));
        let line: Vec<Vec3> = (0..8).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert_eq!(
            PnPProblem::new(line, vec![PixelPoint::default(); 8], cam).unwrap_err(),
            PnpError::CollinearModel
        );
    }

    #[test]
    fn behind_camera_reported_with_index() {
        let problem = synth(&RigidTransform::from_translation(Vec3::new(0.0, 0.0, 600.0)), &cube_model());
        let pose = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 10.0));
        match reprojection_residuals(&pose, &problem) {
            Err(PnpError::BehindCamera { index, .. }) => {
                assert!(problem.model_points()[index].z + 10.0 <= 0.0)
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
