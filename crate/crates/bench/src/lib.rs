//! Fixtures shared by the criterion benches.

use gazeaug_core::augment::{make_virtual_camera, AugmentationParams, VirtualCamera};
use gazeaug_core::canonical::procedural_face_model;
use gazeaug_core::geometry::{rotation_from_yaw_pitch, AnglePair, RigidTransform, Vec3};
use gazeaug_core::synthetic::albedo_mesh;
use gazeaug_core::{eye_center, CameraIntrinsics, EyeSide, FaceModel, PixelPoint, PnPProblem, TexturedMesh};

pub fn model() -> FaceModel {
    procedural_face_model()
}

pub fn head_pose() -> RigidTransform {
    RigidTransform::new(rotation_from_yaw_pitch(AnglePair::new(12.0, -8.0)), Vec3::new(15.0, -10.0, 600.0))
}

/// Exact projections of the posed model, the 468 point problem every
/// augmented sample solves.
pub fn pnp_problem(model: &FaceModel) -> PnPProblem {
    let cam = CameraIntrinsics::new(700.0, 700.0, 320.0, 240.0);
    let pose = head_pose();
    let pixels = landmarks(model, &pose, &cam);
    PnPProblem::new(model.vertices.clone(), pixels, cam).expect("valid problem")
}

pub fn landmarks(model: &FaceModel, pose: &RigidTransform, cam: &CameraIntrinsics) -> Vec<PixelPoint> {
    model
        .vertices
        .iter()
        .map(|v| {
            let p = pose.transform_point(v);
            PixelPoint::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy)
        })
        .collect()
}

/// Posed textured mesh and the default virtual camera of its left eye.
pub fn eye_scene(model: &FaceModel) -> (TexturedMesh, VirtualCamera) {
    let posed = albedo_mesh(model).transformed(&head_pose());
    let eye = eye_center(&posed.vertices, model, EyeSide::Left).expect("eye corners present");
    (posed, make_virtual_camera(&eye, &AugmentationParams::default()))
}
