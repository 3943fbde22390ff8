//! Synthetic dataset samples rendered from a face model with known pose.
//!
//! A procedural albedo (skin, sclera, iris, brows, lips) is painted in the
//! model's own `(x, y)` plane, the model is posed in front of a pinhole
//! camera and rendered, and the projected vertices become the landmarks.
//! Ground truth (pose, gaze) is therefore exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CameraIntrinsics, PixelPoint};
use crate::facemesh::{eye_center, EyeSide, FaceModel, TexturedMesh};
use crate::geometry::{rotation_from_yaw_pitch, AnglePair, RigidTransform, Vec3};
use crate::imaging::{Image, ImageError};
use crate::pipeline::manifest::{IntrinsicsLine, SampleRecordLine};
use crate::render::{render_view, View};

const ATLAS_WIDTH: u32 = 320;
const ATLAS_HEIGHT: u32 = 420;
const ATLAS_HALF_X: f64 = 80.0;
const ATLAS_HALF_Y: f64 = 105.0;

fn atlas_uv(v: &Vec3) -> [f64; 2] {
    [
        ((v.x + ATLAS_HALF_X) / (2.0 * ATLAS_HALF_X)).clamp(0.0, 1.0),
        ((v.y + ATLAS_HALF_Y) / (2.0 * ATLAS_HALF_Y)).clamp(0.0, 1.0),
    ]
}

fn hash_noise(x: u32, y: u32) -> f64 {
    let mut h = x.wrapping_mul(374_761_393) ^ y.wrapping_mul(668_265_263);
    h = (h ^ (h >> 13)).wrapping_mul(1_274_126_177);
    (h >> 16) as f64 / 65_535.0
}

/// Model vertices textured with a procedural face albedo.
pub fn albedo_mesh(model: &FaceModel) -> TexturedMesh {
    let eyes: Vec<Vec3> = [EyeSide::Left, EyeSide::Right]
        .iter()
        .map(|&s| eye_center(&model.vertices, model, s).expect("validated model"))
        .collect();
    let eye_half_width = model
        .left_eye_indices
        .iter()
        .map(|&i| (model.vertices[i] - eyes[0]).norm())
        .fold(8.0f64, f64::max);
    let mouth_y = eyes[0].y + 70.0;

    let texture = Image::from_fn(ATLAS_WIDTH, ATLAS_HEIGHT, 3, |px, py| {
        let x = (px as f64 + 0.5) / ATLAS_WIDTH as f64 * 2.0 * ATLAS_HALF_X - ATLAS_HALF_X;
        let y = (py as f64 + 0.5) / ATLAS_HEIGHT as f64 * 2.0 * ATLAS_HALF_Y - ATLAS_HALF_Y;
        let n = hash_noise(px, py) * 12.0 - 6.0;
        let mut rgb = [214.0 + n, 170.0 + n, 140.0 + n];
        for e in &eyes {
            let dx = (x - e.x) / eye_half_width;
            let dy = (y - e.y) / (0.45 * eye_half_width);
            let lid = dx * dx + dy * dy;
            let brow = ((x - e.x) / (1.2 * eye_half_width)).powi(2)
                + ((y - (e.y - 12.0)) / 2.5).powi(2);
            if brow < 1.0 {
                rgb = [90.0, 60.0, 45.0];
            }
            if lid < 1.0 {
                rgb = [235.0, 235.0, 228.0];
                let r = (x - e.x).hypot(y - e.y);
                if r < 0.42 * eye_half_width {
                    rgb = [70.0, 100.0, 60.0];
                }
                if r < 0.18 * eye_half_width {
                    rgb = [15.0, 15.0, 15.0];
                }
            } else if lid < 1.25 {
                rgb = [120.0, 80.0, 70.0];
            }
        }
        let lips = (x / 24.0).powi(2) + ((y - mouth_y) / 6.0).powi(2);
        if lips < 1.0 {
            rgb = [170.0, 70.0, 75.0];
        }
        rgb.map(|c| c.round().clamp(0.0, 255.0) as u8)
    })
    .expect("three channels");

    let triangles = model.triangles.clone().unwrap_or_default();
    TexturedMesh {
        vertices: model.vertices.clone(),
        triangles,
        uv: model.vertices.iter().map(atlas_uv).collect(),
        texture,
        clamped_landmarks: false,
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub image: Image,
    pub landmarks: Vec<PixelPoint>,
    pub pose: RigidTransform,
    pub intrinsics: CameraIntrinsics,
}

/// Renders `model` at `pose` through an ideal pinhole camera of the given
/// size, background gray 60. Landmarks are the exact vertex projections.
pub fn render_sample(
    model: &FaceModel,
    albedo: &TexturedMesh,
    pose: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    width: u32,
    height: u32,
) -> SyntheticSample {
    let posed = albedo.transformed(pose);
    let view = View {
        origin: Vec3::zeros(),
        fx: intrinsics.fx,
        fy: intrinsics.fy,
        cx: intrinsics.cx,
        cy: intrinsics.cy,
        width,
        height,
    };
    let image = render_view(&posed, &view, 60);
    let landmarks = model
        .vertices
        .iter()
        .map(|v| {
            let p = pose.transform_point(v);
            PixelPoint::new(intrinsics.fx * p.x / p.z + intrinsics.cx, intrinsics.fy * p.y / p.z + intrinsics.cy)
        })
        .collect();
    SyntheticSample {
        image,
        landmarks,
        pose: *pose,
        intrinsics: intrinsics.ideal(),
    }
}

/// Random but reproducible head pose and gaze for sample `index`.
pub fn random_pose(rng: &mut ChaCha8Rng) -> (RigidTransform, AnglePair) {
    let yaw = rng.random_range(-20.0..20.0);
    let pitch = rng.random_range(-20.0..20.0);
    let t = Vec3::new(
        rng.random_range(-40.0..40.0),
        rng.random_range(-30.0..30.0),
        rng.random_range(500.0..700.0),
    );
    let gaze_angles = AnglePair::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
    (RigidTransform::new(rotation_from_yaw_pitch(AnglePair::new(yaw, pitch)), t), gaze_angles)
}

/// Writes `count` synthetic samples (PNG images plus a manifest) into `dir`
/// and returns the manifest path. Gaze targets lie 400 mm from the midpoint
/// of the eyes, in the head frame direction `gaze_angles` towards the camera.
pub fn write_dataset(dir: &Path, model: &FaceModel, count: usize, seed: u64) -> Result<PathBuf, ImageError> {
    std::fs::create_dir_all(dir.join("images")).map_err(image::ImageError::IoError)?;
    let albedo = albedo_mesh(model);
    let intrinsics = CameraIntrinsics::new(700.0, 700.0, 320.0, 240.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let manifest = dir.join("manifest.jsonl");
    let mut out = BufWriter::new(File::create(&manifest).map_err(image::ImageError::IoError)?);
    for i in 0..count {
        let (pose, gaze_angles) = random_pose(&mut rng);
        let sample = render_sample(model, &albedo, &pose, &intrinsics, 640, 480);
        let rel = format!("images/synth_{i:05}.png");
        sample.image.save_png(&dir.join(&rel))?;

        let eyes = (eye_center(&model.vertices, model, EyeSide::Left).expect("valid model")
            + eye_center(&model.vertices, model, EyeSide::Right).expect("valid model"))
            / 2.0;
        let origin = pose.transform_point(&eyes);
        // face-forward is −z in the model frame
        let look = pose.rotation * (rotation_from_yaw_pitch(gaze_angles) * -Vec3::z());
        let target = origin + look * 400.0;
        let line = SampleRecordLine {
            sample_id: format!("synth_{i:05}"),
            image_path: rel,
            landmarks: sample.landmarks.iter().map(|p| [p.u, p.v]).collect(),
            intrinsics: IntrinsicsLine::from(&intrinsics),
            gaze_origin: Some(origin.into()),
            gaze_target: Some(target.into()),
            gaze_direction: None,
            user_id: Some(format!("user_{}", i % 3)),
        };
        let text = serde_json::to_string(&line).expect("manifest line serializes");
        writeln!(out, "{text}").map_err(image::ImageError::IoError)?;
    }
    out.flush().map_err(image::ImageError::IoError)?;
    Ok(manifest)
}
