//! Semi-synthetic augmentation of gaze-estimation datasets.
//!
//! Each dataset sample (face image, 2D landmarks, intrinsics, gaze) is turned
//! into application-specific training data:
//!
//! 1. recover head pose from the landmarks with PnP ([`pnp`]),
//! 2. texture the canonical face model with the sample image ([`facemesh`]),
//! 3. move the annotated gaze into the centred model frame, draw a new head
//!    pose and rotate mesh and gaze with it ([`augment`]),
//! 4. render a normalized patch for each eye from a virtual camera
//!    ([`render`]).
//!
//! [`normalize`] provides the matching evaluation-time normalization of
//! real frames, and [`pipeline`] ties everything to manifest files.

pub mod augment;
pub mod camera;
pub mod canonical;
pub mod facemesh;
pub mod geometry;
pub mod imaging;
pub mod normalize;
pub mod pipeline;
pub mod pnp;
pub mod render;
pub mod synthetic;

pub use augment::{
    apply_augmentation, correct_gaze_to_base, make_virtual_camera, sample_head_pose, sample_rng,
    AugmentationParams, HeadPoseDistribution, VirtualCamera,
};
pub use camera::{CameraIntrinsics, Distortion, PixelPoint};
pub use facemesh::{build_textured_mesh, eye_center, triangulate_fallback, EyeSide, FaceModel, TexturedMesh};
pub use geometry::{
    angular_error, rotation_from_yaw_pitch, AnglePair, RigidTransform, RotationMatrix3, Vec3,
};
pub use imaging::{EyePatchImage, Image};
pub use normalize::{compute_normalization, denormalize_gaze, normalize_image, NormalizationResult};
pub use pnp::{solve_pnp, PnPProblem, PnPSolution};
pub use render::{render, DepthBuffer};
