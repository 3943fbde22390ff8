//! Canonical face models and textured face meshes.
//!
//! A [`TexturedMesh`] reuses the canonical model vertices as geometry and the
//! aligned 2D landmarks (scaled to `[0, 1]²`) as texture coordinates into the
//! source image. Per-sample geometry enters only through pose transforms.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spade::{DelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::camera::PixelPoint;
use crate::geometry::{RigidTransform, Vec3};
use crate::imaging::Image;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{landmarks} landmarks given for a model with {vertices} vertices")]
    CountMismatch { landmarks: usize, vertices: usize },
    #[error("triangle {triangle} references vertex {index} but only {count} exist")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },
    #[error("triangle {0} repeats a vertex")]
    DegenerateTriangle(usize),
    #[error("eye index list for the {0} eye is empty")]
    EmptyEyeIndices(&'static str),
    #[error("eye index {index} out of range for {count} vertices")]
    EyeIndexOutOfRange { index: usize, count: usize },
    #[error("left and right eye index lists share vertex {0}")]
    OverlappingEyes(usize),
    #[error("unsupported units {0:?}, expected \"mm\"")]
    Units(String),
    #[error("triangulation needs at least 3 distinct, non-collinear points")]
    Collinear,
    #[error("non-finite landmark at index {0}")]
    NonFinite(usize),
    #[error("texture coordinate {0} lies outside [0, 1]²")]
    UvOutOfRange(usize),
    #[error("face model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("face model file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeSide {
    Left,
    Right,
}

impl EyeSide {
    pub fn tag(self) -> &'static str {
        match self {
            EyeSide::Left => "L",
            EyeSide::Right => "R",
        }
    }
}

/// On-disk form of a face model. Field names are part of the file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FaceModelFile {
    name: String,
    units: String,
    vertices: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triangles: Option<Vec<[usize; 3]>>,
    left_eye_indices: Vec<usize>,
    right_eye_indices: Vec<usize>,
}

/// Canonical 3D landmark model in a centred, camera-facing pose.
///
/// Face-forward points towards `−z`, so an identity rotation plus positive
/// depth shows the face frontally to a camera looking along `+z`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub triangles: Option<Vec<[usize; 3]>>,
    pub left_eye_indices: Vec<usize>,
    pub right_eye_indices: Vec<usize>,
}

impl FaceModel {
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        triangles: Option<Vec<[usize; 3]>>,
        left_eye_indices: Vec<usize>,
        right_eye_indices: Vec<usize>,
    ) -> Result<Self, MeshError> {
        let model = Self {
            name: name.into(),
            vertices,
            triangles,
            left_eye_indices,
            right_eye_indices,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let count = self.vertices.len();
        if let Some(tris) = &self.triangles {
            check_triangles(tris, count)?;
        }
        for (side, list) in [("left", &self.left_eye_indices), ("right", &self.right_eye_indices)] {
            if list.is_empty() {
                return Err(MeshError::EmptyEyeIndices(side));
            }
            if let Some(&index) = list.iter().find(|&&i| i >= count) {
                return Err(MeshError::EyeIndexOutOfRange { index, count });
            }
        }
        if let Some(&shared) = self
            .left_eye_indices
            .iter()
            .find(|i| self.right_eye_indices.contains(i))
        {
            return Err(MeshError::OverlappingEyes(shared));
        }
        Ok(())
    }

    pub fn eye_indices(&self, side: EyeSide) -> &[usize] {
        match side {
            EyeSide::Left => &self.left_eye_indices,
            EyeSide::Right => &self.right_eye_indices,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        let file: FaceModelFile = serde_json::from_str(text)?;
        if file.units != "mm" {
            return Err(MeshError::Units(file.units));
        }
        Self::new(
            file.name,
            file.vertices.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect(),
            file.triangles,
            file.left_eye_indices,
            file.right_eye_indices,
        )
    }

    pub fn to_json(&self) -> String {
        let file = FaceModelFile {
            name: self.name.clone(),
            units: "mm".into(),
            vertices: self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            triangles: self.triangles.clone(),
            left_eye_indices: self.left_eye_indices.clone(),
            right_eye_indices: self.right_eye_indices.clone(),
        };
        serde_json::to_string_pretty(&file).expect("face model serializes")
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// SHA-256 over the canonical serialized form, hex encoded.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

fn check_triangles(tris: &[[usize; 3]], count: usize) -> Result<(), MeshError> {
    for (t, tri) in tris.iter().enumerate() {
        if let Some(&index) = tri.iter().find(|&&i| i >= count) {
            return Err(MeshError::IndexOutOfRange {
                triangle: t,
                index,
                count,
            });
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(MeshError::DegenerateTriangle(t));
        }
    }
    Ok(())
}

/// Triangle mesh with per-vertex texture coordinates into `texture`.
#[derive(Debug, Clone)]
pub struct TexturedMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// `(u, v)` in `[0, 1]²`, `u` along image width, `v` along height.
    pub uv: Vec<[f64; 2]>,
    pub texture: Image,
    /// Set when at least one landmark had to be clamped into the image.
    pub clamped_landmarks: bool,
}

impl TexturedMesh {
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.uv.len() != self.vertices.len() {
            return Err(MeshError::CountMismatch {
                landmarks: self.uv.len(),
                vertices: self.vertices.len(),
            });
        }
        if let Some(i) = self
            .uv
            .iter()
            .position(|uv| !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]))
        {
            return Err(MeshError::UvOutOfRange(i));
        }
        check_triangles(&self.triangles, self.vertices.len())
    }

    /// Same mesh with vertices mapped through `transform`; uv and texture
    /// are untouched.
    pub fn transformed(&self, transform: &RigidTransform) -> TexturedMesh {
        TexturedMesh {
            vertices: crate::geometry::apply_to_points(transform, &self.vertices),
            ..self.clone()
        }
    }
}

/// Canonical vertices textured by the sample image at the landmark positions.
///
/// Landmarks outside the image are clamped to the border for texturing and
/// the mesh is flagged via [`TexturedMesh::clamped_landmarks`].
pub fn build_textured_mesh(
    model: &FaceModel,
    landmarks: &[PixelPoint],
    image: &Image,
) -> Result<TexturedMesh, MeshError> {
    if landmarks.len() != model.vertices.len() {
        return Err(MeshError::CountMismatch {
            landmarks: landmarks.len(),
            vertices: model.vertices.len(),
        });
    }
    if let Some(i) = landmarks.iter().position(|p| !p.is_finite()) {
        return Err(MeshError::NonFinite(i));
    }
    let (w, h) = (image.width() as f64, image.height() as f64);
    let mut clamped = false;
    let uv = landmarks
        .iter()
        .map(|p| {
            let u = p.u.clamp(0.0, w);
            let v = p.v.clamp(0.0, h);
            clamped |= u != p.u || v != p.v;
            [u / w, v / h]
        })
        .collect();
    let triangles = match &model.triangles {
        Some(t) => t.clone(),
        None => triangulate_fallback(landmarks)?,
    };
    Ok(TexturedMesh {
        vertices: model.vertices.clone(),
        triangles,
        uv,
        texture: image.clone(),
        clamped_landmarks: clamped,
    })
}

/// Screen-space Delaunay triangulation of the landmarks, used when a face
/// model ships without triangles. Coincident landmarks are merged into the
/// first occurrence. Output is deterministic for a fixed input order.
pub fn triangulate_fallback(landmarks: &[PixelPoint]) -> Result<Vec<[usize; 3]>, MeshError> {
    if let Some(i) = landmarks.iter().position(|p| !p.is_finite()) {
        return Err(MeshError::NonFinite(i));
    }
    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut original = Vec::new();
    for (i, p) in landmarks.iter().enumerate() {
        let handle = dt
            .insert(Point2::new(p.u, p.v))
            .map_err(|_| MeshError::NonFinite(i))?;
        if handle.index() == original.len() {
            original.push(i);
        }
    }
    let tris: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let v = f.vertices();
            [
                original[v[0].fix().index()],
                original[v[1].fix().index()],
                original[v[2].fix().index()],
            ]
        })
        .collect();
    if tris.is_empty() {
        return Err(MeshError::Collinear);
    }
    Ok(tris)
}

/// Mean of the eye-corner vertices for one side.
pub fn eye_center(vertices: &[Vec3], model: &FaceModel, side: EyeSide) -> Result<Vec3, MeshError> {
    let indices = model.eye_indices(side);
    if indices.is_empty() {
        return Err(MeshError::EmptyEyeIndices(match side {
            EyeSide::Left => "left",
            EyeSide::Right => "right",
        }));
    }
    let mut sum = Vec3::zeros();
    for &i in indices {
        sum += vertices.get(i).ok_or(MeshError::EyeIndexOutOfRange {
            index: i,
            count: vertices.len(),
        })?;
    }
    Ok(sum / indices.len() as f64)
}
