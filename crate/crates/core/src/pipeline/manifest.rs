//! Input manifest: one JSON sample record per line.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::camera::{CameraIntrinsics, Distortion, PixelPoint};
use crate::geometry::{unit_direction, Vec3};

/// Intrinsics as written in a manifest line. `dist` holds 0 to 5
/// coefficients `[k1, k2, p1, p2, k3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsLine {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dist: Vec<f64>,
}

impl From<&CameraIntrinsics> for IntrinsicsLine {
    fn from(k: &CameraIntrinsics) -> Self {
        let dist = if k.dist.is_zero() { Vec::new() } else { k.dist.to_array().to_vec() };
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            dist,
        }
    }
}

/// Raw serialized form of a manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecordLine {
    pub sample_id: String,
    pub image_path: String,
    pub landmarks: Vec<[f64; 2]>,
    pub intrinsics: IntrinsicsLine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_origin: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_target: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_direction: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
}

/// Validated dataset sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    /// Resolved against the manifest's directory when relative.
    pub image_path: PathBuf,
    pub landmarks: Vec<PixelPoint>,
    pub intrinsics: CameraIntrinsics,
    pub gaze_origin: Option<Vec3>,
    /// Unit gaze direction in the camera frame.
    pub gaze_direction: Vec3,
    pub user_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone)]
pub struct Ingest {
    pub records: Vec<SampleRecord>,
    pub errors: Vec<LineError>,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl SampleRecordLine {
    /// Checks the line's invariants and resolves `image_path` against `base`.
    /// `expected_landmarks` is the face model's vertex count, when known.
    pub fn validate(self, base: &Path, expected_landmarks: Option<usize>) -> Result<SampleRecord, String> {
        if self.sample_id.is_empty() {
            return Err("sample_id is empty".into());
        }
        if self.image_path.is_empty() {
            return Err("image_path is empty".into());
        }
        if let Some(n) = expected_landmarks {
            if self.landmarks.len() != n {
                return Err(format!("{} landmarks, face model has {n}", self.landmarks.len()));
            }
        }
        if let Some(i) = self.landmarks.iter().position(|p| !finite(p)) {
            return Err(format!("landmark {i} is not finite"));
        }
        let k = &self.intrinsics;
        let dist = Distortion::from_slice(&k.dist).map_err(|e| e.to_string())?;
        if !finite(&k.dist) {
            return Err("distortion coefficients are not finite".into());
        }
        let intrinsics = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy).with_distortion(dist);
        intrinsics.validate(None).map_err(|e| e.to_string())?;

        let origin = self.gaze_origin.map(vec3);
        let raw = match (self.gaze_target, self.gaze_direction) {
            (Some(_), Some(_)) => return Err("both gaze_target and gaze_direction given (ambiguous)".into()),
            (None, None) => return Err("one of gaze_target or gaze_direction is required".into()),
            (None, Some(d)) => vec3(d),
            (Some(t), None) => {
                let o = origin.ok_or("gaze_target requires gaze_origin")?;
                vec3(t) - o
            }
        };
        if let Some(o) = origin {
            if !finite(o.as_slice()) {
                return Err("gaze_origin is not finite".into());
            }
        }
        let gaze_direction = unit_direction(&raw).map_err(|e| format!("gaze: {e}"))?;

        let path = PathBuf::from(&self.image_path);
        let image_path = if path.is_absolute() { path } else { base.join(path) };
        Ok(SampleRecord {
            sample_id: self.sample_id,
            image_path,
            landmarks: self.landmarks.iter().map(|p| PixelPoint::new(p[0], p[1])).collect(),
            intrinsics,
            gaze_origin: origin,
            gaze_direction,
            user_id: self.user_id,
        })
    }
}

/// Parses and validates one manifest line.
pub fn parse_manifest_line(
    text: &str,
    base: &Path,
    expected_landmarks: Option<usize>,
) -> Result<SampleRecord, String> {
    let line: SampleRecordLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
    line.validate(base, expected_landmarks)
}

/// Parses manifest text. Blank lines are ignored, a repeated `sample_id` is
/// an error on the later line. Never fails; see [`ingest_manifest`].
pub fn parse_manifest(text: &str, base: &Path, expected_landmarks: Option<usize>) -> Ingest {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match parse_manifest_line(raw, base, expected_landmarks) {
            Ok(r) if !seen.insert(r.sample_id.clone()) => errors.push(LineError {
                line: i + 1,
                reason: format!("duplicate sample_id {:?}", r.sample_id),
            }),
            Ok(r) => records.push(r),
            Err(reason) => errors.push(LineError { line: i + 1, reason }),
        }
    }
    Ingest { records, errors }
}

/// Reads a manifest file. Invalid lines are reported in [`Ingest::errors`];
/// a file without any valid record is an error.
pub fn ingest_manifest(path: &Path, expected_landmarks: Option<usize>) -> Result<Ingest, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let ingest = parse_manifest(&text, base, expected_landmarks);
    if ingest.records.is_empty() {
        return Err(PipelineError::NoValidRecords(ingest.errors));
    }
    Ok(ingest)
}
