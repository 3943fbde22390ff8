//! Output dataset: `metadata.json`, `records.jsonl` and `patches/`.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::augment::{AugmentationParams, HeadPoseDistribution};
use crate::facemesh::EyeSide;
use crate::geometry::{AnglePair, RotationMatrix3};

pub const METADATA_FILE: &str = "metadata.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const PATCH_DIR: &str = "patches";

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> u8 {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

/// Parameters of one augmentation run, written once per output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub d_n: f64,
    pub f_n: f64,
    pub patch_width: u32,
    pub patch_height: u32,
    pub mean_yaw: f64,
    pub mean_pitch: f64,
    pub var_yaw: f64,
    pub var_pitch: f64,
    pub seed: u64,
    pub copies: u32,
    pub channels: Channels,
    pub background: u8,
    pub face_model: String,
    pub face_model_checksum: String,
    pub tool_version: String,
}

impl RunMetadata {
    pub fn new(
        params: &AugmentationParams,
        copies: u32,
        channels: Channels,
        background: u8,
        face_model: &str,
        face_model_checksum: &str,
    ) -> Self {
        let d = &params.distribution;
        Self {
            d_n: params.d_n,
            f_n: params.f_n,
            patch_width: params.patch_width,
            patch_height: params.patch_height,
            mean_yaw: d.mean_yaw,
            mean_pitch: d.mean_pitch,
            var_yaw: d.var_yaw,
            var_pitch: d.var_pitch,
            seed: params.seed,
            copies,
            channels,
            background,
            face_model: face_model.into(),
            face_model_checksum: face_model_checksum.into(),
            tool_version: TOOL_VERSION.into(),
        }
    }

    pub fn params(&self) -> AugmentationParams {
        AugmentationParams {
            d_n: self.d_n,
            f_n: self.f_n,
            patch_width: self.patch_width,
            patch_height: self.patch_height,
            seed: self.seed,
            distribution: HeadPoseDistribution {
                mean_yaw: self.mean_yaw,
                mean_pitch: self.mean_pitch,
                var_yaw: self.var_yaw,
                var_pitch: self.var_pitch,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn checksum(&self) -> String {
        let compact = serde_json::to_string(self).expect("metadata serializes");
        hex::encode(&Sha256::digest(compact.as_bytes())[..8])
    }

    pub fn load(dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = dir.join(METADATA_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        Self::from_json(&text)
            .map(Some)
            .map_err(|e| PipelineError::parse(&path, e))
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(METADATA_FILE);
        std::fs::write(&path, self.to_json() + "\n").map_err(|e| PipelineError::io(&path, e))
    }
}

/// One augmented training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub sample_id: String,
    pub copy_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    /// Relative to the output directory.
    pub left_patch_path: String,
    pub right_patch_path: String,
    pub head_pose_yaw_pitch: AnglePair,
    /// Row-major.
    pub head_pose_matrix: [[f64; 3]; 3],
    pub gaze: [f64; 3],
    pub params_ref: String,
}

impl AugmentedRecord {
    pub fn head_rotation(&self) -> RotationMatrix3 {
        let m = &self.head_pose_matrix;
        RotationMatrix3::from_matrix_unchecked(nalgebra::Matrix3::from_fn(|r, c| m[r][c]))
    }
}

pub fn matrix_rows(r: &RotationMatrix3) -> [[f64; 3]; 3] {
    let m = r.matrix();
    [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// `patches/<id>_<L|R>_<copy>.png`, with characters outside
/// `[A-Za-z0-9._-]` in the id replaced by `_`.
pub fn patch_path(sample_id: &str, side: EyeSide, copy: u32) -> String {
    format!("{PATCH_DIR}/{}_{}_{copy}.png", sanitize(sample_id), side.tag())
}

/// Reads `records.jsonl`. A trailing line that does not parse (an
/// interrupted write) is dropped and the file truncated to the last
/// complete record; any other bad line is an error.
pub fn read_records(path: &Path) -> Result<Vec<AugmentedRecord>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    let mut good_bytes = 0;
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<AugmentedRecord>(line) {
            Ok(r) => {
                records.push(r);
                good_bytes += line.len() + 1;
            }
            Err(e) if i + 1 == lines.len() => {
                log::warn!("{}: dropping incomplete last record ({e})", path.display());
                let file = OpenOptions::new().write(true).open(path).map_err(|e| PipelineError::io(path, e))?;
                file.set_len(good_bytes as u64).map_err(|e| PipelineError::io(path, e))?;
            }
            Err(e) => return Err(PipelineError::parse(path, e).at_line(i + 1)),
        }
    }
    Ok(records)
}

/// Appends complete lines to the records file; the only writer of it.
pub struct RecordWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RecordWriter {
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| PipelineError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, records: &[AugmentedRecord]) -> Result<(), PipelineError> {
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).expect("record serializes"));
            buf.push('\n');
        }
        self.out
            .write_all(buf.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| PipelineError::io(&self.path, e))
    }
}
