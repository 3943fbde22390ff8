//! Gaze and head-pose angle histograms of a manifest or an augmented output.

use std::fmt::Write as _;
use std::path::Path;

use super::manifest::SampleRecordLine;
use super::output::AugmentedRecord;
use super::PipelineError;
use crate::facemesh::FaceModel;
use crate::geometry::{direction_to_yaw_pitch, yaw_pitch_from_rotation, AnglePair, Vec3};
use crate::pnp::{solve_pnp, PnPProblem};

pub const CSV_HEADER: &str = "bin_center_deg,gaze_yaw_count,gaze_pitch_count,head_yaw_count,head_pitch_count";

/// Counts over bins of width `bin_width` centred on `−90, −90 + w, …, 90`.
/// A bin covers `[c − w/2, c + w/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub centers: Vec<f64>,
    pub gaze_yaw: Vec<u64>,
    pub gaze_pitch: Vec<u64>,
    pub head_yaw: Vec<u64>,
    pub head_pitch: Vec<u64>,
    /// Angles outside every bin.
    pub out_of_range: u64,
}

impl Histogram {
    pub fn new(bin_width: f64) -> Self {
        let n = (180.0 / bin_width).round() as usize + 1;
        Self {
            bin_width,
            centers: (0..n).map(|k| -90.0 + k as f64 * bin_width).collect(),
            gaze_yaw: vec![0; n],
            gaze_pitch: vec![0; n],
            head_yaw: vec![0; n],
            head_pitch: vec![0; n],
            out_of_range: 0,
        }
    }

    fn bin(&self, deg: f64) -> Option<usize> {
        let k = ((deg + 90.0) / self.bin_width + 0.5).floor();
        (k >= 0.0 && (k as usize) < self.centers.len()).then_some(k as usize)
    }

    fn add(&mut self, deg: f64, pick: fn(&mut Self) -> &mut Vec<u64>) {
        match self.bin(deg) {
            Some(k) => pick(self)[k] += 1,
            None => self.out_of_range += 1,
        }
    }

    pub fn add_gaze(&mut self, a: AnglePair) {
        self.add(a.yaw, |h| &mut h.gaze_yaw);
        self.add(a.pitch, |h| &mut h.gaze_pitch);
    }

    pub fn add_head(&mut self, a: AnglePair) {
        self.add(a.yaw, |h| &mut h.head_yaw);
        self.add(a.pitch, |h| &mut h.head_pitch);
    }

    /// Mean of the bin centres weighted by `counts`.
    pub fn mean(&self, counts: &[u64]) -> Option<f64> {
        let n: u64 = counts.iter().sum();
        (n > 0).then(|| {
            counts
                .iter()
                .zip(&self.centers)
                .map(|(&c, x)| c as f64 * x)
                .sum::<f64>()
                / n as f64
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for (k, c) in self.centers.iter().enumerate() {
            writeln!(
                s,
                "{c},{},{},{},{}",
                self.gaze_yaw[k], self.gaze_pitch[k], self.head_yaw[k], self.head_pitch[k]
            )
            .unwrap();
        }
        s
    }
}

/// Yaw and pitch of a gaze direction with the forward/backward sign folded
/// away (`z → |z|`), so gaze towards and away from the camera both fall
/// inside `[−90°, 90°]`.
pub fn gaze_angles(dir: &Vec3) -> Result<AnglePair, crate::geometry::GeometryError> {
    direction_to_yaw_pitch(&Vec3::new(dir.x, dir.y, dir.z.abs()))
}

/// Histogram of an input manifest or an augmented `records.jsonl`, told
/// apart per line by the presence of `head_pose_matrix`. Head pose of a
/// manifest sample is solved with PnP when `model` is given.
pub fn stats(path: &Path, model: Option<&FaceModel>) -> Result<Histogram, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut hist = Histogram::new(2.0);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |e: String| PipelineError::parse(path, e).at_line(i + 1);
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if value.get("head_pose_matrix").is_some() {
            let r: AugmentedRecord = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
            let g = Vec3::from(r.gaze);
            hist.add_gaze(gaze_angles(&g).map_err(|e| fail(e.to_string()))?);
            hist.add_head(r.head_pose_yaw_pitch);
        } else {
            let raw: SampleRecordLine = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
            let r = raw.validate(base, model.map(|m| m.vertices.len())).map_err(fail)?;
            hist.add_gaze(gaze_angles(&r.gaze_direction).map_err(|e| fail(e.to_string()))?);
            if let Some(m) = model {
                let head = PnPProblem::from_observations(m.vertices.clone(), &r.landmarks, &r.intrinsics)
                    .and_then(|p| solve_pnp(&p, None));
                match head {
                    Ok(sol) => hist.add_head(yaw_pitch_from_rotation(&sol.pose.rotation)),
                    Err(e) => log::warn!("{}: no head pose ({e})", r.sample_id),
                }
            }
        }
    }
    Ok(hist)
}
