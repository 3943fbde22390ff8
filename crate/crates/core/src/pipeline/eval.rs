//! Mean angular gaze error between predictions and ground truth.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use super::PipelineError;
use crate::geometry::{angular_error, Vec3};

/// A gaze label: `gaze`, `gaze_direction`, or `gaze_target` with
/// `gaze_origin`. Manifests and augmented records both parse.
#[derive(Debug, Clone, Deserialize)]
struct GazeLine {
    sample_id: String,
    #[serde(default)]
    copy_index: Option<u32>,
    #[serde(default)]
    user_id: Option<String>,
    #[serde(default)]
    gaze: Option<[f64; 3]>,
    #[serde(default)]
    gaze_direction: Option<[f64; 3]>,
    #[serde(default)]
    gaze_origin: Option<[f64; 3]>,
    #[serde(default)]
    gaze_target: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeLabel {
    pub user_id: Option<String>,
    pub gaze: Vec3,
}

/// Keyed by `(sample_id, copy_index)`, copy 0 when absent.
pub type GazeSet = HashMap<(String, u32), GazeLabel>;

fn label(line: GazeLine) -> Result<((String, u32), GazeLabel), String> {
    let gaze = match (line.gaze.or(line.gaze_direction), line.gaze_target) {
        (Some(_), Some(_)) => return Err("both a gaze direction and gaze_target given".into()),
        (Some(g), None) => Vec3::from(g),
        (None, Some(t)) => Vec3::from(t) - Vec3::from(line.gaze_origin.ok_or("gaze_target requires gaze_origin")?),
        (None, None) => return Err("no gaze".into()),
    };
    Ok((
        (line.sample_id, line.copy_index.unwrap_or(0)),
        GazeLabel {
            user_id: line.user_id,
            gaze,
        },
    ))
}

pub fn read_gaze_file(path: &Path) -> Result<GazeSet, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = GazeSet::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let fail = |e: String| PipelineError::parse(path, e).at_line(i + 1);
        let line: GazeLine = serde_json::from_str(raw).map_err(|e| fail(e.to_string()))?;
        let (key, l) = label(line).map_err(fail)?;
        if out.insert(key.clone(), l).is_some() {
            return Err(fail(format!("duplicate sample {:?} copy {}", key.0, key.1)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserError {
    pub user_id: String,
    pub count: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub count: usize,
    /// Degrees.
    pub mean: f64,
    pub median: f64,
    pub per_user: Vec<UserError>,
    pub unmatched_predictions: Vec<String>,
    pub unmatched_truth: Vec<String>,
}

fn key_name(k: &(String, u32)) -> String {
    if k.1 == 0 {
        k.0.clone()
    } else {
        format!("{}#{}", k.0, k.1)
    }
}

/// Angular error of every prediction with a ground-truth match. Users come
/// from the truth labels, falling back to the prediction, then `"unknown"`.
pub fn evaluate(pred: &GazeSet, truth: &GazeSet) -> Result<EvalReport, PipelineError> {
    let mut keys: Vec<&(String, u32)> = pred.keys().filter(|k| truth.contains_key(*k)).collect();
    if keys.is_empty() {
        return Err(PipelineError::EmptyIntersection);
    }
    keys.sort();
    let mut errors = Vec::with_capacity(keys.len());
    let mut users: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for k in keys {
        let (p, t) = (&pred[k], &truth[k]);
        let e = angular_error(&t.gaze, &p.gaze).map_err(|e| PipelineError::Parse {
            path: Default::default(),
            line: None,
            message: format!("sample {}: {e}", key_name(k)),
        })?;
        errors.push(e);
        let user = t.user_id.clone().or_else(|| p.user_id.clone()).unwrap_or_else(|| "unknown".into());
        users.entry(user).or_default().push(e);
    }
    let unmatched = |a: &GazeSet, b: &GazeSet| {
        let mut v: Vec<String> = a.keys().filter(|k| !b.contains_key(*k)).map(key_name).collect();
        v.sort();
        v
    };
    let unmatched_predictions = unmatched(pred, truth);
    let unmatched_truth = unmatched(truth, pred);

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(EvalReport {
        count: n,
        mean: mean(&errors),
        median,
        per_user: users
            .into_iter()
            .map(|(user_id, v)| UserError {
                user_id,
                count: v.len(),
                mean: mean(&v),
            })
            .collect(),
        unmatched_predictions,
        unmatched_truth,
    })
}

pub fn evaluate_files(pred: &Path, truth: &Path) -> Result<EvalReport, PipelineError> {
    evaluate(&read_gaze_file(pred)?, &read_gaze_file(truth)?)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples: {}", self.count)?;
        writeln!(f, "mean_error_deg: {:.2}", self.mean)?;
        writeln!(f, "median_error_deg: {:.2}", self.median)?;
        for u in &self.per_user {
            writeln!(f, "user {}: n={} mean_error_deg={:.2}", u.user_id, u.count, u.mean)?;
        }
        for (what, ids) in [("predictions", &self.unmatched_predictions), ("ground truth", &self.unmatched_truth)] {
            if !ids.is_empty() {
                writeln!(f, "unmatched {what}: {} ({})", ids.len(), ids.join(", "))?;
            }
        }
        Ok(())
    }
}
