//! The augmentation run over a whole manifest, and single-sample preview.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use super::manifest::{IntrinsicsLine, SampleRecord, SampleRecordLine};
use super::output::{
    matrix_rows, patch_path, read_records, AugmentedRecord, Channels, RecordWriter, RunMetadata, PATCH_DIR,
    RECORDS_FILE,
};
use super::{PipelineError, SampleError};
use crate::augment::{
    apply_augmentation, correct_gaze_to_base, make_virtual_camera, sample_head_pose, sample_rng, AugmentationParams,
    AugmentedPose, VirtualCamera,
};
use crate::camera::{CameraIntrinsics, PixelPoint};
use crate::facemesh::{build_textured_mesh, eye_center, EyeSide, FaceModel, TexturedMesh};
use crate::geometry::{unit_direction, AnglePair, Vec3};
use crate::imaging::Image;
use crate::pnp::{solve_pnp, PnPProblem, PnPSolution};
use crate::render::{render_view, View};

/// Samples handed to the worker pool per batch; records are appended after
/// each batch.
const BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    pub params: AugmentationParams,
    pub copies: u32,
    pub channels: Channels,
    pub background: u8,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            params: AugmentationParams::default(),
            copies: 1,
            channels: Channels::Gray,
            background: 0,
        }
    }
}

/// Recovered pose, textured canonical mesh and base-frame gaze of a sample.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub pnp: PnPSolution,
    pub mesh: TexturedMesh,
    pub gaze_base: Vec3,
}

pub fn prepare_sample(
    record: &SampleRecord,
    model: &FaceModel,
    channels: Channels,
) -> Result<PreparedSample, SampleError> {
    let image = Image::load(&record.image_path)?.with_channels(channels.count())?;
    record
        .intrinsics
        .validate(Some((image.width(), image.height())))?;
    let problem = PnPProblem::from_observations(model.vertices.clone(), &record.landmarks, &record.intrinsics)?;
    let pnp = solve_pnp(&problem, None)?;
    if !pnp.converged {
        return Err(SampleError::NotConverged {
            rms: pnp.rms_residual,
            iterations: pnp.iterations,
        });
    }
    let gaze_base = correct_gaze_to_base(&pnp.pose, &record.gaze_direction)?;
    let mesh = build_textured_mesh(model, &record.landmarks, &image)?;
    if mesh.clamped_landmarks {
        log::warn!("{}: landmarks outside the image were clamped", record.sample_id);
    }
    Ok(PreparedSample { pnp, mesh, gaze_base })
}

/// One re-posed copy of a sample with its two eye patches.
#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub angles: AnglePair,
    pub pose: AugmentedPose,
    pub left_camera: VirtualCamera,
    pub right_camera: VirtualCamera,
    pub left_patch: Image,
    pub right_patch: Image,
}

pub fn augment_prepared(
    prepared: &PreparedSample,
    model: &FaceModel,
    angles: AnglePair,
    params: &AugmentationParams,
    background: u8,
) -> Result<AugmentedSample, SampleError> {
    let pose = apply_augmentation(&prepared.mesh, &prepared.gaze_base, angles)?;
    let camera = |side| -> Result<VirtualCamera, SampleError> {
        Ok(make_virtual_camera(&eye_center(&pose.mesh.vertices, model, side)?, params))
    };
    let left_camera = camera(EyeSide::Left)?;
    let right_camera = camera(EyeSide::Right)?;
    let left_patch = render_view(&pose.mesh, &View::from(&left_camera), background);
    let right_patch = render_view(&pose.mesh, &View::from(&right_camera), background);
    Ok(AugmentedSample {
        angles,
        pose,
        left_camera,
        right_camera,
        left_patch,
        right_patch,
    })
}

/// Head-pose draws for all copies of the sample at `index`, in copy order.
pub fn draw_angles(params: &AugmentationParams, index: usize, copies: u32) -> Vec<AnglePair> {
    let mut rng = sample_rng(params.seed, index as u64);
    (0..copies)
        .map(|_| sample_head_pose(&params.distribution, &mut rng))
        .collect()
}

/// All copies of one sample, in memory.
pub fn augment_sample(
    record: &SampleRecord,
    index: usize,
    model: &FaceModel,
    options: &AugmentOptions,
) -> Result<Vec<AugmentedSample>, SampleError> {
    let prepared = prepare_sample(record, model, options.channels)?;
    draw_angles(&options.params, index, options.copies)
        .into_iter()
        .map(|a| augment_prepared(&prepared, model, a, &options.params, options.background))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub samples: usize,
    /// Samples whose copies were all present from an earlier run.
    pub skipped_samples: usize,
    pub failed: Vec<(String, String)>,
    pub records_written: usize,
}

impl RunSummary {
    pub fn attempted(&self) -> usize {
        self.samples - self.skipped_samples
    }
}

enum Outcome {
    Skipped,
    Done(Vec<AugmentedRecord>),
}

fn process(
    record: &SampleRecord,
    index: usize,
    model: &FaceModel,
    options: &AugmentOptions,
    existing: &HashSet<(String, u32)>,
    params_ref: &str,
    out_dir: &Path,
) -> Result<Outcome, SampleError> {
    let angles = draw_angles(&options.params, index, options.copies);
    let todo: Vec<u32> = (0..options.copies)
        .filter(|&c| !existing.contains(&(record.sample_id.clone(), c)))
        .collect();
    if todo.is_empty() {
        return Ok(Outcome::Skipped);
    }
    let prepared = prepare_sample(record, model, options.channels)?;
    let mut out = Vec::with_capacity(todo.len());
    for copy in todo {
        let s = augment_prepared(&prepared, model, angles[copy as usize], &options.params, options.background)?;
        let left = patch_path(&record.sample_id, EyeSide::Left, copy);
        let right = patch_path(&record.sample_id, EyeSide::Right, copy);
        s.left_patch.save_png(&out_dir.join(&left))?;
        s.right_patch.save_png(&out_dir.join(&right))?;
        let gaze = unit_direction(&s.pose.gaze)?;
        out.push(AugmentedRecord {
            sample_id: record.sample_id.clone(),
            copy_index: copy,
            user_id: record.user_id.clone(),
            left_patch_path: left,
            right_patch_path: right,
            head_pose_yaw_pitch: s.angles,
            head_pose_matrix: matrix_rows(&s.pose.rotation),
            gaze: [gaze.x, gaze.y, gaze.z],
            params_ref: params_ref.to_string(),
        });
    }
    Ok(Outcome::Done(out))
}

/// Augments every record into `out_dir`.
///
/// Sample `i` (position in `records`) draws its head poses from RNG stream
/// `i` of the run seed, so output does not depend on scheduling. Records are
/// appended in input order. An existing output directory is resumed: its
/// metadata must match and `(sample_id, copy_index)` pairs already present
/// are not redone. Failed samples are logged and skipped; more than half
/// failing makes the run fail.
pub fn augment_dataset(
    records: &[SampleRecord],
    model: &FaceModel,
    options: &AugmentOptions,
    out_dir: &Path,
) -> Result<RunSummary, PipelineError> {
    options.params.validate()?;
    model.validate()?;
    let patches = out_dir.join(PATCH_DIR);
    std::fs::create_dir_all(&patches).map_err(|e| PipelineError::io(&patches, e))?;

    let meta = RunMetadata::new(
        &options.params,
        options.copies,
        options.channels,
        options.background,
        &model.name,
        &model.checksum(),
    );
    let records_path = out_dir.join(RECORDS_FILE);
    match RunMetadata::load(out_dir)? {
        Some(old) if old != meta => return Err(PipelineError::MetadataMismatch(out_dir.to_path_buf())),
        Some(_) => log::info!("resuming run in {}", out_dir.display()),
        None if records_path.exists() => return Err(PipelineError::MetadataMismatch(out_dir.to_path_buf())),
        None => meta.save(out_dir)?,
    }
    let existing: HashSet<(String, u32)> = read_records(&records_path)?
        .into_iter()
        .map(|r| (r.sample_id, r.copy_index))
        .collect();
    let params_ref = meta.checksum();
    let mut writer = RecordWriter::open(&records_path)?;

    let mut summary = RunSummary {
        samples: records.len(),
        ..Default::default()
    };
    for (batch_no, batch) in records.chunks(BATCH).enumerate() {
        let base = batch_no * BATCH;
        let results: Vec<_> = batch
            .par_iter()
            .enumerate()
            .map(|(k, r)| process(r, base + k, model, options, &existing, &params_ref, out_dir))
            .collect();
        let mut done = Vec::new();
        for (record, result) in batch.iter().zip(results) {
            match result {
                Ok(Outcome::Skipped) => summary.skipped_samples += 1,
                Ok(Outcome::Done(recs)) => done.extend(recs),
                Err(e) => {
                    log::warn!("sample {}: {e}", record.sample_id);
                    summary.failed.push((record.sample_id.clone(), e.to_string()));
                }
            }
        }
        writer.append(&done)?;
        summary.records_written += done.len();
        log::info!("{}/{} samples", base + batch.len(), records.len());
    }

    if summary.failed.len() * 2 > summary.attempted() {
        return Err(PipelineError::TooManyFailures {
            failed: summary.failed.len(),
            attempted: summary.attempted(),
        });
    }
    Ok(summary)
}

/// Distance and intrinsics of the whole-face preview camera.
pub const PREVIEW_DISTANCE: f64 = 500.0;
pub const PREVIEW_SIZE: u32 = 400;
pub const PREVIEW_FOCAL: f64 = 800.0;

/// Copy 0 of a sample seen whole-face from a frontal camera, plus its patches.
#[derive(Debug, Clone)]
pub struct Preview {
    pub face: Image,
    pub face_intrinsics: CameraIntrinsics,
    /// Projections of the transformed mesh vertices into `face`.
    pub landmarks: Vec<PixelPoint>,
    /// Mid-eye point in the preview camera frame.
    pub gaze_origin: Vec3,
    pub sample: AugmentedSample,
}

pub fn preview_sample(
    records: &[SampleRecord],
    sample_id: &str,
    model: &FaceModel,
    options: &AugmentOptions,
) -> Result<Preview, PipelineError> {
    let index = records
        .iter()
        .position(|r| r.sample_id == sample_id)
        .ok_or_else(|| PipelineError::UnknownSample(sample_id.into()))?;
    let wrap = |source| PipelineError::Sample {
        sample_id: sample_id.into(),
        source,
    };
    let prepared = prepare_sample(&records[index], model, options.channels).map_err(wrap)?;
    let angles = draw_angles(&options.params, index, 1)[0];
    let sample =
        augment_prepared(&prepared, model, angles, &options.params, options.background).map_err(wrap)?;

    let half = PREVIEW_SIZE as f64 / 2.0;
    let face_intrinsics = CameraIntrinsics::new(PREVIEW_FOCAL, PREVIEW_FOCAL, half, half);
    let origin = Vec3::new(0.0, 0.0, -PREVIEW_DISTANCE);
    let view = View {
        origin,
        fx: PREVIEW_FOCAL,
        fy: PREVIEW_FOCAL,
        cx: half,
        cy: half,
        width: PREVIEW_SIZE,
        height: PREVIEW_SIZE,
    };
    let face = render_view(&sample.pose.mesh, &view, options.background);
    let landmarks = sample
        .pose
        .mesh
        .vertices
        .iter()
        .map(|v| face_intrinsics.project(&(v - origin)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wrap(e.into()))?;
    let eyes = [EyeSide::Left, EyeSide::Right]
        .map(|s| eye_center(&sample.pose.mesh.vertices, model, s).expect("validated model"));
    Ok(Preview {
        face,
        face_intrinsics,
        landmarks,
        gaze_origin: (eyes[0] + eyes[1]) / 2.0 - origin,
        sample,
    })
}

impl Preview {
    /// Writes `out` (face PNG), `<stem>_L.png`, `<stem>_R.png` and
    /// `<stem>.jsonl`, a one-line manifest describing the face image.
    pub fn save(&self, sample_id: &str, out: &Path) -> Result<(), PipelineError> {
        let stem = out.with_extension("");
        let name = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            std::path::PathBuf::from(s)
        };
        let save = |img: &Image, path: &Path| {
            img.save_png(path).map_err(|e| PipelineError::Sample {
                sample_id: sample_id.into(),
                source: e.into(),
            })
        };
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        save(&self.face, out)?;
        save(&self.sample.left_patch, &name("_L.png"))?;
        save(&self.sample.right_patch, &name("_R.png"))?;

        let g = self.sample.pose.gaze;
        let line = SampleRecordLine {
            sample_id: format!("{sample_id}_preview"),
            image_path: out
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            landmarks: self.landmarks.iter().map(|p| [p.u, p.v]).collect(),
            intrinsics: IntrinsicsLine::from(&self.face_intrinsics),
            gaze_origin: Some(self.gaze_origin.into()),
            gaze_target: None,
            gaze_direction: Some([g.x, g.y, g.z]),
            user_id: None,
        };
        let path = name(".jsonl");
        let text = serde_json::to_string(&line).expect("manifest line serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }
}
