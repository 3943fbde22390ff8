use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gazeaug_core::canonical::procedural_face_model;
use gazeaug_core::geometry::{angular_error, rotation_angle_between, rotation_from_yaw_pitch, AnglePair, Vec3};
use gazeaug_core::pipeline::manifest::{ingest_manifest, SampleRecord};
use gazeaug_core::pipeline::output::{read_records, AugmentedRecord, RunMetadata};
use gazeaug_core::pipeline::run::{draw_angles, prepare_sample};
use gazeaug_core::pipeline::{
    augment_dataset, preview_sample, stats, AugmentOptions, Channels, PipelineError,
};
use gazeaug_core::synthetic::{random_pose, write_dataset};
use gazeaug_core::{AugmentationParams, FaceModel, HeadPoseDistribution};

const DATA_SEED: u64 = 5;

fn dataset(dir: &Path, count: usize) -> (FaceModel, Vec<SampleRecord>) {
    let model = procedural_face_model();
    let manifest = write_dataset(&dir.join("data"), &model, count, DATA_SEED).unwrap();
    let records = ingest_manifest(&manifest, Some(model.vertices.len())).unwrap().records;
    (model, records)
}

fn fixed_pose_options(copies: u32) -> AugmentOptions {
    AugmentOptions {
        params: AugmentationParams {
            distribution: HeadPoseDistribution {
                mean_yaw: -5.0,
                mean_pitch: 30.0,
                var_yaw: 0.0,
                var_pitch: 0.0,
            },
            ..AugmentationParams::default()
        },
        copies,
        ..AugmentOptions::default()
    }
}

fn lines(path: &Path) -> BTreeSet<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn copies_and_degenerate_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 4);
    let out = dir.path().join("out");
    let summary = augment_dataset(&records, &model, &fixed_pose_options(3), &out).unwrap();
    assert_eq!(summary.records_written, 12);
    assert!(summary.failed.is_empty());

    let recs = read_records(&out.join("records.jsonl")).unwrap();
    assert_eq!(recs.len(), 12);
    let meta = RunMetadata::load(&out).unwrap().unwrap();
    for r in &recs {
        assert_eq!(r.head_pose_yaw_pitch, AnglePair::new(-5.0, 30.0));
        let expected = rotation_from_yaw_pitch(r.head_pose_yaw_pitch);
        assert!((r.head_rotation().matrix() - expected.matrix()).abs().max() < 1e-9);
        assert!((Vec3::from(r.gaze).norm() - 1.0).abs() < 1e-6);
        assert_eq!(r.params_ref, meta.checksum());
        for p in [&r.left_patch_path, &r.right_patch_path] {
            let img = image::open(out.join(p)).unwrap();
            assert_eq!((img.width(), img.height()), (96, 64));
            assert_eq!(img.color(), image::ColorType::L8);
        }
    }
}

#[test]
fn augmented_gaze_matches_synthetic_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 5);
    let out = dir.path().join("out");
    let options = AugmentOptions {
        copies: 2,
        ..AugmentOptions::default()
    };
    augment_dataset(&records, &model, &options, &out).unwrap();
    let recs = read_records(&out.join("records.jsonl")).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(DATA_SEED);
    for (i, sample) in records.iter().enumerate() {
        let (pose, gaze_angles) = random_pose(&mut rng);
        let prepared = prepare_sample(sample, &model, Channels::Gray).unwrap();
        assert!(rotation_angle_between(&prepared.pnp.pose.rotation, &pose.rotation) < 1e-6);
        assert!((prepared.pnp.pose.translation - pose.translation).norm() < 1e-6);

        let base = rotation_from_yaw_pitch(gaze_angles) * -Vec3::z();
        let angles = draw_angles(&options.params, i, 2);
        for copy in 0..2 {
            let r = recs
                .iter()
                .find(|r| r.sample_id == sample.sample_id && r.copy_index == copy)
                .unwrap();
            assert_eq!(r.head_pose_yaw_pitch, angles[copy as usize]);
            let expected = rotation_from_yaw_pitch(angles[copy as usize]) * base;
            assert!(angular_error(&Vec3::from(r.gaze), &expected).unwrap() < 1e-6);
            assert!(Vec3::from(r.gaze).dot(&expected) > 0.0);
        }
    }
}

#[test]
fn same_seed_same_bytes_different_seed_different_poses() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 4);
    let run = |name: &str, seed: u64| {
        let mut options = AugmentOptions::default();
        options.params.seed = seed;
        augment_dataset(&records, &model, &options, &dir.path().join(name)).unwrap();
        std::fs::read(dir.path().join(name).join("records.jsonl")).unwrap()
    };
    let a = run("a", 42);
    assert_eq!(a, run("b", 42));
    assert_ne!(a, run("c", 43));
    for name in ["L", "R"] {
        let p = format!("patches/synth_00002_{name}_0.png");
        assert_eq!(
            std::fs::read(dir.path().join("a").join(&p)).unwrap(),
            std::fs::read(dir.path().join("b").join(&p)).unwrap()
        );
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 6);
    let options = AugmentOptions {
        copies: 2,
        ..AugmentOptions::default()
    };
    let full = dir.path().join("full");
    augment_dataset(&records, &model, &options, &full).unwrap();

    let resumed = dir.path().join("resumed");
    augment_dataset(&records[..3], &model, &options, &resumed).unwrap();
    // simulate a crash in the middle of writing a record
    let path = resumed.join("records.jsonl");
    let mut text = std::fs::read_to_string(&path).unwrap();
    let cut = text.trim_end().rfind('\n').unwrap() + 20;
    text.truncate(cut);
    std::fs::write(&path, text).unwrap();

    let summary = augment_dataset(&records, &model, &options, &resumed).unwrap();
    assert_eq!(summary.skipped_samples, 2);
    assert_eq!(summary.records_written, 7);
    assert_eq!(lines(&path), lines(&full.join("records.jsonl")));

    let again = augment_dataset(&records, &model, &options, &resumed).unwrap();
    assert_eq!(again.skipped_samples, 6);
    assert_eq!(again.records_written, 0);
}

#[test]
fn resume_with_other_parameters_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 2);
    let out = dir.path().join("out");
    augment_dataset(&records, &model, &AugmentOptions::default(), &out).unwrap();
    let mut other = AugmentOptions::default();
    other.params.f_n = 900.0;
    let err = augment_dataset(&records, &model, &other, &out).unwrap_err();
    assert!(matches!(err, PipelineError::MetadataMismatch(_)));
}

#[test]
fn failures_are_counted_and_abort_past_half() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 3);
    let broken = |n: usize| {
        let mut r = records.clone();
        for rec in r.iter_mut().take(n) {
            rec.image_path = dir.path().join("missing.png");
        }
        r
    };
    let summary = augment_dataset(&broken(1), &model, &AugmentOptions::default(), &dir.path().join("one")).unwrap();
    assert_eq!(summary.failed.len(), 1);
    assert_eq!(summary.failed[0].0, "synth_00000");
    assert_eq!(summary.records_written, 2);

    let err = augment_dataset(&broken(2), &model, &AugmentOptions::default(), &dir.path().join("two")).unwrap_err();
    assert!(matches!(err, PipelineError::TooManyFailures { failed: 2, attempted: 3 }));
}

#[test]
fn stats_on_fixed_pose_output_concentrates_in_one_bin() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 3);
    let out = dir.path().join("out");
    augment_dataset(&records, &model, &fixed_pose_options(2), &out).unwrap();
    let h = stats(&out.join("records.jsonl"), None).unwrap();
    let at = |deg: f64| h.centers.iter().position(|&c| c == deg).unwrap();
    assert_eq!(h.head_pitch[at(30.0)], 6);
    assert_eq!(h.head_pitch.iter().sum::<u64>(), 6);
    assert_eq!(h.head_yaw[at(-4.0)], 6);
    assert_eq!(h.gaze_yaw.iter().sum::<u64>(), 6);
}

#[test]
fn stats_head_pitch_mean_over_default_draws() {
    let dir = tempfile::tempdir().unwrap();
    let params = AugmentationParams::default();
    let mut text = String::new();
    for i in 0..10_000 {
        let a = draw_angles(&params, i, 1)[0];
        let rot = rotation_from_yaw_pitch(a);
        let m = rot.matrix();
        let r = AugmentedRecord {
            sample_id: format!("s{i}"),
            copy_index: 0,
            user_id: None,
            left_patch_path: String::new(),
            right_patch_path: String::new(),
            head_pose_yaw_pitch: a,
            head_pose_matrix: [0, 1, 2].map(|k| [m[(k, 0)], m[(k, 1)], m[(k, 2)]]),
            gaze: [0.0, 0.0, 1.0],
            params_ref: String::new(),
        };
        text.push_str(&serde_json::to_string(&r).unwrap());
        text.push('\n');
    }
    let path = dir.path().join("records.jsonl");
    std::fs::write(&path, text).unwrap();
    let h = stats(&path, None).unwrap();
    let pitch = h.mean(&h.head_pitch).unwrap();
    let yaw = h.mean(&h.head_yaw).unwrap();
    assert!((pitch - 30.0).abs() < 0.5, "{pitch}");
    assert!(yaw.abs() < 0.5, "{yaw}");
}

#[test]
fn stats_solves_head_pose_for_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = dataset(dir.path(), 4);
    let h = stats(&dir.path().join("data/manifest.jsonl"), Some(&model)).unwrap();
    assert_eq!(h.head_pitch.iter().sum::<u64>(), 4);
    assert_eq!(h.gaze_pitch.iter().sum::<u64>(), 4);
    let without = stats(&dir.path().join("data/manifest.jsonl"), None).unwrap();
    assert_eq!(without.head_pitch.iter().sum::<u64>(), 0);
}

#[test]
fn preview_emits_an_ingestible_manifest_line() {
    let dir = tempfile::tempdir().unwrap();
    let (model, records) = dataset(dir.path(), 2);
    let options = AugmentOptions {
        channels: Channels::Rgb,
        ..AugmentOptions::default()
    };
    let preview = preview_sample(&records, "synth_00001", &model, &options).unwrap();
    let out = dir.path().join("preview.png");
    preview.save("synth_00001", &out).unwrap();
    for f in ["preview.png", "preview_L.png", "preview_R.png", "preview.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let ingest = ingest_manifest(&dir.path().join("preview.jsonl"), Some(model.vertices.len())).unwrap();
    assert!(ingest.errors.is_empty());
    let rec = &ingest.records[0];
    assert_eq!(rec.image_path, out);
    let img = image::open(&out).unwrap();
    assert_eq!(img.color(), image::ColorType::Rgb8);
    assert!(rec
        .landmarks
        .iter()
        .all(|p| p.u >= 0.0 && p.v >= 0.0 && p.u < img.width() as f64 && p.v < img.height() as f64));

    // the sidecar is itself augmentable
    let prepared = prepare_sample(rec, &model, Channels::Gray).unwrap();
    assert!(prepared.pnp.rms_residual < 1e-6);

    assert!(matches!(
        preview_sample(&records, "nope", &model, &options),
        Err(PipelineError::UnknownSample(_))
    ));
}
