//! Procedural 468-landmark canonical face model.
//!
//! The bundled model is a smooth face-shaped height field sampled on a
//! sunflower lattice, with explicit eye corners, eyelid rings, nose tip,
//! chin and mouth corners. It is the default model for synthetic data and
//! tests; real aligner topologies ship their own model file.
//!
//! Frame: `+x` towards the subject's left, `+y` down, face-forward `−z`,
//! millimetres, origin at the vertex centroid.

use std::f64::consts::PI;

use crate::camera::PixelPoint;
use crate::facemesh::{triangulate_fallback, FaceModel};
use crate::geometry::Vec3;

pub const LANDMARK_COUNT: usize = 468;
pub const MODEL_NAME: &str = "procedural-468-v1";

/// Bundled copy of [`procedural_face_model`] as a face model file.
pub const BUNDLED_MODEL_JSON: &str = include_str!("../data/canonical_face_468.json");

const HALF_WIDTH: f64 = 72.0;
const HALF_HEIGHT: f64 = 95.0;
const EYE_Y: f64 = -22.0;
const EYE_INNER_X: f64 = 18.0;
const EYE_OUTER_X: f64 = 47.0;
const EYE_RING_SEMI_X: f64 = 14.5;
const EYE_RING_SEMI_Y: f64 = 6.0;
const MIN_SPACING: f64 = 4.0;

/// Surface depth (mm, negative towards the viewer) before centring.
pub fn surface_depth(x: f64, y: f64) -> f64 {
    let dome = 1.0 - (x / 85.0).powi(2) - (y / 110.0).powi(2);
    let base = -45.0 * dome.max(0.0).sqrt();
    let nose = -28.0 * (-(x * x) / (2.0 * 8.0 * 8.0) - (y - 5.0).powi(2) / (2.0 * 16.0 * 16.0)).exp();
    let eye_c = (EYE_INNER_X + EYE_OUTER_X) / 2.0;
    let socket = 6.0 * (-((x.abs() - eye_c).powi(2) + (y - EYE_Y).powi(2)) / (2.0 * 11.0 * 11.0)).exp();
    base + nose + socket
}

/// Row of the deepest point on the midline, to 0.01 mm.
fn nose_tip_y() -> f64 {
    (0..=3000)
        .map(|k| -10.0 + k as f64 * 0.01)
        .min_by(|a, b| surface_depth(0.0, *a).total_cmp(&surface_depth(0.0, *b)))
        .expect("non-empty range")
}

fn anchor_points() -> Vec<(f64, f64)> {
    let mut pts = vec![
        (EYE_OUTER_X, EYE_Y),
        (EYE_INNER_X, EYE_Y),
        (-EYE_INNER_X, EYE_Y),
        (-EYE_OUTER_X, EYE_Y),
        (0.0, nose_tip_y()),
        (0.0, 88.0),
        (24.0, 48.0),
        (-24.0, 48.0),
    ];
    let eye_c = (EYE_INNER_X + EYE_OUTER_X) / 2.0;
    for side in [1.0, -1.0] {
        pts.push((side * eye_c, EYE_Y));
        for k in [1, 2, 3, 4, 6, 7, 8, 9] {
            let a = k as f64 * PI / 5.0;
            pts.push((
                side * (eye_c + EYE_RING_SEMI_X * a.cos()),
                EYE_Y + EYE_RING_SEMI_Y * a.sin(),
            ));
        }
    }
    pts
}

fn inside_eye_ring(x: f64, y: f64) -> bool {
    let eye_c = (EYE_INNER_X + EYE_OUTER_X) / 2.0;
    let dx = (x.abs() - eye_c) / (EYE_RING_SEMI_X + 2.0);
    let dy = (y - EYE_Y) / (EYE_RING_SEMI_Y + 2.0);
    dx * dx + dy * dy < 1.0
}

fn sunflower(n: usize, anchors: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let r = ((k as f64 + 0.5) / n as f64).sqrt();
            let a = k as f64 * golden;
            (HALF_WIDTH * r * a.cos(), HALF_HEIGHT * r * a.sin())
        })
        .filter(|&(x, y)| {
            !inside_eye_ring(x, y)
                && anchors
                    .iter()
                    .all(|&(ax, ay)| (ax - x).hypot(ay - y) >= MIN_SPACING)
        })
        .collect()
}

/// Generates the canonical model. Deterministic.
pub fn procedural_face_model() -> FaceModel {
    let anchors = anchor_points();
    let needed = LANDMARK_COUNT - anchors.len();
    let fill = (needed..4 * needed)
        .map(|n| sunflower(n, &anchors))
        .find(|pts| pts.len() == needed)
        .expect("some lattice size yields the exact landmark count");

    let planar: Vec<(f64, f64)> = anchors.into_iter().chain(fill).collect();
    let mut vertices: Vec<Vec3> = planar
        .iter()
        .map(|&(x, y)| Vec3::new(x, y, surface_depth(x, y)))
        .collect();
    let centroid = vertices.iter().sum::<Vec3>() / vertices.len() as f64;
    for v in &mut vertices {
        *v -= centroid;
    }

    let screen: Vec<PixelPoint> = planar.iter().map(|&(x, y)| PixelPoint::new(x, y)).collect();
    let triangles = triangulate_fallback(&screen).expect("lattice is not collinear");

    FaceModel::new(MODEL_NAME, vertices, Some(triangles), vec![0, 1], vec![2, 3])
        .expect("procedural model is valid")
}

/// Parses the bundled model file.
pub fn bundled_face_model() -> FaceModel {
    FaceModel::from_json(BUNDLED_MODEL_JSON).expect("bundled face model parses")
}
