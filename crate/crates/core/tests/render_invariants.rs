use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gazeaug_core::canonical::procedural_face_model;
use gazeaug_core::geometry::{rotation_from_yaw_pitch, AnglePair, RigidTransform, Vec3};
use gazeaug_core::render::{render_view, View};
use gazeaug_core::synthetic::albedo_mesh;
use gazeaug_core::TexturedMesh;

fn posed_face() -> TexturedMesh {
    let model = procedural_face_model();
    albedo_mesh(&model).transformed(&RigidTransform::new(
        rotation_from_yaw_pitch(AnglePair::new(25.0, -10.0)),
        Vec3::new(5.0, -8.0, 420.0),
    ))
}

fn view() -> View {
    View {
        origin: Vec3::zeros(),
        fx: 700.0,
        fy: 700.0,
        cx: 160.0,
        cy: 120.0,
        width: 320,
        height: 240,
    }
}

#[test]
fn output_independent_of_triangle_order_and_winding() {
    let mesh = posed_face();
    let reference = render_view(&mesh, &view(), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for round in 0..4 {
        let mut shuffled = mesh.clone();
        shuffled.triangles.shuffle(&mut rng);
        for (k, t) in shuffled.triangles.iter_mut().enumerate() {
            match (k + round) % 3 {
                0 => t.rotate_left(1),
                1 => t.swap(0, 2),
                _ => {}
            }
        }
        assert_eq!(render_view(&shuffled, &view(), 7), reference, "round {round}");
    }
}

#[test]
fn moving_camera_and_mesh_together_changes_nothing() {
    // dyadic coordinates keep p + d − (o + d) exact
    let mut mesh = posed_face();
    for v in &mut mesh.vertices {
        *v = v.map(|c| (c * 64.0).round() / 64.0);
    }
    let reference = render_view(&mesh, &view(), 0);
    for d in [Vec3::new(0.5, -0.25, 0.125), Vec3::new(-128.0, 64.0, 256.0), Vec3::new(3.75, 1.5, -2.0)] {
        let mut moved = mesh.clone();
        for v in &mut moved.vertices {
            *v += d;
        }
        let mut v = view();
        v.origin += d;
        assert_eq!(render_view(&moved, &v, 0), reference, "offset {d:?}");
    }
}

#[test]
fn face_covers_expected_region() {
    let img = render_view(&posed_face(), &view(), 0);
    let lit = (0..img.height())
        .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| img.pixel(x, y) != [0, 0, 0])
        .count();
    // roughly 140 × 180 mm ellipse at 420 mm and f = 700
    assert!((15_000..45_000).contains(&lit), "{lit}");
}
