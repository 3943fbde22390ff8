//! Regenerates `data/canonical_face_468.json` from the procedural generator.

use std::path::PathBuf;

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/canonical_face_468.json"));
    let model = gazeaug_core::canonical::procedural_face_model();
    model.save(&out).expect("write face model");
    println!("wrote {} ({} vertices)", out.display(), model.vertices.len());
}
