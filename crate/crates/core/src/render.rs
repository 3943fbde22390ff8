//! Software rasterizer for textured face meshes.
//!
//! Pinhole projection with a z-buffer, near-plane clipping at 1 mm,
//! perspective-correct (1/z-weighted) texture coordinates and bilinear
//! clamp-to-edge texture lookups. Pixel `(i, j)` is sampled at its centre
//! `(i + 0.5, j + 0.5)`. Triangles are double-sided. Pixels exactly on an
//! edge shared by two triangles belong to exactly one of them, so the
//! output does not depend on triangle submission order.

use crate::augment::VirtualCamera;
use crate::facemesh::TexturedMesh;
use crate::geometry::Vec3;
use crate::imaging::{quantize, EyePatchImage, Image};

/// Triangles are clipped against `z = NEAR_PLANE` (mm, camera frame).
pub const NEAR_PLANE: f64 = 1.0;

/// Pinhole view of a camera at `origin` looking down `+z`, axis-aligned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub origin: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl From<&VirtualCamera> for View {
    fn from(cam: &VirtualCamera) -> Self {
        let pp = cam.principal_point();
        View {
            origin: cam.origin,
            fx: cam.focal,
            fy: cam.focal,
            cx: pp.u,
            cy: pp.v,
            width: cam.width,
            height: cam.height,
        }
    }
}

impl View {
    fn to_screen(&self, p: &Vec3) -> [f64; 2] {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }
}

/// Per-pixel depth, `+∞` where nothing has been drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    width: u32,
    height: u32,
    depth: Vec<f64>,
}

impl DepthBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.depth[y as usize * self.width as usize + x as usize]
    }

    fn test_and_set(&mut self, x: u32, y: u32, z: f64) -> bool {
        let slot = &mut self.depth[y as usize * self.width as usize + x as usize];
        if z < *slot {
            *slot = z;
            true
        } else {
            false
        }
    }
}

/// One covered pixel of a triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub x: u32,
    pub y: u32,
    /// Camera-frame depth of the surface point seen through the pixel centre.
    pub depth: f64,
    pub uv: [f64; 2],
}

#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    pos: Vec3,
    uv: [f64; 2],
}

fn clip_near(tri: [ClipVertex; 3]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.pos.z >= NEAR_PLANE;
        let b_in = b.pos.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.pos.z) / (b.pos.z - a.pos.z);
            let mut pos = a.pos + (b.pos - a.pos) * t;
            pos.z = NEAR_PLANE;
            out.push(ClipVertex {
                pos,
                uv: [a.uv[0] + (b.uv[0] - a.uv[0]) * t, a.uv[1] + (b.uv[1] - a.uv[1]) * t],
            });
        }
    }
    out
}

/// Edge function evaluated with endpoints in a canonical order, so that the
/// two triangles sharing an edge see exactly opposite values.
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let swap = (b[0], b[1]) < (a[0], a[1]);
    let (a, b) = if swap { (b, a) } else { (a, b) };
    let e = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if swap {
        -e
    } else {
        e
    }
}

/// Ownership of boundary pixels for an edge of a positively oriented triangle.
fn owns_boundary(a: [f64; 2], b: [f64; 2]) -> bool {
    let dy = b[1] - a[1];
    dy < 0.0 || (dy == 0.0 && b[0] - a[0] > 0.0)
}

/// Visits every pixel whose centre lies inside the projection of the
/// camera-frame triangle `tri`, after near-plane clipping. Depth and uv are
/// perspective-correct.
pub fn rasterize_fragments(
    tri: [Vec3; 3],
    uvs: [[f64; 2]; 3],
    view: &View,
    mut visit: impl FnMut(Fragment),
) {
    if tri.iter().all(|p| p.z < NEAR_PLANE) {
        return;
    }
    let poly = clip_near([
        ClipVertex { pos: tri[0], uv: uvs[0] },
        ClipVertex { pos: tri[1], uv: uvs[1] },
        ClipVertex { pos: tri[2], uv: uvs[2] },
    ]);
    for k in 1..poly.len().saturating_sub(1) {
        rasterize_clipped([poly[0], poly[k], poly[k + 1]], view, &mut visit);
    }
}

fn rasterize_clipped(tri: [ClipVertex; 3], view: &View, visit: &mut impl FnMut(Fragment)) {
    let mut s = tri.map(|v| view.to_screen(&v.pos));
    let mut v = tri;
    let mut area = edge(s[0], s[1], s[2]);
    if !area.is_finite() || area == 0.0 {
        return;
    }
    if area < 0.0 {
        s.swap(1, 2);
        v.swap(1, 2);
        area = -area;
    }

    let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let (w, h) = (view.width as f64, view.height as f64);
    if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
        return;
    }
    let x0 = (min_x - 0.5).floor().max(0.0) as u32;
    let y0 = (min_y - 0.5).floor().max(0.0) as u32;
    let x1 = ((max_x - 0.5).ceil().min(w - 1.0)).max(0.0) as u32;
    let y1 = ((max_y - 0.5).ceil().min(h - 1.0)).max(0.0) as u32;

    let owns = [
        owns_boundary(s[1], s[2]),
        owns_boundary(s[2], s[0]),
        owns_boundary(s[0], s[1]),
    ];
    let inv_z = v.map(|c| 1.0 / c.pos.z);

    for py in y0..=y1 {
        for px in x0..=x1 {
            let p = [px as f64 + 0.5, py as f64 + 0.5];
            let w0 = edge(s[1], s[2], p);
            let w1 = edge(s[2], s[0], p);
            let w2 = edge(s[0], s[1], p);
            let inside = [w0, w1, w2]
                .iter()
                .zip(owns)
                .all(|(&e, own)| e > 0.0 || (e == 0.0 && own));
            if !inside {
                continue;
            }
            let b = [w0 / area, w1 / area, w2 / area];
            let pw = [b[0] * inv_z[0], b[1] * inv_z[1], b[2] * inv_z[2]];
            let denom = pw[0] + pw[1] + pw[2];
            let uv = [
                (pw[0] * v[0].uv[0] + pw[1] * v[1].uv[0] + pw[2] * v[2].uv[0]) / denom,
                (pw[0] * v[0].uv[1] + pw[1] * v[1].uv[1] + pw[2] * v[2].uv[1]) / denom,
            ];
            visit(Fragment {
                x: px,
                y: py,
                depth: 1.0 / denom,
                uv,
            });
        }
    }
}

/// Rasterizes one camera-frame triangle into `target`, sampling `texture`
/// bilinearly and keeping the nearest surface per pixel.
///
/// # Panics
///
/// If `target`, `depth` and `view` sizes disagree, or the texture channel
/// count differs from the target's.
pub fn rasterize_triangle(
    tri: [Vec3; 3],
    uvs: [[f64; 2]; 3],
    texture: &Image,
    view: &View,
    target: &mut EyePatchImage,
    depth: &mut DepthBuffer,
) {
    assert_eq!((target.width(), target.height()), (depth.width(), depth.height()));
    assert_eq!((target.width(), target.height()), (view.width, view.height));
    assert_eq!(texture.channels(), target.channels());
    let (tw, th) = (texture.width() as f64, texture.height() as f64);
    let mut color = [0.0; 3];
    let mut px = [0u8; 3];
    rasterize_fragments(tri, uvs, view, |f| {
        if depth.test_and_set(f.x, f.y, f.depth) {
            texture.sample_bilinear(f.uv[0] * tw, f.uv[1] * th, &mut color);
            for (o, c) in px.iter_mut().zip(color) {
                *o = quantize(c);
            }
            target.put(f.x, f.y, &px);
        }
    });
}

/// Renders `mesh` through an arbitrary axis-aligned pinhole view.
pub fn render_view(mesh: &TexturedMesh, view: &View, background: u8) -> Image {
    let channels = mesh.texture.channels();
    let mut target = Image::new(view.width, view.height, channels, background)
        .expect("texture channel count is valid");
    let mut depth = DepthBuffer::new(view.width, view.height);
    let cam_space: Vec<Vec3> = mesh.vertices.iter().map(|p| p - view.origin).collect();
    for t in &mesh.triangles {
        rasterize_triangle(
            [cam_space[t[0]], cam_space[t[1]], cam_space[t[2]]],
            [mesh.uv[t[0]], mesh.uv[t[1]], mesh.uv[t[2]]],
            &mesh.texture,
            view,
            &mut target,
            &mut depth,
        );
    }
    target
}

/// Renders an eye patch through a virtual camera with a black background.
pub fn render(mesh: &TexturedMesh, cam: &VirtualCamera) -> EyePatchImage {
    render_view(mesh, &View::from(cam), 0)
}

pub fn render_with_background(mesh: &TexturedMesh, cam: &VirtualCamera, background: u8) -> EyePatchImage {
    render_view(mesh, &View::from(cam), background)
}
