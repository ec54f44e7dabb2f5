//! Scene assembly and z-buffered triangle rasterisation.

use image::{Rgb as Px, RgbImage};

use super::{CameraModel, IMAGE_HEIGHT, IMAGE_WIDTH, MISSING_DEPTH};
use crate::geometry::{Pixel, Rgb, Vec3};
use crate::sim::{BedFrame, Distractor, DistractorShape, WorldState};

pub const BACKGROUND: Rgb = Rgb([52, 54, 60]);
pub const FLOOR: Rgb = Rgb([96, 92, 88]);
pub const FRAME_TOP: Rgb = Rgb([176, 158, 128]);
pub const FRAME_SIDE: Rgb = Rgb([138, 122, 98]);

const NEAR: f64 = 0.05;
const FLOOR_HALF_SPAN: f64 = 12.0;
const DISK_SEGMENTS: usize = 16;

/// World-space triangle with a flat colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneTriangle {
    pub verts: [Vec3; 3],
    pub color: Rgb,
}

/// Everything visible: floor, frame box, sheet (face colour chosen by
/// which side faces the camera) and distractors.
pub fn scene_triangles(world: &WorldState, camera: &CameraModel) -> Vec<SceneTriangle> {
    let mut out = Vec::with_capacity(256);
    let frame = &world.frame;
    let eye = camera.eye();

    let s = FLOOR_HALF_SPAN;
    let (cx, cy) = (frame.width / 2.0, frame.length / 2.0);
    let floor = [
        Vec3::new(cx - s, cy - s, 0.0),
        Vec3::new(cx + s, cy - s, 0.0),
        Vec3::new(cx + s, cy + s, 0.0),
        Vec3::new(cx - s, cy + s, 0.0),
    ]
    .map(|p| frame.to_world(&p));
    push_quad(&mut out, floor, FLOOR);
    push_frame(&mut out, frame);

    let sheet = &world.sheet;
    for t in sheet.triangles() {
        let [a, b, c] = t.map(|i| sheet.positions[i]);
        let n = (b - a).cross(&(c - a));
        let color = if n.dot(&(eye - a)) >= 0.0 {
            sheet.top_color
        } else {
            sheet.bottom_color
        };
        out.push(SceneTriangle {
            verts: [a, b, c],
            color,
        });
    }

    for d in &world.distractors {
        push_distractor(&mut out, frame, d);
    }
    out
}

fn push_quad(out: &mut Vec<SceneTriangle>, q: [Vec3; 4], color: Rgb) {
    out.push(SceneTriangle {
        verts: [q[0], q[1], q[2]],
        color,
    });
    out.push(SceneTriangle {
        verts: [q[0], q[2], q[3]],
        color,
    });
}

fn push_frame(out: &mut Vec<SceneTriangle>, frame: &BedFrame) {
    let c = frame.box_corners();
    push_quad(out, [c[4], c[5], c[6], c[7]], FRAME_TOP);
    for i in 0..4 {
        let j = (i + 1) % 4;
        push_quad(out, [c[i], c[j], c[j + 4], c[i + 4]], FRAME_SIDE);
    }
}

fn shade(c: Rgb, k: f64) -> Rgb {
    Rgb(c.0.map(|x| (x as f64 * k).round().clamp(0.0, 255.0) as u8))
}

fn push_distractor(out: &mut Vec<SceneTriangle>, frame: &BedFrame, d: &Distractor) {
    let base = frame.to_local(&d.center);
    let ring: Vec<[f64; 2]> = match d.shape {
        DistractorShape::Disk => (0..DISK_SEGMENTS)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / DISK_SEGMENTS as f64;
                [base.x + d.extent * a.cos(), base.y + d.extent * a.sin()]
            })
            .collect(),
        DistractorShape::Box => {
            let e = d.extent;
            vec![
                [base.x - e, base.y - e],
                [base.x + e, base.y - e],
                [base.x + e, base.y + e],
                [base.x - e, base.y + e],
            ]
        }
    };
    let lo = |p: &[f64; 2]| frame.to_world(&Vec3::new(p[0], p[1], base.z));
    let hi = |p: &[f64; 2]| frame.to_world(&Vec3::new(p[0], p[1], base.z + d.height));
    let top_centre = frame.to_world(&Vec3::new(base.x, base.y, base.z + d.height));
    let side = shade(d.color, 0.85);
    for k in 0..ring.len() {
        let a = &ring[k];
        let b = &ring[(k + 1) % ring.len()];
        out.push(SceneTriangle {
            verts: [top_centre, hi(a), hi(b)],
            color: d.color,
        });
        push_quad(out, [lo(a), lo(b), hi(b), hi(a)], side);
    }
}

/// Camera-space polygon of the part of `tri` in front of the near plane.
fn clip_near(tri: [Vec3; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR;
        let b_in = b.z >= NEAR;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
    out
}

/// Draws the triangles with a depth buffer. Depth is interpolated as
/// `1/z` in screen space, which is exact for planar triangles.
pub(crate) fn rasterize(tris: &[SceneTriangle], camera: &CameraModel) -> (RgbImage, Vec<f32>) {
    let (w, h) = (IMAGE_WIDTH as usize, IMAGE_HEIGHT as usize);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut color = vec![BACKGROUND; w * h];
    for tri in tris {
        let pc = tri.verts.map(|p| camera.pose.inverse_transform_point(&p));
        let poly = clip_near(pc);
        if poly.len() < 3 {
            continue;
        }
        let px: Vec<(Pixel, f64)> = poly
            .iter()
            .map(|pc| (camera.camera_to_pixel(pc).expect("clipped vertex in front"), pc.z))
            .collect();
        for k in 1..px.len() - 1 {
            fill(&mut zbuf, &mut color, [px[0], px[k], px[k + 1]], tri.color);
        }
    }
    let mut img = RgbImage::new(IMAGE_WIDTH, IMAGE_HEIGHT);
    for (i, c) in color.iter().enumerate() {
        img.put_pixel((i % w) as u32, (i / w) as u32, Px(c.0));
    }
    let depth = zbuf
        .iter()
        .map(|&z| if z.is_finite() { z as f32 } else { MISSING_DEPTH })
        .collect();
    (img, depth)
}

fn fill(zbuf: &mut [f64], color: &mut [Rgb], v: [(Pixel, f64); 3], c: Rgb) {
    let (w, h) = (IMAGE_WIDTH as i64, IMAGE_HEIGHT as i64);
    let [(p0, z0), (p1, z1), (p2, z2)] = v;
    let area = (p1.u - p0.u) * (p2.v - p0.v) - (p1.v - p0.v) * (p2.u - p0.u);
    if area.abs() < 1e-12 {
        return;
    }
    let min_u = p0.u.min(p1.u).min(p2.u).ceil().max(0.0) as i64;
    let max_u = (p0.u.max(p1.u).max(p2.u).floor() as i64).min(w - 1);
    let min_v = p0.v.min(p1.v).min(p2.v).ceil().max(0.0) as i64;
    let max_v = (p0.v.max(p1.v).max(p2.v).floor() as i64).min(h - 1);
    if min_u > max_u || min_v > max_v {
        return;
    }
    let inv = 1.0 / area;
    let (iz0, iz1, iz2) = (1.0 / z0, 1.0 / z1, 1.0 / z2);
    let eps = -1e-9;
    for y in min_v..=max_v {
        let yf = y as f64;
        for x in min_u..=max_u {
            let xf = x as f64;
            let b0 = ((p1.u - xf) * (p2.v - yf) - (p1.v - yf) * (p2.u - xf)) * inv;
            let b1 = ((p2.u - xf) * (p0.v - yf) - (p2.v - yf) * (p0.u - xf)) * inv;
            let b2 = 1.0 - b0 - b1;
            if b0 < eps || b1 < eps || b2 < eps {
                continue;
            }
            let z = 1.0 / (b0 * iz0 + b1 * iz1 + b2 * iz2);
            let i = (y * w + x) as usize;
            if z < zbuf[i] {
                zbuf[i] = z;
                color[i] = c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    fn straight_down(h: f64) -> CameraModel {
        // looking along world -z with image-right = +x
        let pose = Pose::look_at(Vec3::new(0.0, 0.0, h), Vec3::zeros(), Vec3::y());
        CameraModel::new(500.0, 500.0, 319.5, 239.5, pose)
    }

    #[test]
    fn fronto_parallel_square_has_exact_depth() {
        let cam = straight_down(2.0);
        let q = [
            Vec3::new(-0.5, -0.5, 0.0),
            Vec3::new(0.5, -0.5, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
            Vec3::new(-0.5, 0.5, 0.0),
        ];
        let mut tris = Vec::new();
        push_quad(&mut tris, q, Rgb([10, 20, 30]));
        let (img, depth) = rasterize(&tris, &cam);
        let centre = (240 * 640 + 320) as usize;
        assert!((depth[centre] - 2.0).abs() < 1e-6);
        assert_eq!(img.get_pixel(320, 240).0, [10, 20, 30]);
        assert_eq!(depth[0], MISSING_DEPTH);
        assert_eq!(img.get_pixel(0, 0).0, BACKGROUND.0);
    }

    #[test]
    fn tilted_plane_depth_is_perspective_correct() {
        let pose = Pose::look_at(Vec3::new(0.0, -1.5, 1.5), Vec3::zeros(), Vec3::z());
        let cam = CameraModel::new(525.0, 525.0, 319.5, 239.5, pose);
        let q = [
            Vec3::new(-2.0, -1.0, 0.0),
            Vec3::new(2.0, -1.0, 0.0),
            Vec3::new(2.0, 2.0, 0.0),
            Vec3::new(-2.0, 2.0, 0.0),
        ];
        let mut tris = Vec::new();
        push_quad(&mut tris, q, FLOOR);
        let (_, depth) = rasterize(&tris, &cam);
        for (u, v) in [(100u32, 50u32), (320, 240), (600, 400)] {
            let z = depth[(v * 640 + u) as usize] as f64;
            let p = super::super::deproject(&Pixel::new(u as f64, v as f64), z, &cam).unwrap();
            assert!(p.z.abs() < 1e-5, "deprojected point {p:?} not on the plane");
        }
    }

    #[test]
    fn nearer_triangle_wins() {
        let cam = straight_down(2.0);
        let big = |z: f64, c| SceneTriangle {
            verts: [Vec3::new(-1.0, -1.0, z), Vec3::new(1.0, -1.0, z), Vec3::new(0.0, 1.0, z)],
            color: c,
        };
        for order in [[0.0, 0.5], [0.5, 0.0]] {
            let tris = [big(order[0], Rgb([1, 1, 1])), big(order[1], Rgb([2, 2, 2]))];
            let (img, _) = rasterize(&tris, &cam);
            let want = if order[0] > order[1] { [1, 1, 1] } else { [2, 2, 2] };
            assert_eq!(img.get_pixel(320, 240).0, want);
        }
    }

    #[test]
    fn triangle_straddling_the_camera_is_clipped() {
        let cam = straight_down(1.0);
        // vertical wall passing through the camera centre plane
        let t = SceneTriangle {
            verts: [Vec3::new(-1.0, 0.2, 2.0), Vec3::new(1.0, 0.2, 2.0), Vec3::new(0.0, 0.2, -2.0)],
            color: Rgb([9, 9, 9]),
        };
        let (img, depth) = rasterize(&[t], &cam);
        assert!(depth.iter().all(|d| d.is_finite() && *d >= 0.0));
        assert!(img.pixels().any(|p| p.0 == [9, 9, 9]));
    }
}
