//! Synthetic pinhole RGB-D camera over a [`WorldState`].
//!
//! Camera coordinates follow the optical convention: `x` right, `y` down,
//! `z` forward. Depth maps hold camera-space `z` in metres, with
//! [`MISSING_DEPTH`] marking dropped pixels.

mod augment;
mod depth;
mod io;
mod raster;

pub use augment::{apply_lighting, augment, mirror, photometric_set};
pub use depth::median_depth;
pub use io::{encode_png, load_observation, read_depth, save_observation, write_depth, ObservationMeta};
pub use raster::{scene_triangles, SceneTriangle};

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pixel, Pose, Vec3};
use crate::sim::{BedFrame, Side, WorldState};

pub const IMAGE_WIDTH: u32 = 640;
pub const IMAGE_HEIGHT: u32 = 480;
/// Depth value of a pixel with no reading.
pub const MISSING_DEPTH: f32 = 0.0;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("point projects outside the image")]
    OutOfFrame,
    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),
    #[error("no valid depth in the window around ({u}, {v})")]
    NoDepth { u: i64, v: i64 },
    #[error("malformed depth raster: {0}")]
    BadDepthFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Pinhole camera with a fixed 640×480 sensor. A mirrored camera reports
/// every pixel at `639 - u`, which is what a horizontally flipped image
/// looks like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world transform.
    pub pose: Pose,
    #[serde(default)]
    pub mirrored: bool,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, pose: Pose) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        assert!((0.0..IMAGE_WIDTH as f64).contains(&cx), "cx outside the sensor");
        assert!((0.0..IMAGE_HEIGHT as f64).contains(&cy), "cy outside the sensor");
        Self {
            fx,
            fy,
            cx,
            cy,
            pose,
            mirrored: false,
        }
    }

    /// Same camera with the image flipped about the vertical axis.
    pub fn mirrored(&self) -> Self {
        Self {
            mirrored: !self.mirrored,
            ..*self
        }
    }

    pub fn eye(&self) -> Vec3 {
        self.pose.translation
    }

    /// Camera-space point to pixel, ignoring image bounds. `None` behind
    /// the camera.
    pub fn camera_to_pixel(&self, pc: &Vec3) -> Option<Pixel> {
        if pc.z <= 0.0 {
            return None;
        }
        let u = self.fx * pc.x / pc.z + self.cx;
        let v = self.fy * pc.y / pc.z + self.cy;
        let u = if self.mirrored {
            (IMAGE_WIDTH - 1) as f64 - u
        } else {
            u
        };
        Some(Pixel { u, v })
    }
}

pub fn in_frame(p: &Pixel) -> bool {
    p.u >= 0.0 && p.u <= (IMAGE_WIDTH - 1) as f64 && p.v >= 0.0 && p.v <= (IMAGE_HEIGHT - 1) as f64
}

/// World point to pixel. Points behind the camera or outside the image
/// are out of frame.
pub fn project(point: &Vec3, camera: &CameraModel) -> Result<Pixel, RenderError> {
    let pc = camera.pose.inverse_transform_point(point);
    match camera.camera_to_pixel(&pc) {
        Some(px) if in_frame(&px) => Ok(px),
        _ => Err(RenderError::OutOfFrame),
    }
}

/// Pixel plus camera-space depth back to a world point.
pub fn deproject(pixel: &Pixel, z: f64, camera: &CameraModel) -> Result<Vec3, RenderError> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(RenderError::InvalidDepth(z));
    }
    let u = if camera.mirrored {
        (IMAGE_WIDTH - 1) as f64 - pixel.u
    } else {
        pixel.u
    };
    let pc = Vec3::new((u - camera.cx) / camera.fx * z, (pixel.v - camera.cy) / camera.fy * z, z);
    Ok(camera.pose.transform_point(&pc))
}

/// Global illumination change applied multiplicatively to every channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightingParams {
    pub brightness: f64,
    pub tint: [f64; 3],
}

impl Default for LightingParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl LightingParams {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            tint: [1.0; 3],
        }
    }

    pub fn new(brightness: f64, tint: [f64; 3]) -> Self {
        let l = Self { brightness, tint };
        assert!(l.is_valid(), "lighting out of range: {l:?}");
        l
    }

    pub fn is_valid(&self) -> bool {
        (0.5..=1.5).contains(&self.brightness) && self.tint.iter().all(|t| (0.7..=1.3).contains(t))
    }

    pub fn is_identity(&self) -> bool {
        self.brightness == 1.0 && self.tint == [1.0; 3]
    }

    /// Uniform draw within the configured ranges, one brightness then
    /// three tint components.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, cfg: &RenderConfig) -> Self {
        let b = draw(rng, cfg.brightness_range);
        let t = [
            draw(rng, cfg.tint_range),
            draw(rng, cfg.tint_range),
            draw(rng, cfg.tint_range),
        ];
        Self::new(b, t)
    }

    /// Lighting equivalent to applying `self` and then `other`.
    pub fn compose(&self, other: &LightingParams) -> Self {
        Self {
            brightness: self.brightness * other.brightness,
            tint: [
                self.tint[0] * other.tint[0],
                self.tint[1] * other.tint[1],
                self.tint[2] * other.tint[2],
            ],
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Camera intrinsics, placement and image-formation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Side-A eye position relative to the centre of the frame top,
    /// frame-local metres.
    pub eye_offset_a: [f64; 3],
    /// Side-B eye position relative to the centre of the frame top.
    pub eye_offset_b: [f64; 3],
    /// Probability that a depth pixel reads as missing.
    pub depth_dropout: f64,
    pub brightness_range: [f64; 2],
    pub tint_range: [f64; 2],
    /// Photometric augmentation brightness levels; the first is identity.
    pub augment_brightness: Vec<f64>,
    /// Photometric augmentation tints; the first is identity.
    pub augment_tints: Vec<[f64; 3]>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            eye_offset_a: [0.0, -1.1, 1.1],
            eye_offset_b: [0.85, -0.75, 1.13],
            depth_dropout: 0.02,
            brightness_range: [0.9, 1.1],
            tint_range: [0.95, 1.05],
            augment_brightness: vec![1.0, 0.8, 1.2],
            augment_tints: vec![[1.0, 1.0, 1.0], [1.05, 0.95, 1.0]],
        }
    }
}

/// Fixed camera for a side, looking at the centre of the frame top from
/// 45° above the horizontal.
pub fn side_camera(frame: &BedFrame, side: Side, cfg: &RenderConfig) -> CameraModel {
    let centre_local = Vec3::new(frame.width / 2.0, frame.length / 2.0, frame.height);
    let off = match side {
        Side::A => cfg.eye_offset_a,
        Side::B => cfg.eye_offset_b,
    };
    let eye = frame.to_world(&(centre_local + Vec3::new(off[0], off[1], off[2])));
    let target = frame.to_world(&centre_local);
    let up = frame.pose.transform_vector(&Vec3::z());
    CameraModel::new(cfg.fx, cfg.fy, cfg.cx, cfg.cy, Pose::look_at(eye, target, up))
}

/// One RGB-D frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub rgb: RgbImage,
    /// Row-major camera-space depth (m); [`MISSING_DEPTH`] where absent.
    pub depth: Vec<f32>,
    pub camera: CameraModel,
    pub lighting: LightingParams,
}

impl Observation {
    pub fn depth_at(&self, u: u32, v: u32) -> f32 {
        self.depth[(v * IMAGE_WIDTH + u) as usize]
    }
}

/// Rasterises the world through `camera`, applies `lighting` and drops
/// each depth pixel with probability `dropout`. Exactly one uniform draw
/// is taken per pixel in row-major order.
pub fn render<R: Rng + ?Sized>(
    world: &WorldState,
    camera: &CameraModel,
    lighting: &LightingParams,
    dropout: f64,
    rng: &mut R,
) -> Observation {
    let (mut rgb, mut depth) = raster::rasterize(&scene_triangles(world, camera), camera);
    apply_lighting(&mut rgb, lighting);
    for d in depth.iter_mut() {
        let x: f64 = rng.random();
        if x < dropout {
            *d = MISSING_DEPTH;
        }
    }
    Observation {
        rgb,
        depth,
        camera: *camera,
        lighting: *lighting,
    }
}
