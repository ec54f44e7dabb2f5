//! Observation files: RGB as PNG, depth as a little-endian `f32` raster.
//!
//! Depth layout: 8-byte magic `BMDEPTH1`, width and height as `u32` LE,
//! then `width * height` row-major `f32` LE values.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraModel, LightingParams, Observation, RenderError, IMAGE_HEIGHT, IMAGE_WIDTH};

const DEPTH_MAGIC: &[u8; 8] = b"BMDEPTH1";

/// Everything needed to reload an observation, with file paths relative
/// to a base directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub rgb: String,
    pub depth: String,
    pub camera: CameraModel,
    pub lighting: LightingParams,
}

pub fn write_depth(path: &Path, depth: &[f32]) -> Result<(), RenderError> {
    assert_eq!(depth.len(), (IMAGE_WIDTH * IMAGE_HEIGHT) as usize);
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(DEPTH_MAGIC)?;
    w.write_all(&IMAGE_WIDTH.to_le_bytes())?;
    w.write_all(&IMAGE_HEIGHT.to_le_bytes())?;
    for d in depth {
        w.write_all(&d.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_depth(path: &Path) -> Result<Vec<f32>, RenderError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != DEPTH_MAGIC {
        return Err(RenderError::BadDepthFile("missing magic".into()));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let h = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    if (w, h) != (IMAGE_WIDTH, IMAGE_HEIGHT) {
        return Err(RenderError::BadDepthFile(format!("unexpected size {w}x{h}")));
    }
    let body = &bytes[16..];
    if body.len() != (w * h) as usize * 4 {
        return Err(RenderError::BadDepthFile(format!("{} body bytes", body.len())));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

/// Writes `<stem>.png` and `<stem>.depth` under `base`.
pub fn save_observation(base: &Path, stem: &str, obs: &Observation) -> Result<ObservationMeta, RenderError> {
    let rgb = format!("{stem}.png");
    let depth = format!("{stem}.depth");
    if let Some(parent) = base.join(&rgb).parent() {
        fs::create_dir_all(parent)?;
    }
    obs.rgb.save_with_format(base.join(&rgb), image::ImageFormat::Png)?;
    write_depth(&base.join(&depth), &obs.depth)?;
    Ok(ObservationMeta {
        rgb,
        depth,
        camera: obs.camera,
        lighting: obs.lighting,
    })
}

/// The RGB image as PNG bytes.
pub fn encode_png(obs: &Observation) -> Result<Vec<u8>, RenderError> {
    let mut out = std::io::Cursor::new(Vec::new());
    obs.rgb.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn load_observation(base: &Path, meta: &ObservationMeta) -> Result<Observation, RenderError> {
    let rgb = image::open(base.join(&meta.rgb))?.to_rgb8();
    if rgb.dimensions() != (IMAGE_WIDTH, IMAGE_HEIGHT) {
        return Err(RenderError::BadDepthFile(format!("image is {:?}", rgb.dimensions())));
    }
    Ok(Observation {
        rgb,
        depth: read_depth(&base.join(&meta.depth))?,
        camera: meta.camera,
        lighting: meta.lighting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::tests_support::blank_observation;

    #[test]
    fn observation_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut obs = blank_observation();
        obs.rgb.put_pixel(3, 4, image::Rgb([1, 2, 3]));
        obs.depth[17] = 1.25;
        obs.depth[18] = f32::MIN_POSITIVE;
        let meta = save_observation(dir.path(), "img/a", &obs).unwrap();
        assert_eq!(meta.rgb, "img/a.png");
        let back = load_observation(dir.path(), &meta).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn truncated_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.depth");
        fs::write(&p, b"BMDEPTH1\x80\x02\0\0\xe0\x01\0\0abc").unwrap();
        assert!(matches!(read_depth(&p), Err(RenderError::BadDepthFile(_))));
        fs::write(&p, b"nope").unwrap();
        assert!(read_depth(&p).is_err());
    }
}
