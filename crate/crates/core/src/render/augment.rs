//! Mirror and photometric variants used to multiply training images.

use image::RgbImage;

use super::{LightingParams, Observation, RenderConfig, IMAGE_WIDTH};
use crate::geometry::Pixel;

/// Scales every channel by `brightness * tint[c]`, rounding and clamping.
/// Identity lighting leaves the bytes untouched.
pub fn apply_lighting(rgb: &mut RgbImage, lighting: &LightingParams) {
    if lighting.is_identity() {
        return;
    }
    let gain = lighting.tint.map(|t| t * lighting.brightness);
    for px in rgb.pixels_mut() {
        for (v, g) in px.0.iter_mut().zip(gain) {
            *v = (*v as f64 * g).round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Flip about the vertical axis: pixel `u` moves to `639 - u`.
pub fn mirror(obs: &Observation) -> Observation {
    let w = IMAGE_WIDTH as usize;
    let mut depth = obs.depth.clone();
    for row in depth.chunks_exact_mut(w) {
        row.reverse();
    }
    Observation {
        rgb: image::imageops::flip_horizontal(&obs.rgb),
        depth,
        camera: obs.camera.mirrored(),
        lighting: obs.lighting,
    }
}

/// Brightness × tint combinations, brightness-major; identity first when
/// the configured lists start with identity.
pub fn photometric_set(cfg: &RenderConfig) -> Vec<LightingParams> {
    cfg.augment_brightness
        .iter()
        .flat_map(|&b| cfg.augment_tints.iter().map(move |&t| LightingParams::new(b, t)))
        .collect()
}

/// Every geometric variant (identity, mirror) crossed with every
/// photometric variant. Depth is never touched by photometric changes.
pub fn augment(obs: &Observation, label: &Pixel, cfg: &RenderConfig) -> Vec<(Observation, Pixel)> {
    let photo = photometric_set(cfg);
    let mut out = Vec::with_capacity(2 * photo.len());
    let flipped = mirror(obs);
    let flipped_label = Pixel::new((IMAGE_WIDTH - 1) as f64 - label.u, label.v);
    for (base, lbl) in [(obs, *label), (&flipped, flipped_label)] {
        for l in &photo {
            let mut o = base.clone();
            apply_lighting(&mut o.rgb, l);
            o.lighting = o.lighting.compose(l);
            out.push((o, lbl));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::tests_support::blank_observation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_observation(seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs = blank_observation();
        for px in obs.rgb.pixels_mut() {
            px.0 = [rng.random(), rng.random(), rng.random()];
        }
        for d in obs.depth.iter_mut() {
            *d = rng.random_range(0.5..3.0);
        }
        obs
    }

    #[test]
    fn twelve_variants_identity_first() {
        let obs = noisy_observation(1);
        let label = Pixel::new(10.0, 20.0);
        let out = augment(&obs, &label, &RenderConfig::default());
        assert_eq!(out.len(), 12);
        assert_eq!(out[0].0, obs);
        assert_eq!(out[0].1, label);
        for (o, l) in &out[6..] {
            assert_eq!(*l, Pixel::new(629.0, 20.0));
            assert!(o.camera.mirrored);
        }
        for (o, _) in &out[..6] {
            assert_eq!(o.depth, obs.depth);
        }
    }

    #[test]
    fn mirror_is_an_involution() {
        let obs = noisy_observation(2);
        let m = mirror(&obs);
        assert_ne!(m.rgb, obs.rgb);
        assert_eq!(m.rgb.get_pixel(639, 7), obs.rgb.get_pixel(0, 7));
        assert_eq!(m.depth[7 * 640 + 639], obs.depth[7 * 640]);
        assert_eq!(mirror(&m), obs);
    }

    #[test]
    fn mirror_commutes_with_lighting() {
        let obs = noisy_observation(3);
        let l = LightingParams::new(1.2, [1.05, 0.95, 1.0]);
        let mut a = mirror(&obs);
        apply_lighting(&mut a.rgb, &l);
        let mut b = obs.clone();
        apply_lighting(&mut b.rgb, &l);
        assert_eq!(a.rgb, mirror(&b).rgb);
    }

    #[test]
    fn identity_lighting_is_exact() {
        let obs = noisy_observation(4);
        let mut rgb = obs.rgb.clone();
        apply_lighting(&mut rgb, &LightingParams::identity());
        assert_eq!(rgb, obs.rgb);
    }
}
