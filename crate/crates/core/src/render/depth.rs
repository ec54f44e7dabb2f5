use super::{Observation, RenderError, IMAGE_HEIGHT, IMAGE_WIDTH, MISSING_DEPTH};
use crate::geometry::Pixel;

const WINDOW: i64 = 10;

/// Median depth over the 10×10 window whose top-left is `(u - 5, v - 5)`,
/// clipped to the image. Missing readings are skipped; an even count
/// returns the lower median.
pub fn median_depth(obs: &Observation, pixel: &Pixel) -> Result<f64, RenderError> {
    let p = pixel.clamped(IMAGE_WIDTH, IMAGE_HEIGHT);
    let (u, v) = (p.u.round() as i64, p.v.round() as i64);
    let half = WINDOW / 2;
    let u0 = (u - half).max(0);
    let u1 = (u + half - 1).min(IMAGE_WIDTH as i64 - 1);
    let v0 = (v - half).max(0);
    let v1 = (v + half - 1).min(IMAGE_HEIGHT as i64 - 1);
    let mut vals: Vec<f32> = Vec::with_capacity((WINDOW * WINDOW) as usize);
    for y in v0..=v1 {
        for x in u0..=u1 {
            let d = obs.depth[(y * IMAGE_WIDTH as i64 + x) as usize];
            if d != MISSING_DEPTH && d.is_finite() && d > 0.0 {
                vals.push(d);
            }
        }
    }
    if vals.is_empty() {
        return Err(RenderError::NoDepth { u, v });
    }
    vals.sort_by(f32::total_cmp);
    Ok(vals[(vals.len() - 1) / 2] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::tests_support::blank_observation;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fill_window(obs: &mut Observation, u: i64, v: i64, vals: &[f32]) {
        let mut k = 0;
        for y in v - 5..v + 5 {
            for x in u - 5..u + 5 {
                obs.depth[(y * 640 + x) as usize] = vals[k];
                k += 1;
            }
        }
    }

    #[test]
    fn constant_window() {
        let mut obs = blank_observation();
        fill_window(&mut obs, 100, 100, &[0.8; 100]);
        assert_eq!(median_depth(&obs, &Pixel::new(100.0, 100.0)).unwrap(), 0.8f32 as f64);
    }

    #[test]
    fn single_missing_is_skipped() {
        let mut obs = blank_observation();
        let mut vals = [1.0f32; 100];
        vals[37] = MISSING_DEPTH;
        fill_window(&mut obs, 50, 60, &vals);
        assert_eq!(median_depth(&obs, &Pixel::new(50.0, 60.0)).unwrap(), 1.0);
    }

    #[test]
    fn thirty_seven_missing_matches_sorted_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut vals: Vec<f32> = (0..100).map(|i| 0.5 + 0.013 * ((i * 7919) % 101) as f32).collect();
        let mut idx: Vec<usize> = (0..100).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..37] {
            vals[i] = MISSING_DEPTH;
        }
        let mut obs = blank_observation();
        fill_window(&mut obs, 320, 240, &vals);
        let mut valid: Vec<f32> = vals.iter().copied().filter(|&d| d != MISSING_DEPTH).collect();
        assert_eq!(valid.len(), 63);
        valid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(median_depth(&obs, &Pixel::new(320.0, 240.0)).unwrap(), valid[31] as f64);
    }

    #[test]
    fn all_missing_is_an_error() {
        let obs = blank_observation();
        assert!(matches!(
            median_depth(&obs, &Pixel::new(10.0, 10.0)),
            Err(RenderError::NoDepth { .. })
        ));
    }

    #[test]
    fn window_is_clipped_at_the_border() {
        let mut obs = blank_observation();
        obs.depth[0] = 2.0;
        obs.depth[1] = 3.0;
        // only (0,0), (1,0) are valid in the clipped window at the corner
        assert_eq!(median_depth(&obs, &Pixel::new(0.0, 0.0)).unwrap(), 2.0);
        // the window spans u - 5 ..= u + 4
        assert_eq!(median_depth(&obs, &Pixel::new(5.0, 0.0)).unwrap(), 2.0);
        assert_eq!(median_depth(&obs, &Pixel::new(6.0, 0.0)).unwrap(), 3.0);
        assert!(median_depth(&obs, &Pixel::new(7.0, 0.0)).is_err());
    }
}
