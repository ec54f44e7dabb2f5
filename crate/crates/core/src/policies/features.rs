//! Fixed, untrained image features: mean colour over a coarse grid.

use crate::render::{Observation, IMAGE_HEIGHT, IMAGE_WIDTH};

pub const GRID_COLS: usize = 16;
pub const GRID_ROWS: usize = 12;
/// Three channel means per cell plus a trailing constant 1.
pub const FEATURE_DIM: usize = GRID_COLS * GRID_ROWS * 3 + 1;

/// Cells in row-major order, each contributing mean R, G, B in `[0, 1]`.
pub fn featurize(obs: &Observation) -> Vec<f64> {
    let cw = IMAGE_WIDTH as usize / GRID_COLS;
    let ch = IMAGE_HEIGHT as usize / GRID_ROWS;
    let mut sums = vec![0u64; GRID_COLS * GRID_ROWS * 3];
    for (u, v, px) in obs.rgb.enumerate_pixels() {
        let cell = (v as usize / ch) * GRID_COLS + u as usize / cw;
        for c in 0..3 {
            sums[cell * 3 + c] += px.0[c] as u64;
        }
    }
    let n = (cw * ch) as f64 * 255.0;
    let mut out: Vec<f64> = sums.iter().map(|&s| s as f64 / n).collect();
    out.push(1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::tests_support::blank_observation;

    #[test]
    fn black_image_is_zero_with_bias() {
        let f = featurize(&blank_observation());
        assert_eq!(f.len(), 577);
        assert!(f[..576].iter().all(|&x| x == 0.0));
        assert_eq!(f[576], 1.0);
    }

    #[test]
    fn uniform_gray() {
        let mut obs = blank_observation();
        for p in obs.rgb.pixels_mut() {
            p.0 = [128; 3];
        }
        let f = featurize(&obs);
        assert!(f[..576].iter().all(|&x| (x - 128.0 / 255.0).abs() < 1e-12));
    }

    #[test]
    fn two_tone_matches_per_cell_oracle() {
        let mut obs = blank_observation();
        // left 100 columns red, rest green: cells 0,1 pure red, cell 2 mixed
        for (u, _, p) in obs.rgb.enumerate_pixels_mut() {
            p.0 = if u < 100 { [200, 0, 0] } else { [0, 100, 0] };
        }
        let f = featurize(&obs);
        for row in 0..12 {
            for col in 0..16 {
                let base = (row * 16 + col) * 3;
                let red_cols = (100i64 - col as i64 * 40).clamp(0, 40) as f64;
                let want_r = red_cols / 40.0 * 200.0 / 255.0;
                let want_g = (40.0 - red_cols) / 40.0 * 100.0 / 255.0;
                assert!((f[base] - want_r).abs() < 1e-12, "cell {row},{col}");
                assert!((f[base + 1] - want_g).abs() < 1e-12);
                assert_eq!(f[base + 2], 0.0);
            }
        }
    }
}
