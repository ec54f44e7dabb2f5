//! Chi-square goodness of fit of the sampled near-corner position against
//! the uniform density on its quarter of the frame top.

use bedmake::sim::{sample_initial_state, SimConfig, TEST_CATALOG};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SAMPLES: u64 = 1000;
const BINS: usize = 10;

fn p_value(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn near_corner_is_uniform_over_its_quarter() {
    let cfg = SimConfig::default();
    let (hw, hl) = (cfg.frame_width / 2.0, cfg.frame_length / 2.0);
    let mut xs = [0usize; BINS];
    let mut ys = [0usize; BINS];
    let mut grid = [0usize; 16];
    for seed in 0..SAMPLES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = sample_initial_state(&mut rng, &cfg, 0, TEST_CATALOG).unwrap();
        let [x, y] = w.layout.near;
        assert!((0.0..hw).contains(&x) && (0.0..hl).contains(&y), "({x}, {y})");
        let bx = ((x / hw) * BINS as f64) as usize;
        let by = ((y / hl) * BINS as f64) as usize;
        xs[bx] += 1;
        ys[by] += 1;
        grid[(y / hl * 4.0) as usize * 4 + (x / hw * 4.0) as usize] += 1;
    }
    for (name, counts) in [("x", &xs[..]), ("y", &ys[..]), ("4x4", &grid[..])] {
        let p = p_value(counts);
        assert!(p > 0.01, "{name}: p = {p:.4}, counts {counts:?}");
    }
}

#[test]
fn far_corner_stays_in_its_quarter() {
    let cfg = SimConfig::default();
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = sample_initial_state(&mut rng, &cfg, 0, TEST_CATALOG).unwrap();
        let [x, y] = w.layout.far;
        assert!(x >= cfg.frame_width / 2.0 && x <= cfg.frame_width, "{x}");
        assert!(y >= cfg.frame_length / 2.0 && y <= cfg.frame_length, "{y}");
    }
}
