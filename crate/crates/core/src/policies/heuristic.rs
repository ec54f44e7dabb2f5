//! Colour-contour baseline: grab the extremal sheet-coloured blob pixel.

use std::collections::VecDeque;

use image::RgbImage;

use super::{GraspAction, PolicyConfig, PolicyError, TransitionDecision};
use crate::geometry::{Pixel, Vec3};
use crate::render::{project, Observation, IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::sim::{BedFrame, Side};

pub fn is_white(px: [u8; 3], cfg: &PolicyConfig) -> bool {
    px.iter().all(|&c| c >= cfg.white_min)
}

pub fn is_blue(px: [u8; 3], cfg: &PolicyConfig) -> bool {
    let [r, g, b] = px;
    b >= cfg.blue_min && b as i32 - r.max(g) as i32 >= cfg.blue_margin as i32
}

/// Side A: left-most white pixel. Side B: right-most blue pixel. Only
/// 8-connected blobs of at least `min_component_area` pixels count; ties
/// go to the smaller `v`.
pub fn heuristic_grasp(obs: &Observation, side: Side, cfg: &PolicyConfig) -> Result<GraspAction, PolicyError> {
    let (name, mask) = match side {
        Side::A => ("white", threshold(&obs.rgb, |p| is_white(p, cfg))),
        Side::B => ("blue", threshold(&obs.rgb, |p| is_blue(p, cfg))),
    };
    let w = IMAGE_WIDTH as usize;
    let labels = components(&mask, cfg.min_component_area);
    let mut best: Option<(usize, usize)> = None;
    for (i, keep) in labels.iter().enumerate() {
        if !*keep {
            continue;
        }
        let (u, v) = (i % w, i / w);
        let better = match best {
            None => true,
            Some((bu, bv)) => match side {
                Side::A => u < bu || (u == bu && v < bv),
                Side::B => u > bu || (u == bu && v < bv),
            },
        };
        if better {
            best = Some((u, v));
        }
    }
    best.map(|(u, v)| Pixel::new(u as f64, v as f64))
        .ok_or(PolicyError::HeuristicMiss(name))
}

fn threshold(rgb: &RgbImage, pred: impl Fn([u8; 3]) -> bool) -> Vec<bool> {
    rgb.pixels().map(|p| pred(p.0)).collect()
}

/// Marks pixels that belong to an 8-connected blob of at least `min_area`.
fn components(mask: &[bool], min_area: usize) -> Vec<bool> {
    let (w, h) = (IMAGE_WIDTH as i64, IMAGE_HEIGHT as i64);
    let mut keep = vec![false; mask.len()];
    let mut seen = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    let mut blob = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        blob.clear();
        while let Some(i) = queue.pop_front() {
            blob.push(i);
            let (x, y) = ((i as i64) % w, (i as i64) / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if blob.len() >= min_area {
            for &i in &blob {
                keep[i] = true;
            }
        }
    }
    keep
}

/// Looks just inside the target frame corner: the stretch counts as done
/// when most of the probe window shows sheet colour.
pub fn heuristic_transition(obs: &Observation, frame: &BedFrame, side: Side, cfg: &PolicyConfig) -> TransitionDecision {
    let x = match side {
        Side::A => cfg.probe_inset,
        Side::B => frame.width - cfg.probe_inset,
    };
    let probe = frame.to_world(&Vec3::new(x, frame.length - cfg.probe_inset, frame.height));
    let Ok(px) = project(&probe, &obs.camera) else {
        return TransitionDecision::from_prob(0.0);
    };
    let (u, v) = (px.u.round() as i64, px.v.round() as i64);
    let r = cfg.probe_half as i64;
    let (mut hits, mut total) = (0usize, 0usize);
    for y in (v - r).max(0)..=(v + r).min(IMAGE_HEIGHT as i64 - 1) {
        for x in (u - r).max(0)..=(u + r).min(IMAGE_WIDTH as i64 - 1) {
            let p = obs.rgb.get_pixel(x as u32, y as u32).0;
            total += 1;
            if is_white(p, cfg) || is_blue(p, cfg) {
                hits += 1;
            }
        }
    }
    TransitionDecision::from_prob(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::tests_support::blank_observation;

    fn paint(obs: &mut Observation, u0: u32, v0: u32, w: u32, h: u32, c: [u8; 3]) {
        for v in v0..v0 + h {
            for u in u0..u0 + w {
                obs.rgb.put_pixel(u, v, image::Rgb(c));
            }
        }
    }

    #[test]
    fn left_most_white_of_single_region() {
        let mut obs = blank_observation();
        paint(&mut obs, 200, 100, 20, 20, [250, 250, 250]);
        let px = heuristic_grasp(&obs, Side::A, &PolicyConfig::default()).unwrap();
        assert_eq!(px, Pixel::new(200.0, 100.0));
    }

    #[test]
    fn right_most_blue_with_tie_on_v() {
        let mut obs = blank_observation();
        paint(&mut obs, 300, 50, 10, 10, [40, 70, 200]);
        paint(&mut obs, 305, 60, 5, 10, [40, 70, 200]);
        let px = heuristic_grasp(&obs, Side::B, &PolicyConfig::default()).unwrap();
        assert_eq!(px, Pixel::new(309.0, 50.0));
    }

    #[test]
    fn small_specks_are_ignored() {
        let mut obs = blank_observation();
        paint(&mut obs, 10, 10, 5, 5, [255, 255, 255]);
        paint(&mut obs, 100, 10, 6, 5, [255, 255, 255]);
        let px = heuristic_grasp(&obs, Side::A, &PolicyConfig::default()).unwrap();
        assert_eq!(px, Pixel::new(100.0, 10.0));
    }

    #[test]
    fn all_blue_image_misses_on_side_a() {
        let mut obs = blank_observation();
        paint(&mut obs, 0, 0, 640, 480, [40, 70, 200]);
        assert!(matches!(
            heuristic_grasp(&obs, Side::A, &PolicyConfig::default()),
            Err(PolicyError::HeuristicMiss("white"))
        ));
    }

    #[test]
    fn white_distractor_left_of_corner_wins() {
        let mut obs = blank_observation();
        paint(&mut obs, 300, 200, 30, 30, [246, 246, 242]);
        let cfg = PolicyConfig::default();
        let before = heuristic_grasp(&obs, Side::A, &cfg).unwrap();
        paint(&mut obs, 120, 260, 25, 25, [238, 236, 230]);
        let after = heuristic_grasp(&obs, Side::A, &cfg).unwrap();
        assert_ne!(before, after);
        assert_eq!(after, Pixel::new(120.0, 260.0));
    }

    #[test]
    fn thresholds() {
        let cfg = PolicyConfig::default();
        assert!(is_white([200, 200, 200], &cfg));
        assert!(!is_white([199, 255, 255], &cfg));
        assert!(is_blue([40, 70, 200], &cfg));
        assert!(!is_blue([150, 150, 189], &cfg));
        assert!(is_blue([110, 110, 150], &cfg));
    }
}
