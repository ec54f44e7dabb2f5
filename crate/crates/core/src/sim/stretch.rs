//! Grasping the sheet and pulling it toward a frame corner.

use serde::{Deserialize, Serialize};

use super::cloth::{relax_weighted, relax_with_held, tension_force};
use super::{GraspState, SheetState, SimConfig, WorldState};
use crate::geometry::Vec3;

/// Closes the gripper at `point`.
///
/// The grasp makes contact when the sheet surface passes within `radius`
/// of the point; the pinched cloth is then represented by the nearest
/// particle (ties go to the lower index) and the gripper snaps onto it.
/// Anything else is a miss, reported as an unattached state.
pub fn grasp_at(world: &WorldState, point: Vec3, radius: f64) -> GraspState {
    assert!(radius > 0.0, "grasp radius must be positive");
    let sheet = &world.sheet;
    let surface = surface_distance(sheet, &point);
    if surface > radius {
        return GraspState {
            attached: None,
            gripper_pos: point,
        };
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, p) in sheet.positions.iter().enumerate() {
        let d = (p - point).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    GraspState {
        attached: Some(best),
        gripper_pos: sheet.positions[best],
    }
}

/// Distance from a point to the closest triangle of the sheet mesh.
fn surface_distance(sheet: &SheetState, point: &Vec3) -> f64 {
    sheet
        .triangles()
        .iter()
        .map(|t| {
            let q = closest_point_on_triangle(
                point,
                &sheet.positions[t[0]],
                &sheet.positions[t[1]],
                &sheet.positions[t[2]],
            );
            (q - point).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub(crate) fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = va + vb + vc;
    if denom.abs() < 1e-300 {
        // degenerate triangle: fall back to the nearest vertex
        return [a, b, c]
            .into_iter()
            .min_by(|x, y| (*x - p).norm().total_cmp(&(*y - p).norm()))
            .copied()
            .unwrap_or(*a);
    }
    let v = vb / denom;
    let w = vc / denom;
    a + ab * v + ac * w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchStep {
    pub gripper: Vec3,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchLog {
    pub steps: Vec<StretchStep>,
    /// 1-based step at which the force limit released the sheet.
    pub release_step: Option<usize>,
    /// True when nothing was attached, so the motion moved no cloth.
    pub noop: bool,
}

/// Moves the gripper from the grasp point to `target` in equal steps,
/// relaxing the cloth and reading the wrist force after each one. The
/// sheet is released as soon as the force exceeds the limit. A particle
/// carried all the way to the target stays anchored there by friction.
/// Any anchored particle the settled cloth pulls harder than friction can
/// hold slips free. A released particle is free. The gripper opens at the end and the cloth
/// settles once more.
pub fn execute_stretch(
    world: &WorldState,
    grasp: &GraspState,
    target: Vec3,
    cfg: &SimConfig,
) -> (WorldState, StretchLog) {
    let steps = cfg.stretch_steps.max(1);
    let start = grasp.gripper_pos;
    let Some(particle) = grasp.attached else {
        let log = StretchLog {
            steps: (1..=steps)
                .map(|k| StretchStep {
                    gripper: start + (target - start) * (k as f64 / steps as f64),
                    force: 0.0,
                })
                .collect(),
            release_step: None,
            noop: true,
        };
        return (world.clone(), log);
    };

    let mut next = world.clone();
    let mut log = StretchLog {
        steps: Vec::with_capacity(steps),
        release_step: None,
        noop: false,
    };
    if next.sheet.pinned[particle] {
        // the tucked edge does not move; the wrist feels the full pull
        log.steps.push(StretchStep {
            gripper: start,
            force: f64::INFINITY,
        });
        log.release_step = Some(1);
        return (next, log);
    }
    next.sheet.anchored[particle] = false;
    for k in 1..=steps {
        let pos = start + (target - start) * (k as f64 / steps as f64);
        next.sheet.positions[particle] = pos;
        next.sheet = relax_with_held(&next.sheet, cfg.relax_iterations, &[particle]);
        let force = tension_force(&next.sheet, particle, cfg.k_tension);
        log.steps.push(StretchStep { gripper: pos, force });
        if force > cfg.release_force {
            log.release_step = Some(k);
            break;
        }
    }
    next.sheet.anchored[particle] = log.release_step.is_none();
    next.sheet = relax_weighted(&next.sheet, cfg.settle_iterations.max(1), &[], cfg.settle_omega);
    // each pass frees at least one particle, so this terminates
    loop {
        let slipping: Vec<usize> = (0..next.sheet.len())
            .filter(|&i| {
                next.sheet.anchored[i] && tension_force(&next.sheet, i, cfg.k_tension) > cfg.friction_hold_force
            })
            .collect();
        if slipping.is_empty() {
            break;
        }
        for i in slipping {
            next.sheet.anchored[i] = false;
        }
        next.sheet = relax_weighted(&next.sheet, cfg.settle_iterations.max(1), &[], cfg.settle_omega);
    }
    (next, log)
}
