//! Initial-state protocol: corner line sampling, sheet layout and
//! distractor placement.

use rand::Rng;

use super::cloth::{max_strain, relax_with_held};
use super::coverage::sheet_triangles_local;
use super::{
    BedFrame, CornerLayout, Distractor, DistractorShape, SheetState, Side, SimConfig, SimError,
    WorldState,
};
use crate::geometry::{Rgb, Vec3};

/// A prototype object that can be dropped on the bed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistractorKind {
    pub name: &'static str,
    pub shape: DistractorShape,
    pub color: Rgb,
    pub extent: f64,
    pub height: f64,
}

/// Objects that may appear while collecting training data.
pub const TRAIN_CATALOG: &[DistractorKind] = &[
    DistractorKind {
        name: "tennis-ball",
        shape: DistractorShape::Disk,
        color: Rgb([190, 210, 60]),
        extent: 0.035,
        height: 0.065,
    },
    DistractorKind {
        name: "brown-mug",
        shape: DistractorShape::Box,
        color: Rgb([120, 80, 50]),
        extent: 0.045,
        height: 0.09,
    },
];

/// Held-out household objects used only for the test distribution.
pub const TEST_CATALOG: &[DistractorKind] = &[
    DistractorKind {
        name: "white-plush-dog",
        shape: DistractorShape::Disk,
        color: Rgb([238, 236, 230]),
        extent: 0.07,
        height: 0.08,
    },
    DistractorKind {
        name: "paper-plate",
        shape: DistractorShape::Disk,
        color: Rgb([250, 250, 247]),
        extent: 0.08,
        height: 0.01,
    },
    DistractorKind {
        name: "red-lobster",
        shape: DistractorShape::Box,
        color: Rgb([205, 35, 30]),
        extent: 0.06,
        height: 0.04,
    },
    DistractorKind {
        name: "lego-pile",
        shape: DistractorShape::Box,
        color: Rgb([235, 200, 30]),
        extent: 0.045,
        height: 0.03,
    },
    DistractorKind {
        name: "loofa",
        shape: DistractorShape::Disk,
        color: Rgb([230, 120, 170]),
        extent: 0.05,
        height: 0.05,
    },
    DistractorKind {
        name: "toy-gripper",
        shape: DistractorShape::Box,
        color: Rgb([60, 80, 175]),
        extent: 0.05,
        height: 0.03,
    },
];

/// Draws an initial bed state.
///
/// The near corner (Side A's) is drawn uniformly over the foot-side,
/// Side-A half of the top (`x < W/2, y < L/2`) and the far corner over the
/// opposite quarter. The head edge is laid along the line from the near
/// corner toward the far corner; when the line is longer than the sheet is
/// wide the far corner stops short on the line. Each column runs from its
/// pinned foot particle past the line and folds back onto it, so the
/// folded flap shows the sheet's underside.
pub fn sample_initial_state<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SimConfig,
    distractor_count: usize,
    catalog: &[DistractorKind],
) -> Result<WorldState, SimError> {
    let frame = BedFrame::from_config(cfg);
    let (w, l) = (frame.width, frame.length);
    for _ in 0..cfg.max_sample_attempts {
        let near = [rng.random_range(0.0..w / 2.0), rng.random_range(0.0..l / 2.0)];
        let far = [rng.random_range(w / 2.0..w), rng.random_range(l / 2.0..l)];
        let Some(sheet) = lay_out_sheet(&frame, cfg, near, far) else {
            continue;
        };
        let mut world = WorldState {
            frame,
            sheet,
            distractors: Vec::new(),
            robot_side: Side::A,
            layout: CornerLayout { near, far },
        };
        world.distractors = place_distractors(rng, &world, cfg, distractor_count, catalog)?;
        return Ok(world);
    }
    Err(SimError::SamplerExhausted(cfg.max_sample_attempts))
}

/// Lays the sheet out for a corner line, or `None` when no feasible
/// layout exists.
pub(crate) fn lay_out_sheet(
    frame: &BedFrame,
    cfg: &SimConfig,
    near: [f64; 2],
    far: [f64; 2],
) -> Option<SheetState> {
    let (w, l, h) = (frame.width, frame.length, frame.height);
    let mut sheet = SheetState::flat(frame, cfg.rows, cfg.cols, cfg.layer_under);
    let delta = [far[0] - near[0], far[1] - near[1]];
    let span = delta[0].hypot(delta[1]);
    let scale = if span > w { w / span } else { 1.0 };
    let far_eff = [near[0] + delta[0] * scale, near[1] + delta[1] * scale];
    if far_eff[0] < w / 2.0 || far_eff[1] < l / 2.0 {
        return None;
    }
    for c in 0..cfg.cols {
        let t = c as f64 / (cfg.cols - 1) as f64;
        let foot = [c as f64 * sheet.rest_u, 0.0];
        let edge = [
            near[0] + (far_eff[0] - near[0]) * t,
            near[1] + (far_eff[1] - near[1]) * t,
        ];
        let d = (edge[0] - foot[0]).hypot(edge[1] - foot[1]);
        if d > l {
            return None;
        }
        let dir = if d > 1e-9 {
            [(edge[0] - foot[0]) / d, (edge[1] - foot[1]) / d]
        } else {
            [0.0, 1.0]
        };
        let fold = 0.5 * (l + d);
        for r in 0..cfg.rows {
            let s = r as f64 * sheet.rest_v;
            let (along, lift) = if s <= fold {
                (s, cfg.layer_under)
            } else {
                (2.0 * fold - s, cfg.layer_flap)
            };
            let local = Vec3::new(foot[0] + dir[0] * along, foot[1] + dir[1] * along, h + lift);
            let idx = sheet.index(r, c);
            sheet.positions[idx] = frame.to_world(&local);
        }
    }
    let held = [sheet.corner_index(Side::A), sheet.corner_index(Side::B)];
    let sheet = relax_with_held(&sheet, cfg.init_relax_iterations, &held);
    (max_strain(&sheet) <= cfg.init_strain_tolerance).then_some(sheet)
}

fn place_distractors<R: Rng + ?Sized>(
    rng: &mut R,
    world: &WorldState,
    cfg: &SimConfig,
    count: usize,
    catalog: &[DistractorKind],
) -> Result<Vec<Distractor>, SimError> {
    if count == 0 || catalog.is_empty() {
        return Ok(Vec::new());
    }
    let tris = sheet_triangles_local(world);
    let rect = world.frame.top_rect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = catalog[rng.random_range(0..catalog.len())];
        let mut placed = None;
        for _ in 0..cfg.max_sample_attempts {
            let p = [
                rng.random_range(rect.min[0]..rect.max[0]),
                rng.random_range(rect.min[1]..rect.max[1]),
            ];
            if tris.iter().any(|t| inside(p, t)) {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or(SimError::DistractorPlacement(cfg.max_sample_attempts))?;
        let center = world
            .frame
            .to_world(&Vec3::new(p[0], p[1], world.frame.height + cfg.layer_flap));
        out.push(Distractor {
            shape: kind.shape,
            color: kind.color,
            center,
            extent: kind.extent,
            height: kind.height,
        });
    }
    Ok(out)
}

fn inside(p: [f64; 2], t: &[[f64; 2]; 3]) -> bool {
    let cross = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let d0 = cross(t[0], t[1]);
    let d1 = cross(t[1], t[2]);
    let d2 = cross(t[2], t[0]);
    let neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
    let pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
    !(neg && pos)
}
