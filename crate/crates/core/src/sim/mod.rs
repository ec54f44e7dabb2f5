//! Quasi-static bed simulation: rigid frame, pinned particle-grid sheet,
//! point grasps with force-limited stretching, and the coverage metric.
//!
//! Frame-local coordinates: `x` runs across the width from Side A's edge,
//! `y` runs along the length from the foot (where the sheet is pinned) to
//! the head, and `z` points up with the top plane at `z = height`.

mod cloth;
mod coverage;
mod sampler;
mod stretch;

pub use cloth::{max_strain, relax_constraints, relax_weighted, relax_with_held, tension_force};
pub use coverage::{coverage, coverage_grid, sheet_triangles_local};
pub use sampler::{sample_initial_state, DistractorKind, TEST_CATALOG, TRAIN_CATALOG};
pub use stretch::{execute_stretch, grasp_at, StretchLog, StretchStep};

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Rgb, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("initial-state sampler found no feasible corner pair after {0} attempts")]
    SamplerExhausted(usize),
    #[error("distractor placement failed after {0} attempts")]
    DistractorPlacement(usize),
}

/// Which side of the bed the robot is working from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::A => f.write_str("A"),
            Side::B => f.write_str("B"),
        }
    }
}

/// Tunables of the simulator. Defaults describe the half-scale testbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Frame width (m), 30 in.
    pub frame_width: f64,
    /// Frame length (m), 40 in.
    pub frame_length: f64,
    /// Frame height (m), 35 in.
    pub frame_height: f64,
    /// Particle rows along the length (row 0 is pinned).
    pub rows: usize,
    /// Particle columns across the width.
    pub cols: usize,
    /// Constraint projection sweeps per stretch step.
    pub relax_iterations: usize,
    /// Sweeps run after the gripper opens, letting the cloth settle.
    pub settle_iterations: usize,
    /// Over-relaxation weight for the settle sweeps.
    pub settle_omega: f64,
    /// Sweeps used when settling a freshly laid-out sheet.
    pub init_relax_iterations: usize,
    /// Largest edge strain accepted for a freshly sampled sheet.
    pub init_strain_tolerance: f64,
    /// Newtons per unit strain in the wrist-force proxy.
    pub k_tension: f64,
    /// Force above which the gripper lets go (N).
    pub release_force: f64,
    /// Straight-line stretch is executed in this many equal steps.
    pub stretch_steps: usize,
    /// Grasps farther than this from the sheet surface miss (m).
    pub grasp_radius: f64,
    /// Largest pull (N) friction holds on a corner left at its target.
    pub friction_hold_force: f64,
    /// Height of the stretch target above the frame corner (m).
    pub target_lift: f64,
    /// Side of a coverage raster cell (m).
    pub coverage_cell: f64,
    /// Height of the lower sheet layer above the top plane (m).
    pub layer_under: f64,
    /// Height of folded-over flaps above the top plane (m).
    pub layer_flap: f64,
    /// Rejection-sampling budget for initial states.
    pub max_sample_attempts: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            frame_width: 0.762,
            frame_length: 1.016,
            frame_height: 0.889,
            rows: 9,
            cols: 9,
            relax_iterations: 30,
            settle_iterations: 3000,
            settle_omega: 1.9,
            friction_hold_force: 5.0,
            init_relax_iterations: 200,
            init_strain_tolerance: 0.02,
            k_tension: 40.0,
            release_force: 20.0,
            stretch_steps: 6,
            grasp_radius: 0.03,
            target_lift: 0.01,
            coverage_cell: 0.004,
            layer_under: 0.002,
            layer_flap: 0.006,
            max_sample_attempts: 1000,
        }
    }
}

/// Axis-aligned rectangle in frame-local `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }
    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BedFrame {
    pub pose: Pose,
    pub width: f64,
    pub length: f64,
    pub height: f64,
}

impl BedFrame {
    pub fn new(pose: Pose, width: f64, length: f64, height: f64) -> Self {
        assert!(width > 0.0 && length > 0.0 && height > 0.0, "frame dimensions must be positive");
        Self {
            pose,
            width,
            length,
            height,
        }
    }

    pub fn from_config(cfg: &SimConfig) -> Self {
        Self::new(Pose::identity(), cfg.frame_width, cfg.frame_length, cfg.frame_height)
    }

    /// Top rectangle in frame-local coordinates.
    pub fn top_rect(&self) -> Rect {
        Rect {
            min: [0.0, 0.0],
            max: [self.width, self.length],
        }
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.pose.transform_point(local)
    }

    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(world)
    }

    /// Head corner of the top plane that the given side stretches toward.
    pub fn target_corner(&self, side: Side) -> Vec3 {
        let x = match side {
            Side::A => 0.0,
            Side::B => self.width,
        };
        self.to_world(&Vec3::new(x, self.length, self.height))
    }

    /// Eight corners of the frame box, world coordinates.
    pub fn box_corners(&self) -> [Vec3; 8] {
        let (w, l, h) = (self.width, self.length, self.height);
        let local = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(w, 0.0, 0.0),
            Vec3::new(w, l, 0.0),
            Vec3::new(0.0, l, 0.0),
            Vec3::new(0.0, 0.0, h),
            Vec3::new(w, 0.0, h),
            Vec3::new(w, l, h),
            Vec3::new(0.0, l, h),
        ];
        local.map(|p| self.to_world(&p))
    }
}

/// Particle grid standing in for the sheet. Index of particle at
/// `(row, col)` is `row * cols + col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetState {
    pub rows: usize,
    pub cols: usize,
    pub positions: Vec<Vec3>,
    /// Rest length of edges running across the width.
    pub rest_u: f64,
    /// Rest length of edges running along the length.
    pub rest_v: f64,
    pub pinned: Vec<bool>,
    /// Particles carried onto a frame corner and left there. Friction
    /// holds them during relaxation until they are grasped again.
    pub anchored: Vec<bool>,
    pub top_color: Rgb,
    pub bottom_color: Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub rest: f64,
}

impl SheetState {
    /// Sheet lying flat over the frame top, pinned along the foot row.
    pub fn flat(frame: &BedFrame, rows: usize, cols: usize, lift: f64) -> Self {
        assert!(rows >= 2 && cols >= 2);
        let rest_u = frame.width / (cols - 1) as f64;
        let rest_v = frame.length / (rows - 1) as f64;
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let local = Vec3::new(c as f64 * rest_u, r as f64 * rest_v, frame.height + lift);
                positions.push(frame.to_world(&local));
            }
        }
        let pinned = (0..rows * cols).map(|i| i < cols).collect();
        Self {
            rows,
            cols,
            positions,
            rest_u,
            rest_v,
            pinned,
            anchored: vec![false; rows * cols],
            top_color: Rgb::BLUE,
            bottom_color: Rgb::WHITE,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    /// Free head-row corner handled from the given side.
    pub fn corner_index(&self, side: Side) -> usize {
        match side {
            Side::A => self.index(self.rows - 1, 0),
            Side::B => self.index(self.rows - 1, self.cols - 1),
        }
    }

    /// All distance constraints in fixed grid order: width-wise edges
    /// row by row, then length-wise edges from the head row down to the
    /// pinned row. Ending each sweep at the pinned row leaves the
    /// residual strain of an over-pulled sheet next to the gripper, where
    /// the wrist force is read.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(2 * self.len());
        for r in 0..self.rows {
            for c in 0..self.cols - 1 {
                let a = self.index(r, c);
                out.push(Edge {
                    a,
                    b: a + 1,
                    rest: self.rest_u,
                });
            }
        }
        for r in (0..self.rows - 1).rev() {
            for c in 0..self.cols {
                let a = self.index(r, c);
                out.push(Edge {
                    a,
                    b: a + self.cols,
                    rest: self.rest_v,
                });
            }
        }
        out
    }

    /// Edges incident to one particle.
    pub fn incident_edges(&self, particle: usize) -> Vec<Edge> {
        let (r, c) = self.row_col(particle);
        let mut out = Vec::with_capacity(4);
        if c > 0 {
            out.push(Edge {
                a: particle - 1,
                b: particle,
                rest: self.rest_u,
            });
        }
        if c + 1 < self.cols {
            out.push(Edge {
                a: particle,
                b: particle + 1,
                rest: self.rest_u,
            });
        }
        if r > 0 {
            out.push(Edge {
                a: particle - self.cols,
                b: particle,
                rest: self.rest_v,
            });
        }
        if r + 1 < self.rows {
            out.push(Edge {
                a: particle,
                b: particle + self.cols,
                rest: self.rest_v,
            });
        }
        out
    }

    /// Quads as pairs of triangles, wound so the normal points along the
    /// top side of the sheet.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut tris = Vec::with_capacity(2 * (self.rows - 1) * (self.cols - 1));
        for r in 0..self.rows - 1 {
            for c in 0..self.cols - 1 {
                let p00 = self.index(r, c);
                let p10 = p00 + 1;
                let p01 = p00 + self.cols;
                let p11 = p01 + 1;
                tris.push([p00, p10, p11]);
                tris.push([p00, p11, p01]);
            }
        }
        tris
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Gripper state after a grasp attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspState {
    pub attached: Option<usize>,
    pub gripper_pos: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistractorShape {
    Disk,
    Box,
}

/// Vision-only object resting on the bed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub shape: DistractorShape,
    pub color: Rgb,
    /// Center of the resting face, world coordinates.
    pub center: Vec3,
    /// Radius for disks, half side length for boxes (m).
    pub extent: f64,
    /// Height above the resting point (m).
    pub height: f64,
}

/// Line the supervisor lays the sheet's head edge along, frame-local.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerLayout {
    pub near: [f64; 2],
    pub far: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub frame: BedFrame,
    pub sheet: SheetState,
    pub distractors: Vec<Distractor>,
    pub robot_side: Side,
    pub layout: CornerLayout,
}

impl WorldState {
    /// Flat, fully made bed with the robot on Side A.
    pub fn spread(cfg: &SimConfig) -> Self {
        let frame = BedFrame::from_config(cfg);
        let sheet = SheetState::flat(&frame, cfg.rows, cfg.cols, cfg.layer_under);
        Self {
            layout: CornerLayout {
                near: [0.0, frame.length],
                far: [frame.width, frame.length],
            },
            frame,
            sheet,
            distractors: Vec::new(),
            robot_side: Side::A,
        }
    }

    pub fn corner_position(&self, side: Side) -> Vec3 {
        self.sheet.positions[self.sheet.corner_index(side)]
    }

    /// Stretch target for a side: the frame's head corner, lifted.
    pub fn stretch_target(&self, side: Side, lift: f64) -> Vec3 {
        self.frame.target_corner(side) + self.frame.pose.transform_vector(&Vec3::new(0.0, 0.0, lift))
    }
}
