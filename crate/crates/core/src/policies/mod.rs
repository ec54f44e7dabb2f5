//! Grasp and transition policies: the ground-truth oracle, the colour
//! heuristic, and learned heads over fixed pooled-colour features.

mod features;
mod head;
mod heuristic;
mod oracle;
mod train;

pub use features::{featurize, FEATURE_DIM, GRID_COLS, GRID_ROWS};
pub use head::{normalize_labels, Head, HeadKind, HeadTask, InputNormalizer, LabelTransform};
pub use heuristic::{heuristic_grasp, heuristic_transition, is_blue, is_white};
pub use oracle::{oracle_grasp, oracle_transition};
pub use train::{
    grasp_loss_and_grad, train_grasp, train_grasp_samples, train_transition, train_transition_samples,
    transition_loss_and_grad, GraspSample, TrainConfig, TransitionSample,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Pixel;
use crate::render::{Observation, RenderError};
use crate::sim::{Side, WorldState};

/// Pixel at which to close the gripper.
pub type GraspAction = Pixel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Transition,
    Retry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionDecision {
    pub success_prob: f64,
    pub decision: Decision,
}

impl TransitionDecision {
    /// Transition iff `p >= 0.5`.
    pub fn from_prob(p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            success_prob: p,
            decision: if p >= 0.5 {
                Decision::Transition
            } else {
                Decision::Retry
            },
        }
    }

    pub fn from_label(label: u8) -> Self {
        Self::from_prob(if label == 1 { 1.0 } else { 0.0 })
    }

    /// 1 for transition, 0 for retry.
    pub fn as_label(&self) -> u8 {
        match self.decision {
            Decision::Transition => 1,
            Decision::Retry => 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("supervisor corner is not visible: {0}")]
    Supervisor(#[source] RenderError),
    #[error("no pixel passed the {0} colour threshold")]
    HeuristicMiss(&'static str),
    #[error("transition data has a single class ({0})")]
    DegenerateDataset(u8),
    #[error("training diverged at epoch {0}")]
    Divergence(usize),
    #[error("need at least {need} demonstrations, got {got}")]
    TooFewDemos { need: usize, got: usize },
    #[error("bad head file: {0}")]
    BadHead(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One supervised grasp attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub pre_obs: Arc<Observation>,
    /// Supervisor's intended pixel.
    pub grasp_label: GraspAction,
    /// Pixel actually executed; differs from the label only under noise.
    pub executed_pixel: GraspAction,
    pub post_obs: Arc<Observation>,
    /// 1 when the stretch brought the corner home.
    pub transition_label: u8,
    pub side: Side,
}

/// Tunables shared by the hand-written policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// A corner this close to its frame corner counts as stretched (m).
    pub success_radius: f64,
    /// White: every channel at least this bright.
    pub white_min: u8,
    /// Blue: blue channel at least this bright ...
    pub blue_min: u8,
    /// ... and exceeding both other channels by this margin.
    pub blue_margin: u8,
    /// Colour blobs smaller than this many pixels are ignored.
    pub min_component_area: usize,
    /// The heuristic transition probes this far inside the target corner
    /// along both frame axes (m).
    pub probe_inset: f64,
    /// Half side of the square probe window (px).
    pub probe_half: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            success_radius: 0.04,
            white_min: 200,
            blue_min: 150,
            blue_margin: 40,
            min_component_area: 30,
            probe_inset: 0.03,
            probe_half: 4,
        }
    }
}

/// Everything a policy may look at. Only the oracle reads `world`.
pub struct PolicyInput<'a> {
    pub world: &'a WorldState,
    pub obs: &'a Observation,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub enum GraspPolicy {
    Oracle,
    Heuristic,
    Learned(Arc<Head>),
    /// Always the same pixel; used by tests and smoke runs.
    Fixed(Pixel),
}

#[derive(Debug, Clone)]
pub enum TransitionPolicy {
    Oracle,
    Heuristic,
    Learned(Arc<Head>),
    /// Always the same answer.
    Constant(bool),
}

impl GraspPolicy {
    pub fn act(&self, input: &PolicyInput, cfg: &PolicyConfig) -> Result<GraspAction, PolicyError> {
        match self {
            GraspPolicy::Oracle => oracle_grasp(input.world, &input.obs.camera),
            GraspPolicy::Heuristic => heuristic_grasp(input.obs, input.side, cfg),
            GraspPolicy::Learned(head) => Ok(head.predict_pixel(&featurize(input.obs))),
            GraspPolicy::Fixed(p) => Ok(*p),
        }
    }
}

impl TransitionPolicy {
    /// `post` is the observation after the stretch.
    pub fn act(&self, input: &PolicyInput, cfg: &PolicyConfig) -> Result<TransitionDecision, PolicyError> {
        match self {
            TransitionPolicy::Oracle => Ok(TransitionDecision::from_label(oracle_transition(
                input.world,
                cfg.success_radius,
            ))),
            TransitionPolicy::Heuristic => Ok(heuristic_transition(input.obs, &input.world.frame, input.side, cfg)),
            TransitionPolicy::Learned(head) => Ok(TransitionDecision::from_prob(
                head.predict_success_prob(&featurize(input.obs)),
            )),
            TransitionPolicy::Constant(t) => Ok(TransitionDecision::from_label(*t as u8)),
        }
    }
}

/// Pixel distance between grasps plus 0/1 disagreement on the decision.
pub fn surrogate_loss(pred: (GraspAction, u8), label: (GraspAction, u8)) -> f64 {
    pred.0.distance(&label.0) + (pred.1 as f64 - label.1 as f64).abs()
}
