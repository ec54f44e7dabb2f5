//! The option loop: grasp, stretch, decide, over Side A then Side B.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, Distribution, EpisodeKey, ExperimentConfig, HarnessError};
use crate::dart::{sample_noisy_grasp, NoiseModel};
use crate::geometry::{Pixel, Vec3};
use crate::policies::{
    oracle_grasp, oracle_transition, Decision, GraspPolicy, PolicyError, PolicyInput, TransitionDecision,
    TransitionPolicy,
};
use crate::render::{deproject, median_depth, render, side_camera, LightingParams, Observation, IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::sim::{
    coverage, execute_stretch, grasp_at, sample_initial_state, Side, StretchLog, WorldState, TEST_CATALOG,
    TRAIN_CATALOG,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    /// 1-based within the side.
    pub attempt: usize,
    pub pre_obs: String,
    /// What the grasp policy chose.
    pub pixel: Pixel,
    /// The heuristic found nothing and the image centre was used.
    pub heuristic_miss: bool,
    /// Where the gripper was sent, after noise and clamping.
    pub executed_pixel: Pixel,
    pub clamped: bool,
    /// Median depth under the executed pixel; `None` when the window had
    /// no valid depth and the attempt failed without moving.
    pub depth: Option<f64>,
    pub deprojected: Option<Vec3>,
    pub attached: Option<usize>,
    pub stretch: Option<StretchLog>,
    pub post_obs: String,
    pub decision: TransitionDecision,
    /// The cap was reached and the side ended regardless of `decision`.
    pub forced: bool,
    /// Supervisor's grasp on the pre-stretch state, when the corner is in view.
    pub oracle_pixel: Option<Pixel>,
    /// Supervisor's transition label on the post-stretch state.
    pub oracle_label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideLog {
    pub side: Side,
    pub attempts: Vec<AttemptLog>,
    pub forced_transition: bool,
}

/// Per-episode trace. Wall time is deliberately absent so logs are a
/// pure function of config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub id: String,
    pub key: EpisodeKey,
    pub distribution: Distribution,
    pub seed: u64,
    pub initial_coverage: f64,
    pub sides: Vec<SideLog>,
    pub final_coverage: f64,
    /// Set when a policy failed; the episode stopped where it was.
    pub aborted: Option<String>,
}

impl EpisodeLog {
    pub fn attempt_count(&self) -> usize {
        self.sides.iter().map(|s| s.attempts.len()).sum()
    }

    pub fn attempts(&self) -> impl Iterator<Item = (Side, &AttemptLog)> {
        self.sides.iter().flat_map(|s| s.attempts.iter().map(move |a| (s.side, a)))
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub log: EpisodeLog,
    /// Rendered observations by id.
    pub images: BTreeMap<String, Arc<Observation>>,
    /// World state each observation was rendered from.
    pub worlds: BTreeMap<String, Arc<WorldState>>,
    pub final_world: WorldState,
}

/// Draws the initial world and the episode's lighting.
pub(crate) fn initial_world(
    cfg: &ExperimentConfig,
    key: EpisodeKey,
    dist: Distribution,
) -> Result<(WorldState, LightingParams), HarnessError> {
    let mut rng = derive_rng(cfg.seed, &format!("{}/init", key.stream.name()), key.index);
    let (count, catalog) = match dist {
        Distribution::Train => (cfg.distractors.train_count, TRAIN_CATALOG),
        Distribution::Test => (
            rng.random_range(cfg.distractors.test_min..=cfg.distractors.test_max),
            TEST_CATALOG,
        ),
    };
    let world = sample_initial_state(&mut rng, &cfg.sim, count, catalog)?;
    let lighting = LightingParams::sample(&mut rng, &cfg.render);
    Ok((world, lighting))
}

pub fn episode_id(key: EpisodeKey, dist: Distribution) -> String {
    format!("{}-{}-{:05}", key.stream.name(), dist, key.index)
}

fn image_centre() -> Pixel {
    Pixel::new((IMAGE_WIDTH / 2) as f64, (IMAGE_HEIGHT / 2) as f64)
}

/// Runs both sides. Each side loops render → grasp → stretch → render →
/// decide until the transition policy says go or the attempt cap forces
/// it. With `noise`, executed grasps are drawn around the chosen pixel.
/// The post-stretch image of a retry is reused as the next pre-image.
pub fn run_episode(
    grasp: &GraspPolicy,
    transition: &TransitionPolicy,
    noise: Option<&NoiseModel>,
    cfg: &ExperimentConfig,
    key: EpisodeKey,
    dist: Distribution,
) -> Result<Episode, HarnessError> {
    let (mut world, lighting) = initial_world(cfg, key, dist)?;
    let stream = key.stream.name();
    let mut exec_rng = derive_rng(cfg.seed, &format!("{stream}/exec"), key.index);
    let mut noise_rng = derive_rng(cfg.seed, &format!("{stream}/noise"), key.index);
    let id = episode_id(key, dist);
    let mut images = BTreeMap::new();
    let mut worlds = BTreeMap::new();
    let mut frame_no = 0usize;
    let mut log = EpisodeLog {
        id: id.clone(),
        key,
        distribution: dist,
        seed: cfg.seed,
        initial_coverage: coverage(&world, cfg.sim.coverage_cell),
        sides: Vec::new(),
        final_coverage: 0.0,
        aborted: None,
    };

    'sides: for side in [Side::A, Side::B] {
        world.robot_side = side;
        let camera = side_camera(&world.frame, side, &cfg.render);
        let mut snap = |world: &WorldState,
                        rng: &mut ChaCha8Rng,
                        images: &mut BTreeMap<String, Arc<Observation>>,
                        worlds: &mut BTreeMap<String, Arc<WorldState>>| {
            let obs = render(world, &camera, &lighting, cfg.render.depth_dropout, rng);
            let name = format!("{id}-{side}-{frame_no:02}");
            frame_no += 1;
            images.insert(name.clone(), Arc::new(obs));
            worlds.insert(name.clone(), Arc::new(world.clone()));
            name
        };
        let mut pre_id = snap(&world, &mut exec_rng, &mut images, &mut worlds);
        let mut side_log = SideLog {
            side,
            attempts: Vec::new(),
            forced_transition: false,
        };
        for attempt in 1..=cfg.max_attempts_per_side {
            let pre: Arc<Observation> = images[&pre_id].clone();
            let input = PolicyInput {
                world: &world,
                obs: &pre,
                side,
            };
            let (pixel, heuristic_miss) = match grasp.act(&input, &cfg.policy) {
                Ok(p) if p.is_finite() => (p, false),
                Ok(p) => {
                    log::warn!("{id}: grasp policy returned non-finite pixel {p:?}; using image centre");
                    (image_centre(), true)
                }
                Err(PolicyError::HeuristicMiss(what)) => {
                    log::debug!("{id}: heuristic found no {what} pixel; grasping image centre");
                    (image_centre(), true)
                }
                Err(e) => {
                    log::error!("{id}: grasp policy failed: {e}");
                    log.aborted = Some(e.to_string());
                    log.sides.push(side_log);
                    break 'sides;
                }
            };
            let oracle_pixel = oracle_grasp(&world, &camera).ok();
            let (executed, noise_clamped) = match noise {
                Some(model) => sample_noisy_grasp(&pixel, model, &mut noise_rng),
                None => (pixel, false),
            };
            let executed_pixel = executed.clamped(IMAGE_WIDTH, IMAGE_HEIGHT);
            let clamped = noise_clamped || executed_pixel != executed;

            let mut record = AttemptLog {
                attempt,
                pre_obs: pre_id.clone(),
                pixel,
                heuristic_miss,
                executed_pixel,
                clamped,
                depth: None,
                deprojected: None,
                attached: None,
                stretch: None,
                post_obs: pre_id.clone(),
                decision: TransitionDecision::from_prob(0.0),
                forced: false,
                oracle_pixel,
                oracle_label: oracle_transition(&world, cfg.policy.success_radius),
            };
            match median_depth(&pre, &executed_pixel) {
                Ok(z) => {
                    let point = deproject(&executed_pixel, z, &camera)?;
                    let g = grasp_at(&world, point, cfg.sim.grasp_radius);
                    let target = world.stretch_target(side, cfg.sim.target_lift);
                    let (next, stretch) = execute_stretch(&world, &g, target, &cfg.sim);
                    world = next;
                    let post_id = snap(&world, &mut exec_rng, &mut images, &mut worlds);
                    let post = images[&post_id].clone();
                    let decided = transition.act(
                        &PolicyInput {
                            world: &world,
                            obs: &post,
                            side,
                        },
                        &cfg.policy,
                    );
                    record.depth = Some(z);
                    record.deprojected = Some(point);
                    record.attached = g.attached;
                    record.stretch = Some(stretch);
                    record.post_obs = post_id.clone();
                    record.oracle_label = oracle_transition(&world, cfg.policy.success_radius);
                    pre_id = post_id;
                    match decided {
                        Ok(d) => record.decision = d,
                        Err(e) => {
                            log::error!("{id}: transition policy failed: {e}");
                            log.aborted = Some(e.to_string());
                            side_log.attempts.push(record);
                            log.sides.push(side_log);
                            break 'sides;
                        }
                    }
                }
                Err(e) => {
                    log::debug!("{id}: attempt {attempt} on side {side} has no depth: {e}");
                }
            }
            let go = record.decision.decision == Decision::Transition;
            if !go && attempt == cfg.max_attempts_per_side {
                record.forced = true;
                side_log.forced_transition = true;
                log::debug!("{id}: side {side} forced to transition after {attempt} attempts");
            }
            side_log.attempts.push(record);
            if go {
                break;
            }
        }
        log.sides.push(side_log);
    }
    log.final_coverage = coverage(&world, cfg.sim.coverage_cell);
    Ok(Episode {
        log,
        images,
        worlds,
        final_world: world,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Stream;

    fn key(i: u64) -> EpisodeKey {
        EpisodeKey {
            stream: Stream::Eval,
            index: i,
        }
    }

    #[test]
    fn always_transition_takes_one_attempt_per_side() {
        let cfg = ExperimentConfig::default();
        let ep = run_episode(
            &GraspPolicy::Fixed(image_centre()),
            &TransitionPolicy::Constant(true),
            None,
            &cfg,
            key(0),
            Distribution::Train,
        )
        .unwrap();
        assert_eq!(ep.log.sides.len(), 2);
        assert!(ep.log.sides.iter().all(|s| s.attempts.len() == 1 && !s.forced_transition));
        assert!((0.0..=1.0).contains(&ep.log.final_coverage));
    }

    #[test]
    fn always_retry_hits_the_cap_then_moves_on() {
        let cfg = ExperimentConfig {
            max_attempts_per_side: 3,
            ..Default::default()
        };
        let ep = run_episode(
            &GraspPolicy::Fixed(Pixel::new(100.0, 400.0)),
            &TransitionPolicy::Constant(false),
            None,
            &cfg,
            key(1),
            Distribution::Train,
        )
        .unwrap();
        for s in &ep.log.sides {
            assert_eq!(s.attempts.len(), 3);
            assert!(s.forced_transition);
            assert!(s.attempts[2].forced && !s.attempts[0].forced);
            // each retry starts from the previous post-stretch image
            assert_eq!(s.attempts[1].pre_obs, s.attempts[0].post_obs);
        }
    }

    #[test]
    fn oracle_episode_reaches_full_coverage() {
        let cfg = ExperimentConfig::default();
        let ep = run_episode(&GraspPolicy::Oracle, &TransitionPolicy::Oracle, None, &cfg, key(2), Distribution::Train)
            .unwrap();
        assert!(ep.log.aborted.is_none());
        assert!(ep.log.final_coverage >= 0.95, "coverage {}", ep.log.final_coverage);
        assert!(ep.log.sides.iter().all(|s| s.attempts.len() <= 2));
        for (_, a) in ep.log.attempts() {
            assert_eq!(a.pixel, a.oracle_pixel.unwrap());
            assert_eq!(a.decision.as_label(), a.oracle_label);
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        let cfg = ExperimentConfig::default();
        let run = || {
            run_episode(&GraspPolicy::Heuristic, &TransitionPolicy::Heuristic, None, &cfg, key(3), Distribution::Test)
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(serde_json::to_string(&a.log).unwrap(), serde_json::to_string(&b.log).unwrap());
        assert_eq!(a.images.keys().collect::<Vec<_>>(), b.images.keys().collect::<Vec<_>>());
        for (k, img) in &a.images {
            assert!(**img == *b.images[k]);
        }
    }

    #[test]
    fn all_missing_depth_is_a_failed_attempt() {
        let mut cfg = ExperimentConfig::default();
        cfg.render.depth_dropout = 1.0;
        cfg.max_attempts_per_side = 2;
        let ep = run_episode(&GraspPolicy::Oracle, &TransitionPolicy::Constant(true), None, &cfg, key(4), Distribution::Train)
            .unwrap();
        for s in &ep.log.sides {
            assert_eq!(s.attempts.len(), 2);
            assert!(s.attempts.iter().all(|a| a.depth.is_none() && a.stretch.is_none()));
            assert!(s.forced_transition);
        }
        assert_eq!(ep.log.final_coverage, ep.log.initial_coverage);
    }
}
