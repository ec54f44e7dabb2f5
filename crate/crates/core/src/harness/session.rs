//! Interactive collection: a human clicks the grasp pixel and labels the
//! outcome. The session is the single source of truth the UI mirrors.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::collect::DemoRecord;
use super::episode::{episode_id, initial_world};
use super::{derive_rng, Distribution, EpisodeKey, ExperimentConfig, HarnessError, Stream};
use crate::geometry::Pixel;
use crate::policies::Demonstration;
use crate::render::{
    deproject, in_frame, median_depth, render, side_camera, CameraModel, LightingParams, Observation,
};
use crate::sim::{execute_stretch, grasp_at, Side, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingGrasp,
    AwaitingLabel,
    Done,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("expected phase {expected:?}, session is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("pixel ({u}, {v}) is outside the image")]
    OutOfImage { u: f64, v: f64 },
    #[error("no demonstration at index {0}")]
    NoSuchDemo(usize),
    #[error("unknown image {0}")]
    NoSuchImage(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// What the UI renders; the response body of `GET /api/session`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub episode: u64,
    pub side: Side,
    pub attempt: usize,
    pub image_id: String,
    pub image_url: String,
    /// Post-stretch image while a label is pending.
    pub post_image_url: Option<String>,
    pub phase: Phase,
    pub demos: usize,
}

struct Pending {
    pixel: Pixel,
    post_id: String,
}

pub struct LabelSession {
    id: String,
    cfg: ExperimentConfig,
    episode: u64,
    world: WorldState,
    lighting: LightingParams,
    camera: CameraModel,
    side: Side,
    attempt: usize,
    phase: Phase,
    pre_id: String,
    pending: Option<Pending>,
    rng: ChaCha8Rng,
    frame_no: usize,
    images: BTreeMap<String, Arc<Observation>>,
    worlds: BTreeMap<String, Arc<WorldState>>,
    records: Vec<DemoRecord>,
}

impl LabelSession {
    pub fn new(cfg: ExperimentConfig, id: &str) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let key = EpisodeKey {
            stream: Stream::Session,
            index: 0,
        };
        let (world, lighting) = initial_world(&cfg, key, Distribution::Train)?;
        let camera = side_camera(&world.frame, Side::A, &cfg.render);
        let mut s = Self {
            id: id.into(),
            rng: derive_rng(cfg.seed, "session/exec", 0),
            cfg,
            episode: 0,
            world,
            lighting,
            camera,
            side: Side::A,
            attempt: 1,
            phase: Phase::AwaitingGrasp,
            pre_id: String::new(),
            pending: None,
            frame_no: 0,
            images: BTreeMap::new(),
            worlds: BTreeMap::new(),
            records: Vec::new(),
        };
        s.pre_id = s.snap();
        Ok(s)
    }

    fn key(&self) -> EpisodeKey {
        EpisodeKey {
            stream: Stream::Session,
            index: self.episode,
        }
    }

    fn snap(&mut self) -> String {
        let obs = render(&self.world, &self.camera, &self.lighting, self.cfg.render.depth_dropout, &mut self.rng);
        let name = format!("{}-{}-{:02}", episode_id(self.key(), Distribution::Train), self.side, self.frame_no);
        self.frame_no += 1;
        self.images.insert(name.clone(), Arc::new(obs));
        self.worlds.insert(name.clone(), Arc::new(self.world.clone()));
        name
    }

    fn expect(&self, phase: Phase) -> Result<(), SessionError> {
        if self.phase != phase {
            return Err(SessionError::WrongPhase {
                expected: phase,
                actual: self.phase,
            });
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            episode: self.episode,
            side: self.side,
            attempt: self.attempt,
            image_id: self.pre_id.clone(),
            image_url: format!("/api/image/{}.png", self.pre_id),
            post_image_url: self.pending.as_ref().map(|p| format!("/api/image/{}.png", p.post_id)),
            phase: self.phase,
            demos: self.records.len(),
        }
    }

    /// Executes a grasp at the clicked pixel and the stretch toward the
    /// current side's corner. Returns the post-stretch image id. With no
    /// depth under the click nothing moves and the pre-image is returned.
    pub fn grasp(&mut self, pixel: Pixel) -> Result<String, SessionError> {
        self.expect(Phase::AwaitingGrasp)?;
        if !pixel.is_finite() || !in_frame(&pixel) {
            return Err(SessionError::OutOfImage { u: pixel.u, v: pixel.v });
        }
        let pre = self.images[&self.pre_id].clone();
        let post_id = match median_depth(&pre, &pixel) {
            Ok(z) => {
                let point = deproject(&pixel, z, &self.camera).map_err(HarnessError::from)?;
                let g = grasp_at(&self.world, point, self.cfg.sim.grasp_radius);
                let target = self.world.stretch_target(self.side, self.cfg.sim.target_lift);
                self.world = execute_stretch(&self.world, &g, target, &self.cfg.sim).0;
                self.snap()
            }
            Err(_) => self.pre_id.clone(),
        };
        self.pending = Some(Pending {
            pixel,
            post_id: post_id.clone(),
        });
        self.phase = Phase::AwaitingLabel;
        Ok(post_id)
    }

    /// Records the attempt with the human's label and advances: success
    /// or the attempt cap moves to the next side, or ends the episode
    /// after Side B.
    pub fn label(&mut self, success: bool) -> Result<SessionView, SessionError> {
        self.expect(Phase::AwaitingLabel)?;
        let p = self.pending.take().expect("pending grasp in AwaitingLabel");
        self.records.push(DemoRecord {
            demo: Demonstration {
                pre_obs: self.images[&self.pre_id].clone(),
                grasp_label: p.pixel,
                executed_pixel: p.pixel,
                post_obs: self.images[&p.post_id].clone(),
                transition_label: success as u8,
                side: self.side,
            },
            episode: episode_id(self.key(), Distribution::Train),
            attempt: self.attempt,
            pre_id: self.pre_id.clone(),
            post_id: p.post_id.clone(),
            pre_world: self.worlds[&self.pre_id].clone(),
            post_world: self.worlds[&p.post_id].clone(),
        });
        self.pre_id = p.post_id;
        if success || self.attempt >= self.cfg.max_attempts_per_side {
            match self.side {
                Side::A => {
                    self.side = Side::B;
                    self.world.robot_side = Side::B;
                    self.camera = side_camera(&self.world.frame, Side::B, &self.cfg.render);
                    self.attempt = 1;
                    self.pre_id = self.snap();
                    self.phase = Phase::AwaitingGrasp;
                }
                Side::B => self.phase = Phase::Done,
            }
        } else {
            self.attempt += 1;
            self.phase = Phase::AwaitingGrasp;
        }
        Ok(self.view())
    }

    /// Starts the next episode once the current one is done.
    pub fn next_episode(&mut self) -> Result<SessionView, SessionError> {
        self.expect(Phase::Done)?;
        self.episode += 1;
        let (world, lighting) = initial_world(&self.cfg, self.key(), Distribution::Train)?;
        self.world = world;
        self.lighting = lighting;
        self.side = Side::A;
        self.camera = side_camera(&self.world.frame, Side::A, &self.cfg.render);
        self.attempt = 1;
        self.frame_no = 0;
        self.pre_id = self.snap();
        self.phase = Phase::AwaitingGrasp;
        Ok(self.view())
    }

    pub fn records(&self) -> &[DemoRecord] {
        &self.records
    }

    /// Discards a mislabelled record.
    pub fn delete_demo(&mut self, index: usize) -> Result<DemoRecord, SessionError> {
        if index >= self.records.len() {
            return Err(SessionError::NoSuchDemo(index));
        }
        Ok(self.records.remove(index))
    }

    pub fn image(&self, id: &str) -> Result<Arc<Observation>, SessionError> {
        self.images
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NoSuchImage(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::oracle_grasp;

    #[test]
    fn click_label_advance() {
        let mut s = LabelSession::new(ExperimentConfig::default(), "s1").unwrap();
        let v = s.view();
        assert_eq!((v.side, v.attempt, v.phase), (Side::A, 1, Phase::AwaitingGrasp));
        assert!(matches!(s.label(true), Err(SessionError::WrongPhase { .. })));
        let post = s.grasp(Pixel::new(100.0, 50.0)).unwrap();
        assert_eq!(s.view().phase, Phase::AwaitingLabel);
        assert!(s.image(&post).is_ok());
        let v = s.label(true).unwrap();
        assert_eq!(s.records()[0].demo.grasp_label, Pixel::new(100.0, 50.0));
        assert_eq!(s.records()[0].demo.executed_pixel, Pixel::new(100.0, 50.0));
        assert_eq!((v.side, v.attempt, v.phase), (Side::B, 1, Phase::AwaitingGrasp));
    }

    #[test]
    fn retries_then_cap_then_done() {
        let cfg = ExperimentConfig {
            max_attempts_per_side: 2,
            ..Default::default()
        };
        let mut s = LabelSession::new(cfg, "s2").unwrap();
        for expected in [(Side::A, 2), (Side::B, 1), (Side::B, 2)] {
            s.grasp(Pixel::new(10.0, 10.0)).unwrap();
            let v = s.label(false).unwrap();
            assert_eq!((v.side, v.attempt), expected);
        }
        s.grasp(Pixel::new(10.0, 10.0)).unwrap();
        assert_eq!(s.label(false).unwrap().phase, Phase::Done);
        assert_eq!(s.records().len(), 4);
        assert!(s.grasp(Pixel::new(1.0, 1.0)).is_err());
        let v = s.next_episode().unwrap();
        assert_eq!((v.episode, v.side, v.phase), (1, Side::A, Phase::AwaitingGrasp));
    }

    #[test]
    fn oracle_click_succeeds_and_deletion_works() {
        let mut s = LabelSession::new(ExperimentConfig::default(), "s3").unwrap();
        let px = oracle_grasp(&s.world, &s.camera).unwrap();
        s.grasp(px).unwrap();
        s.label(true).unwrap();
        assert!(matches!(s.grasp(Pixel::new(-1.0, 3.0)), Err(SessionError::OutOfImage { .. })));
        assert!(s.delete_demo(3).is_err());
        s.delete_demo(0).unwrap();
        assert!(s.records().is_empty());
    }
}
