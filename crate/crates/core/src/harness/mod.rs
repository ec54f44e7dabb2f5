//! Experiment plumbing: the two-sided option loop, supervisor data
//! collection, coverage and covariate-shift evaluation, persistence and
//! the interactive labelling session.

mod collect;
mod episode;
mod eval;
mod persist;
mod pipeline;
mod session;

pub use collect::{collect_demonstrations, CollectMode, Collection, DemoRecord};
pub use episode::{episode_id, run_episode, AttemptLog, Episode, EpisodeLog, SideLog};
pub use eval::{
    covariate_shift_eval, evaluate_policies, evaluate_policies_recorded, run_episodes, CoverageReport, CovariateShiftReport, EpisodeCoverage, PolicyCoverage,
    PolicySet, ShiftEntry,
};
pub use persist::{
    image_path, load_demonstrations, load_episodes, save_demonstrations, save_episode_images, save_episodes, write_coverage_report, write_json,
    write_run_metadata, DemoLine, DEMOS_FILE, EPISODES_FILE, SCHEMA_VERSION,
};
pub use pipeline::{fit_noise, run_pipeline, train_pair, PipelineOutcome, PipelineSummary, TrainedPair};
pub use session::{LabelSession, Phase, SessionError, SessionView};

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dart::DartError;
use crate::policies::{PolicyConfig, PolicyError, TrainConfig};
use crate::render::{RenderConfig, RenderError};
use crate::sim::{SimConfig, SimError};

/// Crate version, or `git describe` output when built from a checkout.
pub const VERSION: &str = env!("BEDMAKE_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("DART collection needs a noise model; run `fit-noise` first")]
    MissingNoiseModel,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Dart(#[from] DartError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad record: {0}")]
    Format(String),
}

/// Which initial-state distribution an episode is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Train,
    Test,
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Distribution::Train => "train",
            Distribution::Test => "test",
        })
    }
}

/// Independent random streams. Episodes with the same stream and index
/// start from the same state, which is what makes comparisons matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Bootstrap,
    Collect,
    Heldout,
    Eval,
    Rollout,
    Session,
    Train,
    Folds,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Bootstrap => "bootstrap",
            Stream::Collect => "collect",
            Stream::Heldout => "heldout",
            Stream::Eval => "eval",
            Stream::Rollout => "rollout",
            Stream::Session => "session",
            Stream::Train => "train",
            Stream::Folds => "folds",
        }
    }
}

/// Identifies one episode: its stream and index under the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeKey {
    pub stream: Stream,
    pub index: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// `hash(master, tag, index)`; distinct tags give unrelated seeds.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ fnv1a(tag)) ^ index)
}

pub fn derive_rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoCounts {
    /// Supervisor attempts used to fit the noise model.
    pub bootstrap: usize,
    /// Attempts collected for training in each mode.
    pub main: usize,
    /// Held-out supervisor attempts for the covariate-shift study.
    pub heldout: usize,
    /// Cross-validation folds over the bootstrap set.
    pub folds: usize,
}

impl Default for DemoCounts {
    fn default() -> Self {
        Self {
            bootstrap: 10,
            main: 50,
            heldout: 30,
            folds: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistractorConfig {
    /// Distractors per training-distribution episode, drawn from the
    /// training catalog.
    pub train_count: usize,
    /// Inclusive range of held-out distractors per test episode.
    pub test_min: usize,
    pub test_max: usize,
}

impl Default for DistractorConfig {
    fn default() -> Self {
        Self {
            train_count: 0,
            test_min: 1,
            test_max: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Episodes per policy and distribution.
    pub trials: usize,
    /// Learner rollouts for the robot-distribution losses.
    pub covshift_rollouts: usize,
    /// Run evaluation episodes on the rayon pool.
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            covshift_rollouts: 20,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// What one demonstration is; always `"attempt"` (one grasp + stretch).
    pub demo_unit: String,
    /// Attempts per side before the transition is forced.
    pub max_attempts_per_side: usize,
    /// Target prior error of the injected noise (px, Euclidean).
    pub noise_prior: f64,
    pub demos: DemoCounts,
    pub distractors: DistractorConfig,
    pub eval: EvalConfig,
    pub sim: SimConfig,
    pub render: RenderConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            demo_unit: "attempt".into(),
            max_attempts_per_side: 4,
            noise_prior: 30.0,
            demos: DemoCounts::default(),
            distractors: DistractorConfig::default(),
            eval: EvalConfig::default(),
            sim: SimConfig::default(),
            render: RenderConfig::default(),
            policy: PolicyConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let counts = [
            ("max_attempts_per_side", self.max_attempts_per_side),
            ("demos.bootstrap", self.demos.bootstrap),
            ("demos.main", self.demos.main),
            ("demos.heldout", self.demos.heldout),
            ("eval.trials", self.eval.trials),
            ("eval.covshift_rollouts", self.eval.covshift_rollouts),
            ("train.epochs", self.train.epochs),
            ("train.batch_size", self.train.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(HarnessError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.demos.folds < 2 || self.demos.folds > self.demos.bootstrap {
            return Err(HarnessError::Config(format!(
                "demos.folds must be in 2..={}, got {}",
                self.demos.bootstrap, self.demos.folds
            )));
        }
        if self.distractors.test_min > self.distractors.test_max {
            return Err(HarnessError::Config("distractors.test_min exceeds test_max".into()));
        }
        if self.demo_unit != "attempt" {
            return Err(HarnessError::Config(format!(
                "demo_unit must be \"attempt\", got {:?}",
                self.demo_unit
            )));
        }
        if !(self.noise_prior > 0.0 && self.noise_prior.is_finite()) {
            return Err(HarnessError::Config("noise_prior must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.render.depth_dropout) {
            return Err(HarnessError::Config("render.depth_dropout must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_streams_and_indices() {
        let a = derive_seed(7, "eval", 0);
        assert_eq!(a, derive_seed(7, "eval", 0));
        assert_ne!(a, derive_seed(7, "eval", 1));
        assert_ne!(a, derive_seed(7, "collect", 0));
        assert_ne!(a, derive_seed(8, "eval", 0));
    }

    #[test]
    fn config_toml_roundtrip_and_defaults() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_toml("seed = 3\n[demos]\nmain = 20\n").unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.demos.main, 20);
        assert_eq!(partial.demos.bootstrap, 10);
        assert_eq!(partial.noise_prior, 30.0);
    }

    #[test]
    fn zero_counts_are_rejected() {
        assert!(ExperimentConfig::from_toml("max_attempts_per_side = 0").is_err());
        assert!(ExperimentConfig::from_toml("[demos]\nfolds = 11").is_err());
        assert!(ExperimentConfig::from_toml("demo_unit = \"episode\"").is_err());
        assert!(ExperimentConfig::from_toml("bogus = [").is_err());
    }
}
