//! The scripted end-to-end experiment.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::collect::{collect_demonstrations, CollectMode, DemoRecord};
use super::eval::{covariate_shift_eval, evaluate_policies, CoverageReport, CovariateShiftReport, PolicySet};
use super::persist::{write_coverage_report, write_json, write_run_metadata};
use super::{derive_rng, Distribution, ExperimentConfig, HarnessError, Stream};
use crate::dart::{crossval_sigma, scale_sigma, DartError, NoiseModel};
use crate::policies::{train_grasp, train_transition, Demonstration, GraspPolicy, Head, PolicyError, TransitionPolicy};

/// Heads trained on one dataset. A transition set with a single class
/// yields the constant answer that class implies.
#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub grasp: Arc<Head>,
    pub transition: Option<Arc<Head>>,
    pub constant_transition: Option<bool>,
}

impl TrainedPair {
    pub fn policy_set(&self, name: &str) -> PolicySet {
        let transition = match (&self.transition, self.constant_transition) {
            (Some(h), _) => TransitionPolicy::Learned(h.clone()),
            (None, c) => TransitionPolicy::Constant(c.unwrap_or(true)),
        };
        PolicySet::new(name, GraspPolicy::Learned(self.grasp.clone()), transition)
    }
}

const GRASP_HEAD: &str = "grasp.bmh";
const TRANSITION_HEAD: &str = "transition.bmh";
const TRANSITION_CONSTANT: &str = "transition_constant.json";

impl TrainedPair {
    /// `grasp.bmh` plus either `transition.bmh` or, for a constant
    /// classifier, `transition_constant.json`.
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        self.grasp.save(&dir.join(GRASP_HEAD))?;
        let _ = std::fs::remove_file(dir.join(TRANSITION_HEAD));
        let _ = std::fs::remove_file(dir.join(TRANSITION_CONSTANT));
        match (&self.transition, self.constant_transition) {
            (Some(t), _) => t.save(&dir.join(TRANSITION_HEAD))?,
            (None, c) => write_json(&dir.join(TRANSITION_CONSTANT), &c.unwrap_or(true))?,
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let grasp = Arc::new(Head::load(&dir.join(GRASP_HEAD))?);
        let t = dir.join(TRANSITION_HEAD);
        if t.exists() {
            return Ok(Self {
                grasp,
                transition: Some(Arc::new(Head::load(&t)?)),
                constant_transition: None,
            });
        }
        let c: bool = serde_json::from_str(&std::fs::read_to_string(dir.join(TRANSITION_CONSTANT))?)?;
        Ok(Self {
            grasp,
            transition: None,
            constant_transition: Some(c),
        })
    }
}

pub fn train_pair(demos: &[Demonstration], cfg: &ExperimentConfig, tag: &str) -> Result<TrainedPair, HarnessError> {
    let mut rng = derive_rng(cfg.seed, &format!("{}/{tag}/grasp", Stream::Train.name()), 0);
    let grasp = Arc::new(train_grasp(demos, &cfg.train, &cfg.render, &mut rng)?);
    let mut rng = derive_rng(cfg.seed, &format!("{}/{tag}/transition", Stream::Train.name()), 0);
    match train_transition(demos, &cfg.train, &cfg.render, &mut rng) {
        Ok(h) => Ok(TrainedPair {
            grasp,
            transition: Some(Arc::new(h)),
            constant_transition: None,
        }),
        Err(PolicyError::DegenerateDataset(label)) => {
            log::warn!("{tag}: every transition label is {label}; using a constant classifier");
            Ok(TrainedPair {
                grasp,
                transition: None,
                constant_transition: Some(label == 1),
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Cross-validated learner residuals on the bootstrap set, rescaled to
/// the configured prior. An all-zero estimate falls back to an isotropic
/// covariance of the same trace.
pub fn fit_noise(bootstrap: &[Demonstration], cfg: &ExperimentConfig) -> Result<NoiseModel, HarnessError> {
    let mut rng = derive_rng(cfg.seed, Stream::Folds.name(), 0);
    let raw = crossval_sigma(bootstrap, cfg.demos.folds, &mut rng, |set, rng| {
        let head = train_grasp(set, &cfg.train, &cfg.render, rng)?;
        Ok(move |obs: &crate::render::Observation| head.predict_pixel(&crate::policies::featurize(obs)))
    })?;
    log::info!("cross-validated residual covariance {:?}", raw.sigma);
    match scale_sigma(&raw, cfg.noise_prior) {
        Ok(m) => Ok(m),
        Err(DartError::ZeroTrace) => {
            log::warn!("residual covariance is zero; using isotropic noise");
            Ok(NoiseModel::isotropic(cfg.noise_prior))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub noise: NoiseModel,
    pub bc_failures: usize,
    pub dart_failures: usize,
    pub demos: usize,
    pub coverage_train: Vec<(String, f64)>,
    pub coverage_test: Vec<(String, f64)>,
    pub transition_gap: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub noise: NoiseModel,
    pub bootstrap: Vec<DemoRecord>,
    pub bc: Vec<DemoRecord>,
    pub dart: Vec<DemoRecord>,
    pub bc_pair: TrainedPair,
    pub dart_pair: TrainedPair,
    pub train: CoverageReport,
    pub test: CoverageReport,
    pub shift: CovariateShiftReport,
    pub summary: PipelineSummary,
}

fn demos_of(records: &[DemoRecord]) -> Vec<Demonstration> {
    records.iter().map(|r| r.demo.clone()).collect()
}

/// bootstrap → fit noise → BC and DART collection → training →
/// coverage on both distributions → covariate shift. With `out`, reports,
/// heads and the noise model are written there.
pub fn run_pipeline(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PipelineOutcome, HarnessError> {
    cfg.validate()?;
    if let Some(dir) = out {
        write_run_metadata(dir, cfg)?;
    }
    let bootstrap = collect_demonstrations(CollectMode::Bc, cfg.demos.bootstrap, None, cfg, Stream::Bootstrap)?;
    let noise = fit_noise(&bootstrap.demos(), cfg)?;
    let bc = collect_demonstrations(CollectMode::Bc, cfg.demos.main, None, cfg, Stream::Collect)?;
    let dart = collect_demonstrations(CollectMode::Dart, cfg.demos.main, Some(&noise), cfg, Stream::Collect)?;
    let bc_pair = train_pair(&demos_of(&bc.records), cfg, "bc")?;
    let dart_pair = train_pair(&demos_of(&dart.records), cfg, "dart")?;

    let sets = [
        PolicySet::oracle(),
        dart_pair.policy_set("dart"),
        bc_pair.policy_set("bc"),
        PolicySet::heuristic(),
    ];
    let train = evaluate_policies(&sets, cfg.eval.trials, Distribution::Train, cfg)?;
    let test = evaluate_policies(&sets, cfg.eval.trials, Distribution::Test, cfg)?;
    let heldout = collect_demonstrations(CollectMode::Bc, cfg.demos.heldout, None, cfg, Stream::Heldout)?;
    let shift = covariate_shift_eval(&sets[1..3], &heldout.records, cfg.eval.covshift_rollouts, cfg)?;

    let summary = PipelineSummary {
        seed: cfg.seed,
        noise: noise.clone(),
        bc_failures: bc.failures(),
        dart_failures: dart.failures(),
        demos: cfg.demos.main,
        coverage_train: train.policies.iter().map(|p| (p.policy.clone(), p.mean)).collect(),
        coverage_test: test.policies.iter().map(|p| (p.policy.clone(), p.mean)).collect(),
        transition_gap: shift.policies.iter().map(|p| (p.policy.clone(), p.transition_gap())).collect(),
    };
    if let Some(dir) = out {
        let reports = dir.join("reports");
        write_coverage_report(&reports, "coverage_train", &train)?;
        write_coverage_report(&reports, "coverage_test", &test)?;
        write_json(&reports.join("covshift.json"), &shift)?;
        write_json(&reports.join("summary.json"), &summary)?;
        write_json(&dir.join("noise.json"), &noise)?;
        for (tag, pair) in [("bc", &bc_pair), ("dart", &dart_pair)] {
            pair.save(&dir.join("heads").join(tag))?;
        }
    }
    Ok(PipelineOutcome {
        noise,
        bootstrap: bootstrap.records,
        bc: bc.records,
        dart: dart.records,
        bc_pair,
        dart_pair,
        train,
        test,
        shift,
        summary,
    })
}
