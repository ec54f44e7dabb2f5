//! Coverage evaluation and the supervisor-versus-robot loss comparison.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::collect::DemoRecord;
use super::episode::{run_episode, EpisodeLog};
use super::persist::{save_episode_images, save_episodes};
use super::{Distribution, EpisodeKey, ExperimentConfig, HarnessError, Stream};
use crate::policies::{GraspPolicy, PolicyInput, TransitionPolicy};

/// A named grasp/transition pair evaluated together.
#[derive(Debug, Clone)]
pub struct PolicySet {
    pub name: String,
    pub grasp: GraspPolicy,
    pub transition: TransitionPolicy,
}

impl PolicySet {
    pub fn new(name: &str, grasp: GraspPolicy, transition: TransitionPolicy) -> Self {
        Self {
            name: name.into(),
            grasp,
            transition,
        }
    }

    pub fn oracle() -> Self {
        Self::new("oracle", GraspPolicy::Oracle, TransitionPolicy::Oracle)
    }

    pub fn heuristic() -> Self {
        Self::new("heuristic", GraspPolicy::Heuristic, TransitionPolicy::Heuristic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCoverage {
    pub episode: String,
    pub index: u64,
    pub coverage: f64,
    pub initial_coverage: f64,
    pub attempts_a: usize,
    pub attempts_b: usize,
    pub forced: usize,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCoverage {
    pub policy: String,
    /// Over non-aborted episodes.
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two episodes.
    pub stdev: f64,
    pub episodes: Vec<EpisodeCoverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub distribution: Distribution,
    pub trials: usize,
    pub policies: Vec<PolicyCoverage>,
}

impl CoverageReport {
    pub fn get(&self, policy: &str) -> Option<&PolicyCoverage> {
        self.policies.iter().find(|p| p.policy == policy)
    }
}

fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `n` episodes per set on `stream`, indices `0..n`. Every set sees
/// the same initial states. Results are in index order.
pub fn run_episodes(
    set: &PolicySet,
    n: usize,
    dist: Distribution,
    stream: Stream,
    cfg: &ExperimentConfig,
) -> Result<Vec<EpisodeLog>, HarnessError> {
    run_recorded(set, n, dist, stream, cfg, None)
}

/// With `record`, each episode's images are written there as soon as it
/// finishes, so only logs are held in memory.
fn run_recorded(
    set: &PolicySet,
    n: usize,
    dist: Distribution,
    stream: Stream,
    cfg: &ExperimentConfig,
    record: Option<&Path>,
) -> Result<Vec<EpisodeLog>, HarnessError> {
    let one = |i: usize| {
        let key = EpisodeKey {
            stream,
            index: i as u64,
        };
        let ep = run_episode(&set.grasp, &set.transition, None, cfg, key, dist)?;
        if let Some(dir) = record {
            save_episode_images(dir, &ep)?;
        }
        Ok(ep.log)
    };
    let logs: Result<Vec<EpisodeLog>, HarnessError> = if cfg.eval.parallel {
        (0..n).into_par_iter().map(one).collect()
    } else {
        (0..n).map(one).collect()
    };
    let logs = logs?;
    if let Some(dir) = record {
        save_episodes(dir, logs.iter().map(|l| (l, None)), false)?;
    }
    Ok(logs)
}

fn summarize(name: &str, logs: &[EpisodeLog]) -> PolicyCoverage {
    let episodes: Vec<EpisodeCoverage> = logs
        .iter()
        .map(|l| EpisodeCoverage {
            episode: l.id.clone(),
            index: l.key.index,
            coverage: l.final_coverage,
            initial_coverage: l.initial_coverage,
            attempts_a: l.sides.first().map_or(0, |s| s.attempts.len()),
            attempts_b: l.sides.get(1).map_or(0, |s| s.attempts.len()),
            forced: l.sides.iter().filter(|s| s.forced_transition).count(),
            aborted: l.aborted.clone(),
        })
        .collect();
    let kept: Vec<f64> = episodes.iter().filter(|e| e.aborted.is_none()).map(|e| e.coverage).collect();
    let (mean, stdev) = mean_stdev(&kept);
    PolicyCoverage {
        policy: name.into(),
        mean,
        stdev,
        episodes,
    }
}

pub fn evaluate_policies(
    sets: &[PolicySet],
    n_trials: usize,
    dist: Distribution,
    cfg: &ExperimentConfig,
) -> Result<CoverageReport, HarnessError> {
    evaluate_policies_recorded(sets, n_trials, dist, cfg, None)
}

/// [`evaluate_policies`] that also writes each policy's episodes and
/// images under `record/<policy>/`.
pub fn evaluate_policies_recorded(
    sets: &[PolicySet],
    n_trials: usize,
    dist: Distribution,
    cfg: &ExperimentConfig,
    record: Option<&Path>,
) -> Result<CoverageReport, HarnessError> {
    if n_trials == 0 {
        return Err(HarnessError::Config("n_trials must be at least 1".into()));
    }
    let mut policies = Vec::with_capacity(sets.len());
    for set in sets {
        let dir = record.map(|r| r.join(&set.name));
        let logs = run_recorded(set, n_trials, dist, Stream::Eval, cfg, dir.as_deref())?;
        let summary = summarize(&set.name, &logs);
        log::info!("{} on {dist}: mean coverage {:.4}", set.name, summary.mean);
        policies.push(summary);
    }
    Ok(CoverageReport {
        distribution: dist,
        trials: n_trials,
        policies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub policy: String,
    /// Mean pixel distance to the supervisor's grasp.
    pub grasp_supervisor: f64,
    pub grasp_robot: f64,
    /// Fraction of transition decisions that disagree with the supervisor.
    pub transition_supervisor: f64,
    pub transition_robot: f64,
    pub heldout: usize,
    pub robot_grasps: usize,
    pub robot_transitions: usize,
}

impl ShiftEntry {
    pub fn grasp_gap(&self) -> f64 {
        self.grasp_robot - self.grasp_supervisor
    }

    pub fn transition_gap(&self) -> f64 {
        self.transition_robot - self.transition_supervisor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateShiftReport {
    pub rollouts: usize,
    pub policies: Vec<ShiftEntry>,
}

impl CovariateShiftReport {
    pub fn get(&self, policy: &str) -> Option<&ShiftEntry> {
        self.policies.iter().find(|p| p.policy == policy)
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Surrogate losses on held-out supervisor data and on the states the
/// policy visits itself over `n_rollouts` episodes. Both halves of the
/// surrogate are reported separately.
pub fn covariate_shift_eval(
    sets: &[PolicySet],
    heldout: &[DemoRecord],
    n_rollouts: usize,
    cfg: &ExperimentConfig,
) -> Result<CovariateShiftReport, HarnessError> {
    let mut policies = Vec::with_capacity(sets.len());
    for set in sets {
        let (mut gs, mut ts) = (0.0, 0.0);
        for r in heldout {
            let d = &r.demo;
            let p = set.grasp.act(
                &PolicyInput {
                    world: &r.pre_world,
                    obs: &d.pre_obs,
                    side: d.side,
                },
                &cfg.policy,
            );
            // a heuristic miss is scored as the image centre, as executed
            let p = p.unwrap_or(crate::geometry::Pixel::new(320.0, 240.0));
            gs += p.distance(&d.grasp_label);
            let t = set.transition.act(
                &PolicyInput {
                    world: &r.post_world,
                    obs: &d.post_obs,
                    side: d.side,
                },
                &cfg.policy,
            )?;
            ts += (t.as_label() as f64 - d.transition_label as f64).abs();
        }
        let logs = run_episodes(set, n_rollouts, Distribution::Train, Stream::Rollout, cfg)?;
        let (mut gr, mut ng, mut tr, mut nt) = (0.0, 0, 0.0, 0);
        for log in &logs {
            for (_, a) in log.attempts() {
                if let Some(o) = a.oracle_pixel {
                    gr += a.pixel.distance(&o);
                    ng += 1;
                }
                if a.stretch.is_some() {
                    tr += (a.decision.as_label() as f64 - a.oracle_label as f64).abs();
                    nt += 1;
                }
            }
        }
        let entry = ShiftEntry {
            policy: set.name.clone(),
            grasp_supervisor: mean(gs, heldout.len()),
            grasp_robot: mean(gr, ng),
            transition_supervisor: mean(ts, heldout.len()),
            transition_robot: mean(tr, nt),
            heldout: heldout.len(),
            robot_grasps: ng,
            robot_transitions: nt,
        };
        log::info!(
            "{}: transition loss supervisor {:.3} robot {:.3}; grasp {:.1} / {:.1} px",
            entry.policy,
            entry.transition_supervisor,
            entry.transition_robot,
            entry.grasp_supervisor,
            entry.grasp_robot
        );
        policies.push(entry);
    }
    Ok(CovariateShiftReport {
        rollouts: n_rollouts,
        policies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{collect_demonstrations, CollectMode};

    #[test]
    fn mean_and_sample_stdev() {
        assert_eq!(mean_stdev(&[]), (0.0, 0.0));
        assert_eq!(mean_stdev(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_stdev(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn reports_are_bounded_and_matched() {
        let cfg = ExperimentConfig::default();
        let sets = [PolicySet::oracle(), PolicySet::heuristic()];
        let r = evaluate_policies(&sets, 3, Distribution::Test, &cfg).unwrap();
        assert_eq!(r.policies.len(), 2);
        for p in &r.policies {
            assert!((0.0..=1.0).contains(&p.mean));
            assert!(p.episodes.iter().all(|e| (0.0..=1.0).contains(&e.coverage)));
        }
        // matched seeds: both sets start from identical states
        let a: Vec<f64> = r.policies[0].episodes.iter().map(|e| e.initial_coverage).collect();
        let b: Vec<f64> = r.policies[1].episodes.iter().map(|e| e.initial_coverage).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let mut cfg = ExperimentConfig::default();
        let set = PolicySet::heuristic();
        let par = run_episodes(&set, 3, Distribution::Train, Stream::Eval, &cfg).unwrap();
        cfg.eval.parallel = false;
        let ser = run_episodes(&set, 3, Distribution::Train, Stream::Eval, &cfg).unwrap();
        assert_eq!(par, ser);
    }

    #[test]
    fn oracle_has_no_shift() {
        let cfg = ExperimentConfig::default();
        let held = collect_demonstrations(CollectMode::Bc, 4, None, &cfg, Stream::Heldout).unwrap();
        let r = covariate_shift_eval(&[PolicySet::oracle()], &held.records, 2, &cfg).unwrap();
        let e = &r.policies[0];
        assert_eq!(e.grasp_supervisor, 0.0);
        assert_eq!(e.grasp_robot, 0.0);
        assert_eq!(e.transition_supervisor, 0.0);
        assert_eq!(e.transition_robot, 0.0);
        assert!(e.robot_grasps > 0 && e.robot_transitions > 0);
    }
}
