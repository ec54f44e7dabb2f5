//! Supervisor-driven data collection, with or without injected noise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EpisodeLog};
use super::{Distribution, EpisodeKey, ExperimentConfig, HarnessError, Stream};
use crate::dart::NoiseModel;
use crate::policies::{Demonstration, GraspPolicy, TransitionPolicy};
use crate::sim::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectMode {
    Bc,
    Dart,
}

impl std::fmt::Display for CollectMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CollectMode::Bc => "bc",
            CollectMode::Dart => "dart",
        })
    }
}

/// A demonstration plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoRecord {
    pub demo: Demonstration,
    pub episode: String,
    pub attempt: usize,
    pub pre_id: String,
    pub post_id: String,
    pub pre_world: Arc<WorldState>,
    pub post_world: Arc<WorldState>,
}

#[derive(Debug, Clone)]
pub struct Collection {
    pub records: Vec<DemoRecord>,
    pub episodes: Vec<EpisodeLog>,
}

impl Collection {
    pub fn demos(&self) -> Vec<Demonstration> {
        self.records.iter().map(|r| r.demo.clone()).collect()
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.demo.transition_label == 0).count()
    }
}

/// Runs supervisor episodes on `stream` until `count` attempt records
/// exist. The label is always the supervisor's pixel; under DART the
/// executed pixel is a draw around it. Episodes run through their retries
/// so noisy failures produce recovery examples. Records past `count` in
/// the last episode are dropped.
pub fn collect_demonstrations(
    mode: CollectMode,
    count: usize,
    noise: Option<&NoiseModel>,
    cfg: &ExperimentConfig,
    stream: Stream,
) -> Result<Collection, HarnessError> {
    let noise = match (mode, noise) {
        (CollectMode::Bc, _) => None,
        (CollectMode::Dart, Some(n)) => Some(n),
        (CollectMode::Dart, None) => return Err(HarnessError::MissingNoiseModel),
    };
    let mut out = Collection {
        records: Vec::with_capacity(count),
        episodes: Vec::new(),
    };
    let mut index = 0u64;
    while out.records.len() < count {
        let key = EpisodeKey { stream, index };
        let ep = run_episode(
            &GraspPolicy::Oracle,
            &TransitionPolicy::Oracle,
            noise,
            cfg,
            key,
            Distribution::Train,
        )?;
        if let Some(err) = &ep.log.aborted {
            log::warn!("{}: supervisor episode aborted ({err}); skipping", ep.log.id);
            index += 1;
            if index as usize > 100 * count.max(1) {
                return Err(HarnessError::Format("supervisor keeps failing".into()));
            }
            continue;
        }
        for (side, a) in ep.log.attempts() {
            if out.records.len() == count {
                break;
            }
            out.records.push(DemoRecord {
                demo: Demonstration {
                    pre_obs: Arc::clone(&ep.images[&a.pre_obs]),
                    grasp_label: a.pixel,
                    executed_pixel: a.executed_pixel,
                    post_obs: Arc::clone(&ep.images[&a.post_obs]),
                    transition_label: a.oracle_label,
                    side,
                },
                episode: ep.log.id.clone(),
                attempt: a.attempt,
                pre_id: a.pre_obs.clone(),
                post_id: a.post_obs.clone(),
                pre_world: Arc::clone(&ep.worlds[&a.pre_obs]),
                post_world: Arc::clone(&ep.worlds[&a.post_obs]),
            });
        }
        out.episodes.push(ep.log);
        index += 1;
    }
    log::info!(
        "collected {} {mode} demonstrations over {} episodes, {} failures",
        out.records.len(),
        out.episodes.len(),
        out.failures()
    );
    Ok(out)
}
