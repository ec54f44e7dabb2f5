//! On-disk formats: demonstrations and episodes as JSON lines with
//! images beside them, coverage reports as CSV plus a JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::collect::DemoRecord;
use super::episode::{Episode, EpisodeLog};
use super::eval::CoverageReport;
use super::{ExperimentConfig, HarnessError, VERSION};
use crate::geometry::Pixel;
use crate::policies::Demonstration;
use crate::render::{load_observation, save_observation, Observation, ObservationMeta};
use crate::sim::{Side, WorldState};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEMOS_FILE: &str = "demos.jsonl";
pub const EPISODES_FILE: &str = "episodes.jsonl";
const IMAGE_DIR: &str = "images";

/// One demonstration per line. Image paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoLine {
    pub schema_version: u32,
    pub index: usize,
    pub episode: String,
    pub attempt: usize,
    pub side: Side,
    pub grasp_label: Pixel,
    pub executed_pixel: Pixel,
    pub transition_label: u8,
    pub pre_id: String,
    pub post_id: String,
    pub pre_obs: ObservationMeta,
    pub post_obs: ObservationMeta,
    pub pre_world: WorldState,
    pub post_world: WorldState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EpisodeLine {
    schema_version: u32,
    #[serde(flatten)]
    log: EpisodeLog,
}

fn image_stem(id: &str) -> String {
    format!("{IMAGE_DIR}/{id}")
}

fn check_schema(v: u32, line: usize) -> Result<(), HarnessError> {
    if v != SCHEMA_VERSION {
        return Err(HarnessError::Format(format!(
            "line {line}: schema_version {v}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// Writes `demos.jsonl` and every referenced image once.
pub fn save_demonstrations(dir: &Path, records: &[DemoRecord]) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut metas: BTreeMap<String, ObservationMeta> = BTreeMap::new();
    let mut out = BufWriter::new(fs::File::create(dir.join(DEMOS_FILE))?);
    for (index, r) in records.iter().enumerate() {
        for (id, obs) in [(&r.pre_id, &r.demo.pre_obs), (&r.post_id, &r.demo.post_obs)] {
            if !metas.contains_key(id) {
                metas.insert(id.clone(), save_observation(dir, &image_stem(id), obs)?);
            }
        }
        let line = DemoLine {
            schema_version: SCHEMA_VERSION,
            index,
            episode: r.episode.clone(),
            attempt: r.attempt,
            side: r.demo.side,
            grasp_label: r.demo.grasp_label,
            executed_pixel: r.demo.executed_pixel,
            transition_label: r.demo.transition_label,
            pre_id: r.pre_id.clone(),
            post_id: r.post_id.clone(),
            pre_obs: metas[&r.pre_id].clone(),
            post_obs: metas[&r.post_id].clone(),
            pre_world: (*r.pre_world).clone(),
            post_world: (*r.post_world).clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_demonstrations(dir: &Path) -> Result<Vec<DemoRecord>, HarnessError> {
    let file = fs::File::open(dir.join(DEMOS_FILE))?;
    let mut cache: BTreeMap<String, Arc<Observation>> = BTreeMap::new();
    let mut load = |id: &str, meta: &ObservationMeta| -> Result<Arc<Observation>, HarnessError> {
        if let Some(o) = cache.get(id) {
            return Ok(o.clone());
        }
        let o = Arc::new(load_observation(dir, meta)?);
        cache.insert(id.to_string(), o.clone());
        Ok(o)
    };
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DemoLine = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Format(format!("{DEMOS_FILE} line {}: {e}", n + 1)))?;
        check_schema(d.schema_version, n + 1)?;
        records.push(DemoRecord {
            demo: Demonstration {
                pre_obs: load(&d.pre_id, &d.pre_obs)?,
                grasp_label: d.grasp_label,
                executed_pixel: d.executed_pixel,
                post_obs: load(&d.post_id, &d.post_obs)?,
                transition_label: d.transition_label,
                side: d.side,
            },
            episode: d.episode,
            attempt: d.attempt,
            pre_id: d.pre_id,
            post_id: d.post_id,
            pre_world: Arc::new(d.pre_world),
            post_world: Arc::new(d.post_world),
        });
    }
    Ok(records)
}

/// Appends episodes to `episodes.jsonl`, optionally with their images.
pub fn save_episodes<'a>(
    dir: &Path,
    episodes: impl IntoIterator<Item = (&'a EpisodeLog, Option<&'a Episode>)>,
    append: bool,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(dir.join(EPISODES_FILE))?;
    let mut out = BufWriter::new(file);
    for (log, full) in episodes {
        if let Some(ep) = full {
            save_episode_images(dir, ep)?;
        }
        serde_json::to_writer(
            &mut out,
            &EpisodeLine {
                schema_version: SCHEMA_VERSION,
                log: log.clone(),
            },
        )?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes every image an episode references under `dir/images`.
pub fn save_episode_images(dir: &Path, episode: &Episode) -> Result<(), HarnessError> {
    for (id, obs) in &episode.images {
        save_observation(dir, &image_stem(id), obs)?;
    }
    Ok(())
}

pub fn load_episodes(dir: &Path) -> Result<Vec<EpisodeLog>, HarnessError> {
    let file = fs::File::open(dir.join(EPISODES_FILE))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: EpisodeLine = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Format(format!("{EPISODES_FILE} line {}: {e}", n + 1)))?;
        check_schema(e.schema_version, n + 1)?;
        out.push(e.log);
    }
    Ok(out)
}

/// Relative path of an episode or demonstration image.
pub fn image_path(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{}.png", image_stem(id)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct CoverageRow<'a> {
    policy: &'a str,
    distribution: String,
    episode: &'a str,
    index: u64,
    initial_coverage: f64,
    coverage: f64,
    attempts_a: usize,
    attempts_b: usize,
    forced: usize,
    aborted: &'a str,
}

/// `<stem>.csv` with one row per episode and `<stem>.json` with the
/// whole report.
pub fn write_coverage_report(dir: &Path, stem: &str, report: &CoverageReport) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    for p in &report.policies {
        for e in &p.episodes {
            w.serialize(CoverageRow {
                policy: &p.policy,
                distribution: report.distribution.to_string(),
                episode: &e.episode,
                index: e.index,
                initial_coverage: e.initial_coverage,
                coverage: e.coverage,
                attempts_a: e.attempts_a,
                attempts_b: e.attempts_b,
                forced: e.forced,
                aborted: e.aborted.as_deref().unwrap_or(""),
            })?;
        }
    }
    w.flush()?;
    write_json(&dir.join(format!("{stem}.json")), report)
}

/// `config.toml` and `VERSION` beside every run's outputs.
pub fn write_run_metadata(dir: &Path, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    fs::write(dir.join("VERSION"), format!("{VERSION}\n"))?;
    Ok(())
}
