//! The `bedmake` command line: data collection, noise fitting, training,
//! evaluation, reporting and the labelling server.

pub mod server;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bedmake::dart::NoiseModel;
use bedmake::harness::{
    collect_demonstrations, covariate_shift_eval, evaluate_policies_recorded, fit_noise, load_demonstrations,
    run_pipeline, save_demonstrations, save_episodes, train_pair, write_coverage_report, write_json,
    write_run_metadata, CollectMode, CoverageReport, CovariateShiftReport, Distribution, ExperimentConfig,
    PolicySet, Stream, TrainedPair,
};

pub const NOISE_FILE: &str = "noise.json";

#[derive(Debug, Parser)]
#[command(name = "bedmake", version = bedmake::harness::VERSION, about = "Bed-making imitation-learning experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (TOML). Missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect supervisor demonstrations as JSON lines plus images.
    Collect(CollectArgs),
    /// Fit the DART noise covariance on bootstrap demonstrations.
    FitNoise(FitNoiseArgs),
    /// Train grasp and transition heads on demonstrations.
    Train(TrainArgs),
    /// Measure final coverage of one or more policies.
    Eval(EvalArgs),
    /// Compare learner losses on supervisor and robot state distributions.
    Covshift(CovshiftArgs),
    /// Serve the labelling API and, optionally, the UI's static files.
    Serve(ServeArgs),
    /// Aggregate coverage and covariate-shift reports into one table.
    Report(ReportArgs),
    /// Run the scripted experiment end to end.
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Bc,
    Dart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StreamArg {
    Bootstrap,
    Collect,
    Heldout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistArg {
    Train,
    Test,
}

impl From<DistArg> for Distribution {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Train => Distribution::Train,
            DistArg::Test => Distribution::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Attempt records to gather; defaults to the config's main count.
    #[arg(long)]
    pub count: Option<usize>,
    /// Noise model written by `fit-noise`; required for DART.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Random stream the initial states come from.
    #[arg(long, value_enum, default_value = "collect")]
    pub stream: StreamArg,
}

#[derive(Debug, Args)]
pub struct FitNoiseArgs {
    /// Directory holding bootstrap `demos.jsonl`.
    #[arg(long)]
    pub demos: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub demos: PathBuf,
    /// Tag that names the training random streams.
    #[arg(long, default_value = "model")]
    pub tag: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `oracle`, `heuristic` or `NAME=DIR` for heads written by `train`.
    #[arg(long = "policy", required = true)]
    pub policies: Vec<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum, default_value = "train")]
    pub dist: DistArg,
    /// Also write every episode and its images under `rollouts/<policy>`.
    #[arg(long)]
    pub record: bool,
}

#[derive(Debug, Args)]
pub struct CovshiftArgs {
    /// `NAME=DIR` for heads written by `train`.
    #[arg(long = "policy", required = true)]
    pub policies: Vec<String>,
    /// Directory holding held-out supervisor demonstrations.
    #[arg(long)]
    pub heldout: PathBuf,
    #[arg(long)]
    pub rollouts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory of static UI files served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Directory holding `episodes.jsonl` for the rollout inspector.
    #[arg(long)]
    pub rollouts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories; `coverage_*.json` and `covshift.json` are picked up
    /// from each and from its `reports/` subdirectory.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for anything else.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out = cfg.output_dir.clone();
    write_run_metadata(&out, &cfg).with_context(|| format!("writing metadata to {}", out.display()))?;
    match cli.command {
        Command::Collect(a) => collect(&cfg, &out, a),
        Command::FitNoise(a) => {
            let records = load_demonstrations(&a.demos).with_context(|| format!("loading {}", a.demos.display()))?;
            let demos: Vec<_> = records.into_iter().map(|r| r.demo).collect();
            let noise = fit_noise(&demos, &cfg)?;
            write_json(&out.join(NOISE_FILE), &noise)?;
            log::info!("noise covariance {:?}", noise.sigma);
            Ok(())
        }
        Command::Train(a) => {
            let records = load_demonstrations(&a.demos).with_context(|| format!("loading {}", a.demos.display()))?;
            let demos: Vec<_> = records.into_iter().map(|r| r.demo).collect();
            train_pair(&demos, &cfg, &a.tag)?.save(&out)?;
            Ok(())
        }
        Command::Eval(a) => {
            let sets = a.policies.iter().map(|p| parse_policy(p)).collect::<Result<Vec<_>>>()?;
            let dist: Distribution = a.dist.into();
            let trials = a.trials.unwrap_or(cfg.eval.trials);
            let record = a.record.then(|| out.join("rollouts"));
            let report = evaluate_policies_recorded(&sets, trials, dist, &cfg, record.as_deref())?;
            write_coverage_report(&out, &format!("coverage_{dist}"), &report)?;
            for p in &report.policies {
                println!("{}\t{dist}\t{:.4}\t{:.4}", p.policy, p.mean, p.stdev);
            }
            Ok(())
        }
        Command::Covshift(a) => {
            let sets = a
                .policies
                .iter()
                .map(|p| match p.split_once('=') {
                    Some(_) => parse_policy(p),
                    None => bail!("covshift needs trained heads as NAME=DIR, got {p:?}"),
                })
                .collect::<Result<Vec<_>>>()?;
            let heldout = load_demonstrations(&a.heldout).with_context(|| format!("loading {}", a.heldout.display()))?;
            let n = a.rollouts.unwrap_or(cfg.eval.covshift_rollouts);
            let report = covariate_shift_eval(&sets, &heldout, n, &cfg)?;
            write_json(&out.join("covshift.json"), &report)?;
            Ok(())
        }
        Command::Serve(a) => serve(cfg, a),
        Command::Report(a) => report(&out, &a.inputs),
        Command::Pipeline => {
            let o = run_pipeline(&cfg, Some(&out))?;
            for (p, m) in &o.summary.coverage_test {
                println!("{p}\ttest\t{m:.4}");
            }
            Ok(())
        }
    }
}

fn collect(cfg: &ExperimentConfig, out: &Path, a: CollectArgs) -> Result<()> {
    let (mode, noise) = match a.mode {
        ModeArg::Bc => (CollectMode::Bc, None),
        ModeArg::Dart => {
            let Some(path) = a.noise else {
                bail!("DART collection needs a noise model; run `fit-noise` first and pass it with --noise");
            };
            (CollectMode::Dart, Some(load_noise(&path)?))
        }
    };
    let stream = match a.stream {
        StreamArg::Bootstrap => Stream::Bootstrap,
        StreamArg::Collect => Stream::Collect,
        StreamArg::Heldout => Stream::Heldout,
    };
    let count = a.count.unwrap_or(match stream {
        Stream::Bootstrap => cfg.demos.bootstrap,
        Stream::Heldout => cfg.demos.heldout,
        _ => cfg.demos.main,
    });
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let c = collect_demonstrations(mode, count, noise.as_ref(), cfg, stream)?;
    save_demonstrations(out, &c.records)?;
    save_episodes(out, c.episodes.iter().map(|l| (l, None)), false)?;
    println!("{} demonstrations, {} failures", c.records.len(), c.failures());
    Ok(())
}

/// Reads a noise model and refactors its covariance so a hand-edited file
/// cannot carry an inconsistent Cholesky factor.
pub fn load_noise(path: &Path) -> Result<NoiseModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: NoiseModel = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(NoiseModel {
        prior: m.prior,
        ..NoiseModel::new(m.sigma)
    })
}

/// `oracle`, `heuristic`, or `NAME=DIR` naming a trained head pair.
pub fn parse_policy(spec: &str) -> Result<PolicySet> {
    match spec {
        "oracle" => Ok(PolicySet::oracle()),
        "heuristic" => Ok(PolicySet::heuristic()),
        _ => {
            let Some((name, dir)) = spec.split_once('=') else {
                bail!("unknown policy {spec:?}; expected oracle, heuristic or NAME=DIR");
            };
            if name.is_empty() || name == "oracle" || name == "heuristic" {
                bail!("invalid policy name {name:?}");
            }
            let pair = TrainedPair::load(Path::new(dir)).with_context(|| format!("loading heads from {dir}"))?;
            Ok(pair.policy_set(name))
        }
    }
}

fn serve(cfg: ExperimentConfig, a: ServeArgs) -> Result<()> {
    let state = server::AppState::new(cfg, a.rollouts)?;
    let app = server::router(state, a.static_dir.as_deref());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub source: String,
    pub distribution: String,
    pub policy: String,
    pub trials: usize,
    pub mean: f64,
    pub stdev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub source: String,
    pub policy: String,
    pub grasp_gap: f64,
    pub transition_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub coverage: Vec<CoverageRow>,
    pub covariate_shift: Vec<ShiftRow>,
}

fn report_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for d in [dir.to_path_buf(), dir.join("reports")] {
        let Ok(entries) = std::fs::read_dir(&d) else {
            continue;
        };
        for e in entries {
            let p = e?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".json") && (name.starts_with("coverage_") || name == "covshift.json") {
                files.push(p);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Collects every coverage and covariate-shift report under `inputs` into
/// `report.csv` and `summary.json`.
pub fn report(out: &Path, inputs: &[PathBuf]) -> Result<()> {
    let mut summary = ReportSummary {
        coverage: Vec::new(),
        covariate_shift: Vec::new(),
    };
    for dir in inputs {
        let files = report_files(dir)?;
        if files.is_empty() {
            bail!("no reports found in {}", dir.display());
        }
        let source = dir.display().to_string();
        for f in files {
            let text = std::fs::read_to_string(&f)?;
            if f.file_name().is_some_and(|n| n == "covshift.json") {
                let r: CovariateShiftReport =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?;
                summary.covariate_shift.extend(r.policies.iter().map(|p| ShiftRow {
                    source: source.clone(),
                    policy: p.policy.clone(),
                    grasp_gap: p.grasp_gap(),
                    transition_gap: p.transition_gap(),
                }));
            } else {
                let r: CoverageReport =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?;
                summary.coverage.extend(r.policies.iter().map(|p| CoverageRow {
                    source: source.clone(),
                    distribution: r.distribution.to_string(),
                    policy: p.policy.clone(),
                    trials: r.trials,
                    mean: p.mean,
                    stdev: p.stdev,
                }));
            }
        }
    }
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("report.csv"))?;
    for r in &summary.coverage {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&out.join("summary.json"), &summary)?;
    for r in &summary.coverage {
        println!("{}\t{}\t{}\t{:.4}", r.source, r.distribution, r.policy, r.mean);
    }
    Ok(())
}
