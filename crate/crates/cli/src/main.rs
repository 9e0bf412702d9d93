mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geoplan_core::crossview::Denominator;
use geoplan_core::policy::Sampling;

use crate::config::{set, ExperimentConfig};

#[derive(Parser)]
#[command(name = "geoplan", version, about = "Canvas graphs, cross-view localization and geo-consistent planning")]
struct Cli {
    /// Root seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker cap for parallel evaluation.
    #[arg(long, global = true, env = "GEOPLAN_THREADS")]
    threads: Option<usize>,
    /// Experiment config JSON; flags override its values.
    #[arg(long, global = true, visible_alias = "cfg")]
    config: Option<PathBuf>,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Raster canvas to topological graph JSON.
    Extract(ExtractArgs),
    /// Train the cross-view encoders on synthetic paired views.
    TrainAlign(TrainAlignArgs),
    /// Generate a grid world and optionally an episode file.
    GenWorld(GenWorldArgs),
    /// VPFT initialization followed by GRPO.
    TrainPlan(TrainPlanArgs),
    /// Curvature-weighted A* on a graph file.
    Plan(PlanArgs),
    /// Localize, plan and execute one episode.
    Episode(EpisodeArgs),
    /// Retrieval and trajectory metrics.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub raster: PathBuf,
    /// Prototype set JSON; built from procedural templates when absent.
    #[arg(long)]
    pub protos: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Args)]
pub struct TrainAlignArgs {
    /// Directory receiving the checkpoint, index and metrics.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_parser = parse_denominator)]
    pub denominator: Option<Denominator>,
}

#[derive(Args)]
pub struct GenWorldArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    /// Also write this many episodes per stop count.
    #[arg(long)]
    pub episodes: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Largest stop count; episodes with 0..=stops stops are written.
    #[arg(long, default_value_t = 3)]
    pub stops: usize,
}

#[derive(Args)]
pub struct TrainPlanArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub episodes: PathBuf,
    /// Policy checkpoint; the shape sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-update telemetry CSV.
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    /// Reward trace CSV of the first updates.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Training summary JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub updates: Option<usize>,
    #[arg(long)]
    pub vpft_steps: Option<usize>,
    #[arg(long)]
    pub beta_geo: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Held-out episodes per stop count for the summary (0 skips).
    #[arg(long, default_value_t = 0)]
    pub eval_episodes: usize,
}

#[derive(Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub start: usize,
    #[arg(long)]
    pub goal: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub interval: Option<f64>,
    /// Comma-separated edge ids closed for this query.
    #[arg(long, value_delimiter = ',')]
    pub disable_edges: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EpisodeArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// Policy checkpoint, or `oracle` for shortest-path moves.
    #[arg(long)]
    pub policy: String,
    /// Episode file (a JSON array of specs).
    #[arg(long)]
    pub episode: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, value_parser = parse_sampling, default_value = "greedy")]
    pub sampling: Sampling,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

fn parse_denominator(s: &str) -> Result<Denominator, String> {
    match s {
        "cross-modal" => Ok(Denominator::CrossModal),
        "satellite-only" => Ok(Denominator::SatelliteOnly),
        _ => Err(format!("expected cross-modal or satellite-only, got `{s}`")),
    }
}

fn parse_sampling(s: &str) -> Result<Sampling, String> {
    match s {
        "greedy" => Ok(Sampling::Greedy),
        "stochastic" => Ok(Sampling::Stochastic),
        _ => Err(format!("expected greedy or stochastic, got `{s}`")),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.output_dir.is_some() {
        cfg.output_dir = cli.output_dir.clone();
    }
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    match cli.command {
        Command::Extract(a) => {
            set(&mut cfg.canvas.patch_size, a.patch_size);
            set(&mut cfg.canvas.dim, a.dim);
            commands::extract(&cfg, &a)
        }
        Command::TrainAlign(a) => {
            set(&mut cfg.align.model.steps, a.steps);
            set(&mut cfg.align.views.pairs, a.pairs);
            set(&mut cfg.align.model.learning_rate, a.learning_rate);
            set(&mut cfg.align.model.denominator, a.denominator);
            commands::train_align(&cfg, &a)
        }
        Command::GenWorld(a) => {
            set(&mut cfg.plan.world_size, a.size);
            set(&mut cfg.plan.block_density, a.density);
            commands::gen_world(&cfg, &a)
        }
        Command::TrainPlan(a) => {
            set(&mut cfg.plan.grpo.updates, a.updates);
            set(&mut cfg.plan.vpft.steps, a.vpft_steps);
            set(&mut cfg.plan.grpo.beta_geo, a.beta_geo);
            set(&mut cfg.plan.grpo.learning_rate, a.learning_rate);
            commands::train_plan(&cfg, &a, threads)
        }
        Command::Plan(a) => {
            set(&mut cfg.planner.alpha, a.alpha);
            set(&mut cfg.planner.beta, a.beta);
            set(&mut cfg.planner.interval, a.interval);
            commands::plan(&cfg, &a)
        }
        Command::Episode(a) => commands::episode(&cfg, &a),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their cause in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
