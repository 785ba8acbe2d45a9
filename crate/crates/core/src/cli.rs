//! Command-line interface.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::batch::run_batch;
use crate::belief_map::FeatureGrid;
use crate::config::Config;
use crate::embedding::{EmbeddingProvider, SyntheticEmbedder};
use crate::error::{Error, Result};
use crate::fusion::{combine, intersect, FusionConfig};
use crate::metrics::{aggregate, EpisodeResult};
use crate::pgm;
use crate::pipeline::{DivNavAgent, PipelineKind};
use crate::query_pipeline::{decompose, Lexicon, RemoteDecomposer};
use crate::remote::EndpointConfig;
use crate::sim::runner::{Providers, TRAJECTORY_HEADER};
use crate::sim::{episode_seed, generate, run_with, Episode, GenConfig, Mode, WorldModel};

/// Environment prefix for the LVLM endpoint used by `decompose --remote`.
pub const LVLM_ENV: &str = "DIVNAV_LVLM";

#[derive(Debug, Parser)]
#[command(name = "divnav", version, about = "Spatially-constrained object search on semantic grid maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Multion,
    Realworld,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Multion => Mode::Multion,
            ModeArg::Realworld => Mode::Realworld,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PipelineArg {
    Divnav,
    Baseline,
}

impl From<PipelineArg> for PipelineKind {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Divnav => PipelineKind::DivNav,
            PipelineArg::Baseline => PipelineKind::Baseline,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its result, maps and trajectory.
    Run {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "divnav")]
        pipeline: PipelineArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every episode matching a glob and aggregate the metrics.
    Batch {
        #[arg(long)]
        episodes: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "divnav")]
        pipeline: PipelineArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the decomposition of an instruction as JSON.
    Decompose {
        #[arg(long)]
        text: String,
        /// Ask the LVLM endpoint from DIVNAV_LVLM_ENDPOINT (falls back to rules).
        #[arg(long)]
        remote: bool,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Write per-query, intersection and combined similarity maps as PGM.
    QueryMap {
        /// Feature grid JSON, as written by `run`.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        queries: Vec<String>,
        #[arg(long, default_value_t = 0.8)]
        alpha: f64,
        /// World whose labels define the embedding vocabulary.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate seeded decoy worlds and their episodes.
    Generate {
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        decoys: usize,
        #[arg(long, value_enum, default_value = "multion")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Runs one episode and writes `result.json`, `meta.json`, `trajectory.csv`,
/// `grid.json` and the final map PGMs into `out`.
pub fn cmd_run(
    episode: &Path,
    cfg: &Config,
    mode: Option<Mode>,
    seed: u64,
    kind: PipelineKind,
    out: &Path,
) -> Result<EpisodeResult> {
    let mut ep = Episode::load(episode)?;
    if let Some(m) = mode {
        ep.mode = m;
    }
    ensure_dir(out)?;
    let started = unix_now();
    let clock = Instant::now();
    let ep_seed = episode_seed(seed, &ep.id);
    let mut providers = Providers::build(cfg, &ep, ep_seed)?;
    let mut agent = DivNavAgent::new(
        cfg.clone(),
        kind,
        ep.world.spec,
        providers.embedder.clone(),
        providers.decomposer.clone(),
    )?;
    let mut trajectory = String::from(TRAJECTORY_HEADER);
    trajectory.push('\n');
    let mut result = run_with(&ep, cfg, &mut agent, providers.validator.as_mut(), ep_seed, &mut |r| {
        trajectory.push_str(&r.csv_line());
        trajectory.push('\n');
    });
    result.pipeline = kind.name().to_string();
    write(&out.join("result.json"), to_json(&result)?)?;
    write(&out.join("trajectory.csv"), trajectory)?;
    write(&out.join("grid.json"), serde_json::to_string(agent.grid())?)?;
    let state = agent.state();
    pgm::write_map(&agent.guidance()?, &out.join("s_comb.pgm"))?;
    pgm::write_mask(&state.observed, &out.join("observed.pgm"))?;
    pgm::write_mask(&state.explored, &out.join("explored.pgm"))?;
    pgm::write_mask(&state.searched, &out.join("searched.pgm"))?;
    let meta = json!({
        "started_unix": started,
        "wall_seconds": clock.elapsed().as_secs_f64(),
        "episode_file": episode,
        "root_seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write(&out.join("meta.json"), to_json(&meta)?)?;
    Ok(result)
}

pub fn cmd_batch(
    pattern: &str,
    jobs: usize,
    cfg: &Config,
    mode: Option<Mode>,
    seed: u64,
    kind: PipelineKind,
    out: &Path,
) -> Result<String> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::Argument(format!("bad glob {pattern:?}: {e}")))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Argument(format!("glob {pattern:?}: {e}")))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Argument(format!("no episodes match {pattern:?}")));
    }
    let mut eps = paths.iter().map(|p| Episode::load(p)).collect::<Result<Vec<_>>>()?;
    if let Some(m) = mode {
        for ep in &mut eps {
            ep.mode = m;
        }
    }
    let results = run_batch(&eps, cfg, kind, seed, jobs.max(1))?;
    let report = aggregate(&results)?;
    ensure_dir(&out.join("episodes"))?;
    for r in &results {
        write(&out.join("episodes").join(format!("{}.json", r.episode_id)), to_json(r)?)?;
    }
    write(&out.join("report.json"), to_json(&report)?)?;
    let table = format!("pipeline: {}\n{}", kind.name(), report.table());
    write(&out.join("report.txt"), &table)?;
    Ok(table)
}

pub fn cmd_decompose(text: &str, remote: bool, lexicon: &Option<PathBuf>) -> Result<String> {
    let lex = match lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    let d = if remote {
        let ep = EndpointConfig::from_env(LVLM_ENV).ok_or_else(|| {
            Error::Argument(format!("--remote needs {LVLM_ENV}_ENDPOINT to be set"))
        })?;
        RemoteDecomposer::new(ep, lex).decompose(text)
    } else {
        decompose(text, &lex)
    };
    to_json(&d)
}

pub fn cmd_query_map(
    grid: &Path,
    queries: &[String],
    alpha: f64,
    world: &Option<PathBuf>,
    cfg: &Config,
    out: &Path,
) -> Result<()> {
    let text = std::fs::read_to_string(grid).map_err(|e| Error::io(grid, e))?;
    let raw: FeatureGrid = serde_json::from_str(&text).map_err(|e| Error::parse(grid, e))?;
    let g = FeatureGrid::from_parts(*raw.spec(), raw.dim(), raw.raw_features().to_vec(), raw.confidences().to_vec())?;
    let vocab = match world {
        Some(p) => WorldModel::load(p)?.vocabulary(),
        None => Default::default(),
    };
    let embedder: Arc<dyn EmbeddingProvider> = Arc::new(SyntheticEmbedder::new(g.dim(), cfg.embedding.seed, &vocab)?);
    let fusion = FusionConfig::new(alpha)?;
    let blurred = g.blur_features(cfg.embedding.blur_radius);
    let observed = g.observed_mask();
    ensure_dir(out)?;
    let mut maps = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        let m = blurred.query(&embedder.embed(q)?)?.masked(&observed);
        pgm::write_map(&m, &out.join(format!("s_{i}.pgm")))?;
        maps.push(m);
    }
    pgm::write_map(&intersect(&maps)?, &out.join("s_int.pgm"))?;
    pgm::write_map(&combine(&maps, fusion)?, &out.join("s_comb.pgm"))?;
    Ok(())
}

pub fn cmd_generate(count: u64, seed: u64, decoys: usize, mode: Mode, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let cfg = GenConfig {
        decoys_per_target: decoys,
        mode,
    };
    for i in 0..count {
        let s = seed + i;
        let (world, ep) = generate(s, &cfg)?;
        let world_name = format!("world_{s:04}.json");
        world.save(&out.join(&world_name))?;
        write(&out.join(format!("episode_{s:04}.json")), to_json(&ep.to_file(&world_name))?)?;
    }
    Ok(())
}

/// Runs the CLI; returns the process exit code (0 ok, 1 usage, 2 runtime).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(s: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            episode,
            config,
            mode,
            seed,
            pipeline,
            out,
        } => {
            let cfg = load_config(&config)?;
            let r = cmd_run(&episode, &cfg, mode.map(Into::into), seed, pipeline.into(), &out)?;
            emit(&to_json(&r)?);
        }
        Command::Batch {
            episodes,
            jobs,
            config,
            mode,
            seed,
            pipeline,
            out,
        } => {
            let cfg = load_config(&config)?;
            emit(&cmd_batch(&episodes, jobs, &cfg, mode.map(Into::into), seed, pipeline.into(), &out)?);
        }
        Command::Decompose { text, remote, lexicon } => emit(&cmd_decompose(&text, remote, &lexicon)?),
        Command::QueryMap {
            grid,
            queries,
            alpha,
            world,
            config,
            out,
        } => {
            let cfg = load_config(&config)?;
            cmd_query_map(&grid, &queries, alpha, &world, &cfg, &out)?;
        }
        Command::Generate {
            count,
            seed,
            decoys,
            mode,
            out,
        } => cmd_generate(count, seed, decoys, mode.into(), &out)?,
    }
    Ok(())
}
