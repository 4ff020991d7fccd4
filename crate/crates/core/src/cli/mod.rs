//! The `arena-kit` command line.
//!
//! Machine-readable results go to stdout as JSON; progress and errors go to
//! stderr. Exit status is 0 on success, 1 on a failed command and 2 on bad
//! arguments.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::agent::Agent;
use crate::arena::Arena;
use crate::error::{Error, Result};
use crate::exec;
use crate::registry::{self, build_agent, build_arena, build_transform, Config};
use crate::runner::{self, EvaluationReport};
use crate::store::{Compression, IoMode, ObsLayout, SchemaEntry, Store, StoreSchema};
use crate::types::{ArenaId, EpisodeConfig, Information, Mode};
use crate::value::Tensor;

#[derive(Debug, Parser)]
#[command(name = "arena-kit", version, about = "Run, train, evaluate and collect data from agents in arenas")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory for logs, checkpoints and reports.
    #[arg(long, global = true)]
    pub log_dir: Option<PathBuf>,

    /// Overrides the agent's `seed` and seeds the arena.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Concurrent arenas (and worker threads).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Pair {
    /// Agent name, e.g. `tabular-q` or `oracle-tile|pick-and-place`.
    #[arg(long)]
    pub agent: String,

    /// Domain string, e.g. `toy|domain:line-walker,task:reach`.
    #[arg(long)]
    pub arena: String,

    /// Config name under the config root, or a path to a YAML file.
    #[arg(long, default_value = "default")]
    pub config: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One trial.
    Run {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        eid: Option<u64>,
        #[arg(long, default_value = "eval")]
        mode: Mode,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Record frames under `<log-dir>/arena/frames`.
        #[arg(long)]
        save_video: bool,
    },
    /// Train with periodic validation and checkpoints, then evaluate.
    Train {
        #[command(flatten)]
        pair: Pair,
    },
    /// Evaluate on every evaluation episode.
    Evaluate {
        #[command(flatten)]
        pair: Pair,
        /// Checkpoint to load from the log directory; the latest by default.
        #[arg(long)]
        checkpoint: Option<u64>,
    },
    /// Roll out trials and append them to a trajectory store.
    Collect {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Observation entry `key:DIMS:dtype[->output]`; repeatable.
        #[arg(long = "obs", required = true)]
        obs: Vec<SchemaEntry>,
        /// Action entry `key:DIMS:dtype[->output]`; repeatable.
        #[arg(long = "act", required = true)]
        act: Vec<SchemaEntry>,
        /// Per-trial goal entry taken from the reset information.
        #[arg(long = "goal")]
        goal: Vec<SchemaEntry>,
        /// `T+1` keeps the terminal observation, `T` drops it.
        #[arg(long, default_value = "T+1", value_parser = parse_layout)]
        obs_layout: ObsLayout,
        #[arg(long, default_value = "deflate", value_parser = parse_compression)]
        compression: Compression,
    },
    /// Print a store's manifest summary after checking its chunks.
    InspectData {
        #[arg(long)]
        path: PathBuf,
    },
    /// Check every chunk of a store.
    ValidateData {
        #[arg(long)]
        path: PathBuf,
    },
}

fn parse_layout(s: &str) -> std::result::Result<ObsLayout, String> {
    match s {
        "T" => Ok(ObsLayout::PerAction),
        "T+1" => Ok(ObsLayout::WithTerminal),
        other => Err(format!("unknown layout `{other}` (T or T+1)")),
    }
}

fn parse_compression(s: &str) -> std::result::Result<Compression, String> {
    match s {
        "none" => Ok(Compression::None),
        "deflate" => Ok(Compression::Deflate),
        other => Err(format!("unknown compression `{other}` (none or deflate)")),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn note(&mut self, msg: impl AsRef<str>) {
        let _ = writeln!(self.err, "{}", msg.as_ref());
    }

    fn workers(&self) -> usize {
        self.cli
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get().min(8)))
            .max(1)
    }

    fn config(&self, pair: &Pair) -> Result<Config> {
        registry::check_agent(&pair.agent)?;
        let looks_like_file = pair.config.ends_with(".yaml") || pair.config.ends_with(".yml");
        let mut config = if looks_like_file {
            Config::load(&pair.config)?
        } else {
            registry::retrieve_config(&pair.agent, &pair.arena, &pair.config)?
        };
        if let Some(seed) = self.cli.seed {
            config.set("seed", seed as f64)?;
        }
        Ok(config)
    }

    fn arena(&self, pair: &Pair) -> Result<Arena> {
        let mut arena = build_arena(&pair.arena)?;
        if let Some(seed) = self.cli.seed {
            arena.set_seed(seed);
        }
        if let Some(dir) = &self.cli.log_dir {
            arena.set_log_dir(dir)?;
        }
        Ok(arena)
    }

    /// `workers` copies of the arena with ids `0..workers`.
    fn arenas(&self, pair: &Pair) -> Result<Vec<Arena>> {
        let base = self.arena(pair)?;
        Ok((0..self.workers() as u64).map(|i| base.fork(ArenaId(i))).collect())
    }

    fn agent(&self, pair: &Pair) -> Result<Box<dyn Agent>> {
        let config = self.config(pair)?;
        let mut agent = build_agent(&pair.agent, &config)?;
        if let Some(dir) = &self.cli.log_dir {
            agent.set_log_dir(dir)?;
        }
        Ok(agent)
    }
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn report_json(report: &EvaluationReport) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(report)?)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut ctx = Ctx { cli, err };
    let workers = ctx.workers();
    match &cli.command {
        Command::Run { pair, eid, mode, max_steps, save_video } => {
            let mut arena = ctx.arena(pair)?;
            let mut agent = ctx.agent(pair)?;
            let cfg = EpisodeConfig { eid: *eid, save_video: *save_video, mode: *mode };
            let r = runner::perform_single(&mut arena, agent.as_mut(), *mode, *max_steps, Some(&cfg))?;
            ctx.note(format!("eid {} finished after {} steps", r.eid, r.steps()));
            emit(out, &json!({ "eid": r.eid, "steps": r.steps(), "metrics": r.metrics() }))
        }
        Command::Train { pair } => {
            if cli.log_dir.is_none() {
                return Err(Error::Usage("train needs --log-dir".into()));
            }
            let mut arenas = ctx.arenas(pair)?;
            let mut agent = ctx.agent(pair)?;
            let report = exec::with_workers(Some(workers), || runner::train_and_evaluate(agent.as_mut(), &mut arenas))?;
            ctx.note(format!("trained to {} update steps", report.checkpoint));
            emit(out, &report_json(&report)?)
        }
        Command::Evaluate { pair, checkpoint } => {
            let mut arenas = ctx.arenas(pair)?;
            let mut agent = ctx.agent(pair)?;
            if let Some(t) = agent.as_trainable() {
                match checkpoint {
                    Some(n) if !t.load_checkpoint(*n, None) => {
                        return Err(Error::Usage(format!("checkpoint {n} could not be loaded")));
                    }
                    Some(_) => {}
                    None => {
                        let n = t.load(None);
                        if n < 0 {
                            ctx.note("no checkpoint found; evaluating the untrained agent");
                        }
                    }
                }
            }
            let report = exec::with_workers(Some(workers), || runner::evaluate(agent.as_mut(), &mut arenas))?;
            emit(out, &report_json(&report)?)
        }
        Command::Collect { pair, out: path, trials, max_steps, obs, act, goal, obs_layout, compression } => {
            let mut schema = StoreSchema::new(obs.clone(), act.clone())
                .with_goals(goal.clone())
                .with_layout(*obs_layout)
                .with_compression(*compression);
            if let Some(seed) = cli.seed {
                schema.split_seed = seed;
            }
            let mut store = Store::open(path, IoMode::Append, Some(&schema))?;
            if store.dropped() > 0 {
                ctx.note(format!("discarded {} incomplete trailing trajectories", store.dropped()));
            }
            let start = store.num_trajectories();
            let mut arena = ctx.arena(pair)?;
            let mut agent = ctx.agent(pair)?;
            let range = arena
                .episode_range(Mode::Train)
                .ok_or_else(|| Error::Capability(format!("arena `{}` has no training episodes", arena.name())))?;
            while store.num_trajectories() < *trials {
                let k = store.num_trajectories() as u64;
                let eid = range.start + k % (range.end - range.start);
                let cfg = EpisodeConfig::eid(eid, Mode::Train);
                let r = runner::perform_single(&mut arena, agent.as_mut(), Mode::Train, *max_steps, Some(&cfg))?;
                let (o, a, g) = trajectory_arrays(&r.information, &r.actions, &schema)?;
                store.add_trajectory(&o, &a, if goal.is_empty() { None } else { Some(&g) })?;
                ctx.note(format!("trajectory {k}: eid {eid}, {} steps", r.steps()));
            }
            emit(
                out,
                &json!({
                    "path": path,
                    "num_trajectories": store.num_trajectories(),
                    "added": store.num_trajectories() - start,
                    "dropped": store.dropped(),
                }),
            )
        }
        Command::InspectData { path } => {
            let store = Store::open(path, IoMode::Read, None)?;
            store.verify()?;
            emit(out, &summary(&store))
        }
        Command::ValidateData { path } => {
            let store = Store::open(path, IoMode::Read, None)?;
            store.verify()?;
            ctx.note(format!("{} trajectories verified", store.num_trajectories()));
            emit(out, &json!({ "valid": true, "num_trajectories": store.num_trajectories() }))
        }
    }
}

fn summary(store: &Store) -> serde_json::Value {
    let m = store.manifest();
    let show = |v: &[SchemaEntry]| v.iter().map(ToString::to_string).collect::<Vec<_>>();
    let splits: BTreeMap<String, Vec<usize>> = [crate::store::Split::Train, crate::store::Split::Val, crate::store::Split::Eval]
        .into_iter()
        .map(|s| (s.to_string(), store.split_indices(s)))
        .collect();
    json!({
        "path": store.path(),
        "format_version": m.format_version,
        "num_trajectories": m.num_trajectories,
        "lengths": m.lengths,
        "obs_layout": m.obs_layout,
        "compression": m.compression,
        "schema": { "obs": show(&m.obs_config), "act": show(&m.act_config), "goal": show(&m.goal_config) },
        "split_ratios": m.split_ratios,
        "splits": splits,
    })
}

/// Fits a tensor to a schema entry: reshape when the element counts agree,
/// nearest-neighbour resize for images, then a dtype cast.
pub fn fit(t: &Tensor, entry: &SchemaEntry) -> Result<Tensor> {
    let want = entry.shape.as_slice();
    let shaped = if t.shape() == want {
        t.clone()
    } else if t.len() == crate::value::element_count(want) {
        t.reshape(want.to_vec())?
    } else if t.shape().len() == want.len()
        && (want.len() == 2 || (want.len() == 3 && t.shape()[2] == want[2]))
    {
        build_transform(&format!("resize({}x{})", want[0], want[1]))?.apply_tensor(t)?
    } else {
        return Err(Error::Schema(format!(
            "`{}`: cannot fit {:?} into {want:?}",
            entry.saved_key,
            t.shape()
        )));
    };
    Ok(shaped.cast(entry.dtype))
}

type Arrays = BTreeMap<String, Vec<Tensor>>;

/// Extracts store arrays from a trial's informations and actions.
pub fn trajectory_arrays(
    information: &[Information],
    actions: &[crate::types::Action],
    schema: &StoreSchema,
) -> Result<(Arrays, Arrays, BTreeMap<String, Tensor>)> {
    let keep = schema.obs_layout.observations(actions.len());
    let mut obs = Arrays::new();
    for e in &schema.obs {
        let list = information[..keep]
            .iter()
            .map(|info| {
                let t = info
                    .observation()
                    .and_then(|o| o.get_tensor(&e.saved_key))
                    .ok_or_else(|| Error::Schema(format!("observation has no tensor `{}`", e.saved_key)))?;
                fit(t, e)
            })
            .collect::<Result<_>>()?;
        obs.insert(e.saved_key.clone(), list);
    }
    let mut act = Arrays::new();
    for e in &schema.act {
        let list = actions
            .iter()
            .map(|a| {
                let t = a.get(&e.saved_key).ok_or_else(|| Error::Schema(format!("action has no primitive `{}`", e.saved_key)))?;
                fit(t, e)
            })
            .collect::<Result<_>>()?;
        act.insert(e.saved_key.clone(), list);
    }
    let mut goals = BTreeMap::new();
    for e in &schema.goal {
        let t = information
            .first()
            .and_then(|i| i.tree().get_tree(crate::types::keys::GOAL))
            .and_then(|g| g.get_tensor(&e.saved_key))
            .ok_or_else(|| Error::Schema(format!("goal has no tensor `{}`", e.saved_key)))?;
        goals.insert(e.saved_key.clone(), fit(t, e)?);
    }
    Ok((obs, act, goals))
}

/// Convenience for tests and embedding: runs the CLI and captures output.
pub fn run_captured<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(args, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}
