//! Closed-loop execution of agents in arenas.
//!
//! [`perform_parallel`] treats each arena as an actor: every round the
//! coordinator gathers the latest information from the unfinished arenas,
//! calls the agent once on the whole batch, and steps the arenas
//! concurrently. Because agents key all state by arena id and seed per trial,
//! the result equals running [`perform_single`] once per arena.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::arena::Arena;
use crate::error::{Error, Result};
use crate::exec;
use crate::types::{Action, ArenaId, EpisodeConfig, Information, Mode};
use crate::value::Tree;

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    /// Reset information followed by one entry per step.
    pub information: Vec<Information>,
    pub actions: Vec<Action>,
    /// The agent's state for this arena after init and after every act.
    pub internal_states: Vec<Tree>,
    pub evaluation: BTreeMap<String, f64>,
    pub eid: u64,
    pub arena_id: ArenaId,
}

impl TrialResult {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    /// Sum of the "task" reward channel.
    pub fn task_return(&self) -> f64 {
        self.information.iter().skip(1).filter_map(Information::task_reward).sum()
    }

    /// Final evaluation plus "return" and "length".
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = self.evaluation.clone();
        m.insert("return".into(), self.task_return());
        m.insert("length".into(), self.steps() as f64);
        m
    }
}

fn step_budget(arena: &Arena, max_steps: Option<usize>) -> Result<usize> {
    match (max_steps, arena.action_horizon()) {
        (Some(n), _) => Ok(n),
        (None, 0) => Err(Error::Usage(format!("arena `{}` has no action horizon; pass max_steps", arena.name()))),
        (None, h) => Ok(h),
    }
}

fn snapshot(agent: &dyn Agent, id: ArenaId) -> Tree {
    agent.state().get(&id).cloned().unwrap_or_default()
}

/// One trial: reset, init, then act/step until done, terminate or `max_steps`.
pub fn perform_single(
    arena: &mut Arena,
    agent: &mut dyn Agent,
    mode: Mode,
    max_steps: Option<usize>,
    episode_config: Option<&EpisodeConfig>,
) -> Result<TrialResult> {
    arena.set_mode(mode);
    let budget = step_budget(arena, max_steps)?;
    let id = arena.id();
    let first = arena.reset(episode_config)?;
    let eid = first.eid().unwrap_or(0);
    agent.reset(&[id])?;
    agent.init(std::slice::from_ref(&first))?;

    let mut information = vec![first];
    let mut actions = Vec::new();
    let mut internal_states = vec![snapshot(agent, id)];
    loop {
        let last = information.last().expect("reset information");
        if actions.len() >= budget || last.done() || agent.terminate().get(&id).copied().unwrap_or(false) {
            break;
        }
        let action = single_action(agent.act(std::slice::from_ref(last), true)?)?;
        agent.core_mut().log_states(std::slice::from_ref(last))?;
        internal_states.push(snapshot(agent, id));
        let info = arena.step(&action)?;
        actions.push(action);
        information.push(info);
    }
    Ok(TrialResult { evaluation: arena.evaluate()?, information, actions, internal_states, eid, arena_id: id })
}

fn single_action(mut actions: Vec<Action>) -> Result<Action> {
    if actions.len() != 1 {
        return Err(Error::Protocol(format!("agent returned {} actions for one information", actions.len())));
    }
    Ok(actions.remove(0))
}

fn check_ids(arenas: &[Arena]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for a in arenas {
        if !seen.insert(a.id()) {
            return Err(Error::Config(format!("arena id {} is used twice; call setup_actor with unique ids", a.id())));
        }
    }
    Ok(())
}

/// Runs one trial per arena with a shared agent receiving batched informations.
///
/// `episode_configs` pairs with `arenas` by position; an empty slice means
/// "no config" for every arena.
pub fn perform_parallel(
    arenas: &mut [Arena],
    agent: &mut dyn Agent,
    episode_configs: &[EpisodeConfig],
    mode: Mode,
    max_steps: Option<usize>,
) -> Result<Vec<TrialResult>> {
    if arenas.is_empty() {
        return Ok(Vec::new());
    }
    if !episode_configs.is_empty() && episode_configs.len() != arenas.len() {
        return Err(Error::Usage(format!(
            "{} episode configs for {} arenas",
            episode_configs.len(),
            arenas.len()
        )));
    }
    check_ids(arenas)?;
    let budgets = arenas.iter().map(|a| step_budget(a, max_steps)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<ArenaId> = arenas.iter().map(Arena::id).collect();

    let mut jobs: Vec<(&mut Arena, Option<&EpisodeConfig>)> =
        arenas.iter_mut().enumerate().map(|(i, a)| (a, episode_configs.get(i))).collect();
    let firsts = exec::map_mut(&mut jobs, |(arena, cfg)| {
        arena.set_mode(mode);
        arena.reset(*cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    drop(jobs);

    agent.reset(&ids)?;
    agent.init(&firsts)?;
    let n = arenas.len();
    let mut results: Vec<TrialResult> = firsts
        .into_iter()
        .zip(&ids)
        .map(|(info, &id)| TrialResult {
            eid: info.eid().unwrap_or(0),
            information: vec![info],
            actions: Vec::new(),
            internal_states: vec![snapshot(agent, id)],
            evaluation: BTreeMap::new(),
            arena_id: id,
        })
        .collect();

    loop {
        let terminated = agent.terminate();
        let active: Vec<usize> = (0..n)
            .filter(|&i| {
                let r = &results[i];
                r.actions.len() < budgets[i]
                    && !r.information.last().expect("reset information").done()
                    && !terminated.get(&ids[i]).copied().unwrap_or(false)
            })
            .collect();
        if active.is_empty() {
            break;
        }
        let batch: Vec<Information> =
            active.iter().map(|&i| results[i].information.last().expect("reset information").clone()).collect();
        let actions = agent.act(&batch, true)?;
        if actions.len() != batch.len() {
            return Err(Error::Protocol(format!("agent returned {} actions for {} informations", actions.len(), batch.len())));
        }
        agent.core_mut().log_states(&batch)?;
        for &i in &active {
            results[i].internal_states.push(snapshot(agent, ids[i]));
        }

        let mut steps: Vec<(&mut Arena, &Action)> = arenas
            .iter_mut()
            .enumerate()
            .filter(|(i, _)| active.binary_search(i).is_ok())
            .map(|(_, a)| a)
            .zip(&actions)
            .collect();
        let infos = exec::map_mut(&mut steps, |(arena, action)| arena.step(action));
        drop(steps);
        for ((&i, info), action) in active.iter().zip(infos).zip(actions) {
            results[i].information.push(info?);
            results[i].actions.push(action);
        }
    }
    for (r, arena) in results.iter_mut().zip(arenas.iter()) {
        r.evaluation = arena.evaluate()?;
    }
    Ok(results)
}

/// One agent per arena, each pair run independently.
pub fn perform_parallel_multi(
    arenas: &mut [Arena],
    agents: &mut [Box<dyn Agent>],
    episode_configs: &[EpisodeConfig],
    mode: Mode,
    max_steps: Option<usize>,
) -> Result<Vec<TrialResult>> {
    if agents.len() != arenas.len() {
        return Err(Error::Usage(format!("{} agents for {} arenas", agents.len(), arenas.len())));
    }
    if !episode_configs.is_empty() && episode_configs.len() != arenas.len() {
        return Err(Error::Usage(format!("{} episode configs for {} arenas", episode_configs.len(), arenas.len())));
    }
    check_ids(arenas)?;
    let mut jobs: Vec<(&mut Arena, &mut Box<dyn Agent>, Option<&EpisodeConfig>)> = arenas
        .iter_mut()
        .zip(agents.iter_mut())
        .enumerate()
        .map(|(i, (a, g))| (a, g, episode_configs.get(i)))
        .collect();
    exec::map_mut(&mut jobs, |(arena, agent, cfg)| perform_single(arena, agent.as_mut(), mode, max_steps, *cfg))
        .into_iter()
        .collect()
}

/// Thin alias of [`perform_single`] taking the mode from the config.
pub fn run(agent: &mut dyn Agent, arena: &mut Arena, episode_config: &EpisodeConfig) -> Result<TrialResult> {
    perform_single(arena, agent, episode_config.mode, None, Some(episode_config))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub eid: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub checkpoint: u64,
    pub trials: Vec<TrialSummary>,
    pub aggregate: BTreeMap<String, Stat>,
}

impl EvaluationReport {
    pub fn from_trials(checkpoint: u64, results: &[TrialResult]) -> Self {
        let trials: Vec<TrialSummary> =
            results.iter().map(|r| TrialSummary { eid: r.eid, metrics: r.metrics() }).collect();
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for t in &trials {
            for (k, v) in &t.metrics {
                columns.entry(k.clone()).or_default().push(*v);
            }
        }
        let aggregate = columns.into_iter().map(|(k, v)| (k, Stat::of(&v))).collect();
        EvaluationReport { checkpoint, trials, aggregate }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregate.get(metric).map(|s| s.mean)
    }

    pub fn file_name(mode: Mode, checkpoint: u64) -> String {
        format!("{}_{checkpoint}.json", mode.as_str())
    }

    pub fn write(&self, dir: &Path, mode: Mode) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::file_name(mode, self.checkpoint));
        fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Where reports go: the agent's log directory, else the first arena's.
fn report_dir(agent: &dyn Agent, arenas: &[Arena]) -> Option<PathBuf> {
    agent
        .core()
        .logger()
        .root()
        .or_else(|| arenas.first().and_then(|a| a.logger().root()))
        .map(Path::to_path_buf)
}

fn sweep(agent: &mut dyn Agent, arenas: &mut [Arena], mode: Mode) -> Result<EvaluationReport> {
    let Some(first) = arenas.first() else {
        return Err(Error::Usage("evaluation needs at least one arena".into()));
    };
    let configs = match mode {
        Mode::Eval => first.eval_configs(),
        _ => first.val_configs(),
    };
    if configs.is_empty() {
        return Err(Error::Usage(format!("arena `{}` defines no {mode} episodes", first.name())));
    }
    let previous = agent.as_trainable().map(|t| {
        let was = t.is_training();
        t.set_eval();
        was
    });
    let mut results = Vec::with_capacity(configs.len());
    let outcome = (|| {
        for round in configs.chunks(arenas.len()) {
            results.extend(perform_parallel(&mut arenas[..round.len()], agent, round, mode, None)?);
        }
        Ok::<_, Error>(())
    })();
    if let (Some(true), Some(t)) = (previous, agent.as_trainable()) {
        t.set_train();
    }
    outcome?;
    let checkpoint = agent.as_trainable_ref().map_or(0, |t| t.update_steps());
    let report = EvaluationReport::from_trials(checkpoint, &results);
    if let Some(dir) = report_dir(agent, arenas) {
        report.write(&dir, mode)?;
    }
    Ok(report)
}

/// Runs every evaluation episode and writes `eval_<checkpoint>.json`.
///
/// Episodes are spread over `arenas` in rounds; pass several forks of one
/// arena (with distinct ids) to evaluate in parallel.
pub fn evaluate(agent: &mut dyn Agent, arenas: &mut [Arena]) -> Result<EvaluationReport> {
    sweep(agent, arenas, Mode::Eval)
}

/// As [`evaluate`], over the validation episodes.
pub fn validate(agent: &mut dyn Agent, arenas: &mut [Arena]) -> Result<EvaluationReport> {
    sweep(agent, arenas, Mode::Val)
}

fn config_steps(agent: &dyn Agent, key: &str) -> Result<u64> {
    match agent.config().get_scalar(key) {
        Some(v) if v >= 1.0 && v.fract() == 0.0 => Ok(v as u64),
        Some(v) => Err(Error::Config(format!("`{key}` must be a positive integer, got {v}"))),
        None => Err(Error::Config(format!("agent config lacks `{key}`"))),
    }
}

/// Train in blocks of `validation_interval` update steps, validating and
/// checkpointing after each, until `total_update_steps`; then evaluate.
///
/// Resumes from the latest checkpoint in the agent's log directory.
pub fn train_and_evaluate(agent: &mut dyn Agent, arenas: &mut [Arena]) -> Result<EvaluationReport> {
    let name = agent.name().to_string();
    let total = config_steps(agent, "total_update_steps")?;
    let interval = config_steps(agent, "validation_interval")?;
    let Some(trainable) = agent.as_trainable() else {
        return Err(Error::Usage(format!("agent `{name}` is not trainable")));
    };
    trainable.load(None);
    while trainable.update_steps() < total {
        let n = interval.min(total - trainable.update_steps());
        trainable.set_train();
        if !trainable.train(n, Some(arenas))? {
            return Err(Error::Usage(format!("agent `{name}` could not train on these arenas")));
        }
        validate(trainable, arenas)?;
        trainable.save(None)?;
    }
    evaluate(trainable, arenas)
}
