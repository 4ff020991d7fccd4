//! Tabular Q-learning over a discretized line walker.
//!
//! Positions fall into `buckets` evenly spaced bins across `[-extent, extent]`.
//! Actions are `left`, `stay`, `right`, sent as velocities -1, 0, 1. Greedy
//! ties go to the lowest action index.

use std::collections::BTreeMap;

use rand::{Rng as _, RngCore};

use crate::agent::{check_arity, Agent, AgentCore, ParamArray, TrainState, TrainableAgent};
use crate::arena::Arena;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::types::{Action, ArenaId, EpisodeConfig, Information, Mode};
use crate::value::{Tensor, Tree};

pub const ACTIONS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct QConfig {
    pub alpha: f64,
    pub alpha_decay: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub buckets: usize,
    pub extent: f64,
    pub action_key: String,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            alpha: 0.5,
            alpha_decay: 0.0,
            gamma: 0.95,
            epsilon: 0.1,
            buckets: 41,
            extent: 10.0,
            action_key: "velocity".into(),
            seed: 11,
        }
    }
}

fn number(config: &Tree, key: &str, default: f64) -> Result<f64> {
    match config.get(key) {
        None => Ok(default),
        Some(v) => v.as_scalar().ok_or_else(|| Error::Config(format!("`{key}` must be a number"))),
    }
}

impl QConfig {
    pub fn from_tree(config: &Tree) -> Result<Self> {
        let d = QConfig::default();
        let c = QConfig {
            alpha: number(config, "alpha", d.alpha)?,
            alpha_decay: number(config, "alpha_decay", d.alpha_decay)?,
            gamma: number(config, "gamma", d.gamma)?,
            epsilon: number(config, "epsilon", d.epsilon)?,
            buckets: number(config, "buckets", d.buckets as f64)? as usize,
            extent: number(config, "extent", d.extent)?,
            action_key: config.get_text("action_key").unwrap_or(&d.action_key).to_string(),
            seed: number(config, "seed", d.seed as f64)? as u64,
        };
        if !(0.0..=1.0).contains(&c.alpha) || !(0.0..=1.0).contains(&c.gamma) || !(0.0..=1.0).contains(&c.epsilon) {
            return Err(Error::Config("alpha, gamma and epsilon must lie in [0, 1]".into()));
        }
        if c.alpha_decay < 0.0 || c.buckets < 2 || c.extent.is_nan() || c.extent <= 0.0 {
            return Err(Error::Config("need alpha_decay >= 0, buckets >= 2 and extent > 0".into()));
        }
        Ok(c)
    }

    pub fn bucket(&self, x: f64) -> usize {
        let u = ((x + self.extent) / (2.0 * self.extent)).clamp(0.0, 1.0);
        (u * (self.buckets - 1) as f64).round() as usize
    }
}

/// Velocity sent for action index `a`.
pub fn velocity(a: usize) -> f32 {
    a as f32 - 1.0
}

pub fn greedy(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &q) in row.iter().enumerate() {
        if q > row[best] {
            best = a;
        }
    }
    best
}

#[derive(Debug)]
pub struct QLearner {
    core: AgentCore,
    cfg: QConfig,
    q: Vec<f64>,
    visits: Vec<i64>,
    rng: Rng,
    explore: BTreeMap<ArenaId, Rng>,
    train: TrainState,
}

impl QLearner {
    pub fn new(config: Tree) -> Result<Self> {
        let cfg = QConfig::from_tree(&config)?;
        let n = cfg.buckets * ACTIONS;
        Ok(QLearner {
            rng: rng::seeded(cfg.seed),
            core: AgentCore::new("tabular-q", config),
            q: vec![0.0; n],
            visits: vec![0; n],
            explore: BTreeMap::new(),
            train: TrainState::new(),
            cfg,
        })
    }

    pub fn q_config(&self) -> &QConfig {
        &self.cfg
    }

    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    pub fn q_row(&self, bucket: usize) -> &[f64] {
        &self.q[bucket * ACTIONS..][..ACTIONS]
    }

    pub fn greedy_action(&self, bucket: usize) -> usize {
        greedy(self.q_row(bucket))
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.cfg.buckets).map(|s| self.greedy_action(s)).collect()
    }

    /// One tabular backup toward `r + gamma * max_a' Q(s', a')`.
    pub fn backup(&mut self, s: usize, a: usize, r: f64, next: usize, terminal: bool) -> f64 {
        let i = s * ACTIONS + a;
        let alpha = self.cfg.alpha / (1.0 + self.cfg.alpha_decay * self.visits[i] as f64);
        let bootstrap = if terminal { 0.0 } else { self.q_row(next).iter().copied().fold(f64::NEG_INFINITY, f64::max) };
        let td = r + self.cfg.gamma * bootstrap - self.q[i];
        self.q[i] += alpha * td;
        self.visits[i] += 1;
        self.train.update_steps += 1;
        td
    }

    fn choose(cfg: &QConfig, q: &[f64], s: usize, training: bool, rng: &mut Rng) -> usize {
        if training && cfg.epsilon > 0.0 && rng.random::<f64>() < cfg.epsilon {
            (rng.next_u64() % ACTIONS as u64) as usize
        } else {
            greedy(&q[s * ACTIONS..][..ACTIONS])
        }
    }

    fn position(info: &Information) -> Result<f64> {
        info.observation()
            .and_then(|o| o.get_tensor("position"))
            .and_then(|t| t.get_f64(0))
            .ok_or_else(|| Error::Capability("tabular-q needs a `position` observation".into()))
    }

    fn action(&self, a: usize) -> Result<Action> {
        Action::single(self.cfg.action_key.clone(), Tensor::vector_f32(&[velocity(a)]))
    }

    fn decode(&self, action: &Action) -> Result<usize> {
        let v = action
            .get(&self.cfg.action_key)
            .and_then(|t| t.get_f64(0))
            .ok_or_else(|| Error::ActionRejected(format!("missing primitive `{}`", self.cfg.action_key)))?;
        Ok((v.round().clamp(-1.0, 1.0) + 1.0) as usize)
    }
}

impl Agent for QLearner {
    fn core(&self) -> &AgentCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut AgentCore {
        &mut self.core
    }

    fn reset(&mut self, arena_ids: &[ArenaId]) -> Result<Vec<bool>> {
        self.explore.clear();
        self.core.reset_states(arena_ids)
    }

    fn init(&mut self, informations: &[Information]) -> Result<Vec<bool>> {
        let ids = self.core.tracked_ids(informations)?;
        for (info, id) in informations.iter().zip(ids) {
            let s = self.cfg.bucket(Self::position(info)?);
            let eid = info.eid().unwrap_or(0);
            self.explore.insert(id, rng::seeded(rng::trial_seed(self.cfg.seed, id.0, eid)));
            self.core.state_mut(id)?.insert("bucket", s as f64);
        }
        Ok(vec![true; informations.len()])
    }

    fn act(&mut self, informations: &[Information], update: bool) -> Result<Vec<Action>> {
        let ids = self.core.tracked_ids(informations)?;
        let training = self.train.training;
        let mut actions = Vec::with_capacity(ids.len());
        for (info, id) in informations.iter().zip(ids) {
            let s = self.cfg.bucket(Self::position(info)?);
            let rng = self
                .explore
                .get_mut(&id)
                .ok_or_else(|| Error::Protocol(format!("arena {id} acted on before init")))?;
            let a = Self::choose(&self.cfg, &self.q, s, training, rng);
            if update {
                let state = self.core.state_mut(id)?;
                state.insert("bucket", s as f64);
                state.insert("last_action", a as f64);
            }
            actions.push(self.action(a)?);
        }
        Ok(actions)
    }

    /// Backs up each (previous bucket, action) pair against the new information.
    fn update(&mut self, informations: &[Information], actions: &[Action]) -> Result<Vec<bool>> {
        check_arity(informations, actions)?;
        let ids = self.core.tracked_ids(informations)?;
        for ((info, action), id) in informations.iter().zip(actions).zip(ids) {
            let s = self
                .core
                .state(id)?
                .get_scalar("bucket")
                .ok_or_else(|| Error::Protocol(format!("arena {id} updated before init")))? as usize;
            let a = self.decode(action)?;
            let next = self.cfg.bucket(Self::position(info)?);
            let r = info.task_reward().ok_or_else(|| Error::Protocol("update needs a `task` reward".into()))?;
            self.backup(s, a, r, next, info.success());
            let state = self.core.state_mut(id)?;
            state.insert("bucket", next as f64);
            state.insert("last_action", a as f64);
        }
        Ok(vec![true; informations.len()])
    }

    fn as_trainable(&mut self) -> Option<&mut dyn TrainableAgent> {
        Some(self)
    }

    fn as_trainable_ref(&self) -> Option<&dyn TrainableAgent> {
        Some(self)
    }
}

impl TrainableAgent for QLearner {
    fn train_state(&self) -> &TrainState {
        &self.train
    }

    fn train_state_mut(&mut self) -> &mut TrainState {
        &mut self.train
    }

    /// Runs `update_steps` epsilon-greedy transitions on the first arena,
    /// restarting episodes on training eids drawn from the agent's generator.
    fn train(&mut self, update_steps: u64, arenas: Option<&mut [Arena]>) -> Result<bool> {
        if update_steps == 0 {
            return Err(Error::Usage("train needs update_steps > 0".into()));
        }
        let Some(arena) = arenas.and_then(|a| a.first_mut()) else { return Ok(false) };
        if !self.train.training {
            return Err(Error::Protocol("train called in eval mode".into()));
        }
        arena.set_train();
        let range = arena
            .episode_range(Mode::Train)
            .ok_or_else(|| Error::Capability("tabular-q trains on arenas with episode ids".into()))?;
        let mut done_steps = 0;
        let mut td_sum = 0.0;
        while done_steps < update_steps {
            let eid = range.start + self.rng.next_u64() % (range.end - range.start);
            let mut info = arena.reset(Some(&EpisodeConfig::eid(eid, Mode::Train)))?;
            let mut s = self.cfg.bucket(Self::position(&info)?);
            let mut ret = 0.0;
            loop {
                let a = Self::choose(&self.cfg, &self.q, s, true, &mut self.rng);
                info = arena.step(&self.action(a)?)?;
                let r = info.task_reward().ok_or_else(|| Error::Protocol("training needs a `task` reward".into()))?;
                let next = self.cfg.bucket(Self::position(&info)?);
                td_sum += self.backup(s, a, r, next, info.success()).abs();
                ret += r;
                done_steps += 1;
                s = next;
                if info.done() || done_steps == update_steps {
                    break;
                }
            }
            if info.done() {
                let step = self.train.update_steps;
                self.train.writer.add_scalar("episode_return", ret, step)?;
            }
        }
        let step = self.train.update_steps;
        self.train.writer.add_scalar("mean_abs_td", td_sum / update_steps as f64, step)?;
        Ok(true)
    }

    fn parameters(&self) -> BTreeMap<String, ParamArray> {
        let shape = vec![self.cfg.buckets, ACTIONS];
        BTreeMap::from([
            ("q_table".to_string(), ParamArray::f64(shape.clone(), self.q.clone())),
            ("visits".to_string(), ParamArray::i64(shape, self.visits.clone())),
            ("rng".to_string(), ParamArray::i64(vec![1], vec![rng::state(&self.rng) as i64])),
        ])
    }

    fn load_parameters(&mut self, params: BTreeMap<String, ParamArray>) -> Result<()> {
        let shape = [self.cfg.buckets, ACTIONS];
        let bad = |k: &str| Error::Corrupt(format!("checkpoint parameter `{k}` missing or misshapen"));
        let q = params.get("q_table").filter(|p| p.shape() == shape).and_then(|p| p.as_f64()).ok_or_else(|| bad("q_table"))?;
        let visits =
            params.get("visits").filter(|p| p.shape() == shape).and_then(|p| p.as_i64()).ok_or_else(|| bad("visits"))?;
        let state = params.get("rng").and_then(|p| p.as_i64()).filter(|v| v.len() == 1).ok_or_else(|| bad("rng"))?[0];
        self.q = q.to_vec();
        self.visits = visits.to_vec();
        self.rng = rng::seeded(state as u64);
        Ok(())
    }
}
