//! Arenas: environment dynamics bundled with a task and an action tool.
//!
//! [`Dynamics`] owns the environment state. A [`Task`] (goals, rewards,
//! success, metrics) and an [`ActionTool`] (how agent actions mutate the
//! dynamics) are stateless services handed the arena on every call, so either
//! can be swapped without touching the other.

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::logging::{Logger, StepRecord};
use crate::rng::{self, Rng};
use crate::space::ActionSpace;
use crate::types::{keys, Action, ArenaId, EpisodeConfig, Information, Mode};
use crate::value::{OracleHandle, Tensor, Tree, Value};

/// The environment state an arena wraps.
pub trait Dynamics: Send {
    fn name(&self) -> &str;

    /// Re-initializes the state for episode `eid`, deterministically.
    fn reset(&mut self, eid: u64) -> Result<()>;

    fn observation(&self) -> Tree;

    /// One display frame, u8 `(H,W,3)`.
    fn render(&self) -> Tensor;

    /// Maximum number of actions per episode.
    fn action_horizon(&self) -> usize;

    /// Episode ids per mode; `None` when the dynamics has no fixed episodes.
    fn episode_partition(&self) -> Option<EpisodePartition> {
        None
    }

    /// Snapshot for oracle agents.
    fn oracle_state(&self) -> Option<OracleHandle> {
        None
    }

    fn boxed_clone(&self) -> Box<dyn Dynamics>;

    fn as_any(&self) -> &dyn Any;

    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// Goals, rewards, success and metrics for an arena.
pub trait Task: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Whether the task understands this dynamics' state.
    fn supports(&self, _dynamics: &dyn Dynamics) -> bool {
        true
    }

    fn reset(&self, arena: &Arena) -> Result<Tree>;

    fn success(&self, arena: &Arena) -> Result<bool>;

    /// Requested metrics, or every metric when `metrics` is empty.
    fn evaluate(&self, arena: &Arena, metrics: &[&str]) -> Result<BTreeMap<String, f64>>;

    /// Named reward channels; built-in tasks always provide "task".
    fn reward(&self, arena: &Arena) -> Result<BTreeMap<String, f64>>;

    fn goal(&self, arena: &Arena) -> Result<Tree>;
}

/// Interprets agent actions against the arena's dynamics.
pub trait ActionTool: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn action_space(&self) -> &ActionSpace;

    fn supports(&self, dynamics: &dyn Dynamics) -> bool;

    fn action_horizon(&self) -> usize {
        0
    }

    fn no_op(&self) -> Result<Action> {
        Err(Error::Usage(format!("action tool `{}` defines no no-op", self.name())))
    }

    fn sample_random_action(&self, rng: &mut Rng) -> Result<Action> {
        self.action_space().sample_action(rng)
    }

    fn reset(&self, arena: &mut Arena) -> Result<Tree>;

    fn step(&self, arena: &mut Arena, action: &Action) -> Result<Tree>;
}

/// A task without goals or rewards.
#[derive(Clone, Copy, Debug, Default)]
pub struct DummyTask;

impl Task for DummyTask {
    fn name(&self) -> &str {
        "dummy"
    }

    fn reset(&self, _arena: &Arena) -> Result<Tree> {
        Ok(Tree::new())
    }

    fn success(&self, _arena: &Arena) -> Result<bool> {
        Ok(false)
    }

    fn evaluate(&self, _arena: &Arena, metrics: &[&str]) -> Result<BTreeMap<String, f64>> {
        match metrics.first() {
            Some(m) => Err(Error::UnknownMetric { name: m.to_string(), available: vec![] }),
            None => Ok(BTreeMap::new()),
        }
    }

    fn reward(&self, _arena: &Arena) -> Result<BTreeMap<String, f64>> {
        Ok(BTreeMap::new())
    }

    fn goal(&self, _arena: &Arena) -> Result<Tree> {
        Ok(Tree::new())
    }
}

/// Pick the requested metrics out of a full metric map.
pub fn select_metrics(all: BTreeMap<String, f64>, metrics: &[&str]) -> Result<BTreeMap<String, f64>> {
    if metrics.is_empty() {
        return Ok(all);
    }
    metrics
        .iter()
        .map(|m| match all.get(*m) {
            Some(v) => Ok((m.to_string(), *v)),
            None => Err(Error::UnknownMetric { name: m.to_string(), available: all.keys().cloned().collect() }),
        })
        .collect()
}

/// Disjoint episode-id ranges for the three modes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodePartition {
    pub train: Range<u64>,
    pub eval: Range<u64>,
    pub val: Range<u64>,
}

impl EpisodePartition {
    /// Train `[0,100)`, eval `[100,120)`, val `[120,130)`.
    pub fn standard() -> Self {
        EpisodePartition { train: 0..100, eval: 100..120, val: 120..130 }
    }

    pub fn range(&self, mode: Mode) -> Range<u64> {
        match mode {
            Mode::Train => self.train.clone(),
            Mode::Eval => self.eval.clone(),
            Mode::Val => self.val.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Episode {
    eid: u64,
    steps: usize,
    done: bool,
    save_video: bool,
}

pub struct Arena {
    name: String,
    mode: Mode,
    id: ArenaId,
    disp: bool,
    random_reset: bool,
    logger: Logger,
    task: Arc<dyn Task>,
    tool: Arc<dyn ActionTool>,
    dynamics: Box<dyn Dynamics>,
    frames: Vec<Tensor>,
    episode: Option<Episode>,
    rng: Rng,
}

impl fmt::Debug for Arena {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Arena")
            .field("name", &self.name)
            .field("id", &self.id)
            .field("mode", &self.mode)
            .field("task", &self.task.name())
            .field("tool", &self.tool.name())
            .finish_non_exhaustive()
    }
}

impl Arena {
    pub fn new(
        name: impl Into<String>,
        dynamics: Box<dyn Dynamics>,
        tool: Arc<dyn ActionTool>,
        task: Arc<dyn Task>,
    ) -> Result<Self> {
        if !tool.supports(dynamics.as_ref()) {
            return Err(Error::Capability(format!(
                "action tool `{}` cannot drive `{}`",
                tool.name(),
                dynamics.name()
            )));
        }
        let mut arena = Arena {
            name: name.into(),
            mode: Mode::Train,
            id: ArenaId(0),
            disp: false,
            random_reset: true,
            logger: Logger::dummy("arena"),
            task: Arc::new(DummyTask),
            tool,
            dynamics,
            frames: Vec::new(),
            episode: None,
            rng: rng::seeded(0),
        };
        arena.set_task(task)?;
        Ok(arena)
    }

    /// An independent copy with a fresh episode state and the given id.
    pub fn fork(&self, id: ArenaId) -> Arena {
        Arena {
            name: self.name.clone(),
            mode: self.mode,
            id,
            disp: self.disp,
            random_reset: self.random_reset,
            logger: self.logger.clone(),
            task: Arc::clone(&self.task),
            tool: Arc::clone(&self.tool),
            dynamics: self.dynamics.boxed_clone(),
            frames: Vec::new(),
            episode: None,
            rng: rng::seeded(rng::hash_words(&[self.rng.clone().next_u64(), id.0])),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn set_train(&mut self) {
        self.mode = Mode::Train;
    }

    pub fn set_val(&mut self) {
        self.mode = Mode::Val;
    }

    pub fn set_eval(&mut self) {
        self.mode = Mode::Eval;
    }

    pub fn id(&self) -> ArenaId {
        self.id
    }

    /// Assigns the unique id this arena runs under as a parallel actor.
    pub fn setup_actor(&mut self, id: ArenaId) {
        self.id = id;
    }

    pub fn disp(&self) -> bool {
        self.disp
    }

    pub fn set_disp(&mut self, flag: bool) {
        self.disp = flag;
    }

    pub fn random_reset(&self) -> bool {
        self.random_reset
    }

    pub fn set_random_reset(&mut self, flag: bool) {
        self.random_reset = flag;
    }

    /// Seeds the generator used for random episode selection.
    pub fn set_seed(&mut self, seed: u64) {
        self.rng = rng::seeded(seed);
    }

    pub fn set_log_dir(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.logger.set_log_dir(path)
    }

    pub fn logger(&self) -> &Logger {
        &self.logger
    }

    pub fn task(&self) -> &Arc<dyn Task> {
        &self.task
    }

    pub fn set_task(&mut self, task: Arc<dyn Task>) -> Result<()> {
        if !task.supports(self.dynamics.as_ref()) {
            return Err(Error::Capability(format!(
                "task `{}` cannot evaluate `{}`",
                task.name(),
                self.dynamics.name()
            )));
        }
        self.task = task;
        Ok(())
    }

    pub fn tool(&self) -> &Arc<dyn ActionTool> {
        &self.tool
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn dynamics_mut(&mut self) -> &mut dyn Dynamics {
        self.dynamics.as_mut()
    }

    pub fn action_space(&self) -> &ActionSpace {
        self.tool.action_space()
    }

    pub fn sample_random_action(&mut self) -> Result<Action> {
        let tool = Arc::clone(&self.tool);
        tool.sample_random_action(&mut self.rng)
    }

    pub fn no_op(&self) -> Result<Action> {
        self.tool.no_op()
    }

    pub fn action_horizon(&self) -> usize {
        match self.dynamics.action_horizon() {
            0 => self.tool.action_horizon(),
            h => h,
        }
    }

    pub fn episode_range(&self, mode: Mode) -> Option<Range<u64>> {
        self.dynamics.episode_partition().map(|p| p.range(mode))
    }

    /// Episodes available in the current mode, or -1 when undefined.
    pub fn num_episodes(&self) -> i64 {
        self.episode_range(self.mode).map_or(-1, |r| (r.end - r.start) as i64)
    }

    fn configs(&self, mode: Mode) -> Vec<EpisodeConfig> {
        self.episode_range(mode)
            .map(|r| r.map(|eid| EpisodeConfig::eid(eid, mode)).collect())
            .unwrap_or_default()
    }

    pub fn eval_configs(&self) -> Vec<EpisodeConfig> {
        self.configs(Mode::Eval)
    }

    pub fn val_configs(&self) -> Vec<EpisodeConfig> {
        self.configs(Mode::Val)
    }

    pub fn eid(&self) -> Option<u64> {
        self.episode.as_ref().map(|e| e.eid)
    }

    pub fn steps(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    pub fn frames(&self) -> &[Tensor] {
        &self.frames
    }

    pub fn clear_frames(&mut self) {
        self.frames.clear();
    }

    pub fn goal(&self) -> Result<Tree> {
        self.task.goal(self)
    }

    pub fn success(&self) -> Result<bool> {
        self.task.success(self)
    }

    pub fn evaluate(&self) -> Result<BTreeMap<String, f64>> {
        self.task.evaluate(self, &[])
    }

    fn resolve_eid(&mut self, requested: Option<u64>) -> Result<u64> {
        let range = self.episode_range(self.mode);
        match (requested, range) {
            (Some(eid), Some(r)) if !r.contains(&eid) => Err(Error::Config(format!(
                "eid {eid} outside the {} episodes {}..{}",
                self.mode, r.start, r.end
            ))),
            (Some(eid), _) => Ok(eid),
            (None, Some(r)) if self.random_reset => Ok(r.start + self.rng.next_u64() % (r.end - r.start)),
            (None, Some(r)) => Ok(r.start),
            (None, None) if self.random_reset => Ok(self.rng.next_u64() >> 1),
            (None, None) => Ok(0),
        }
    }

    fn base_information(&self) -> Tree {
        let ep = self.episode.as_ref().expect("episode active");
        let mut info = Tree::new()
            .with(keys::OBSERVATION, self.dynamics.observation())
            .with(keys::ARENA_ID, self.id.0 as f64)
            .with(keys::EID, ep.eid as f64)
            .with(keys::STEP, ep.steps as f64)
            .with(keys::DONE, ep.done);
        if let Some(handle) = self.dynamics.oracle_state() {
            info.insert(keys::ARENA, handle);
        }
        info
    }

    pub fn reset(&mut self, config: Option<&EpisodeConfig>) -> Result<Information> {
        let eid = self.resolve_eid(config.and_then(|c| c.eid))?;
        let save_video = config.is_some_and(|c| c.save_video);
        self.dynamics.reset(eid)?;
        self.episode = Some(Episode { eid, steps: 0, done: false, save_video });
        let task = Arc::clone(&self.task);
        let tool = Arc::clone(&self.tool);
        let task_info = task.reset(self)?;
        let tool_info = tool.reset(self)?;
        self.frames.clear();
        if save_video {
            self.record_frame(0)?;
        }

        let evaluation = task.evaluate(self, &[])?;
        self.logger.log_step(&StepRecord::new(
            eid,
            0,
            Tree::new().with(keys::EVALUATION, Tree::from_scalars(&evaluation)),
        ))?;

        let mut info = self.base_information();
        info.insert(keys::GOAL, task.goal(self)?);
        info.insert(keys::ACTION_SPACE, self.tool.action_space().to_value());
        if !task_info.is_empty() {
            info.insert("task", task_info);
        }
        if !tool_info.is_empty() {
            info.insert(keys::ACTION_TOOL, tool_info);
        }
        Ok(Information(info))
    }

    pub fn step(&mut self, action: &Action) -> Result<Information> {
        let Some(ep) = self.episode.as_ref() else {
            return Err(Error::Protocol("step called before reset".into()));
        };
        if ep.done {
            return Err(Error::Protocol(format!("episode {} already finished", ep.eid)));
        }
        if !self.tool.action_space().contains_action(action) {
            return Err(Error::ActionRejected(format!(
                "action outside the `{}` action space",
                self.tool.name()
            )));
        }
        let tool = Arc::clone(&self.tool);
        let task = Arc::clone(&self.task);
        let tool_info = tool.step(self, action)?;

        let reward = task.reward(self)?;
        let evaluation = task.evaluate(self, &[])?;
        let success = task.success(self)?;
        let horizon = self.action_horizon();
        let ep = self.episode.as_mut().expect("episode active");
        ep.steps += 1;
        ep.done = success || (horizon > 0 && ep.steps >= horizon);
        let (eid, steps, save_video) = (ep.eid, ep.steps, ep.save_video);
        if save_video {
            self.record_frame(steps as u64)?;
        }

        self.logger.log_step(&StepRecord::new(
            eid,
            steps as u64,
            Tree::new()
                .with("action", action.to_value())
                .with(keys::EVALUATION, Tree::from_scalars(&evaluation)),
        ))?;

        let mut info = self.base_information();
        info.insert(keys::REWARD, Tree::from_scalars(&reward));
        info.insert(keys::EVALUATION, Tree::from_scalars(&evaluation));
        info.insert(keys::SUCCESS, success);
        if !tool_info.is_empty() {
            info.insert(keys::ACTION_TOOL, tool_info);
        }
        Ok(Information(info))
    }

    fn record_frame(&mut self, step: u64) -> Result<()> {
        let frame = self.dynamics.render();
        if let Some(eid) = self.eid() {
            self.logger.save_frame(eid, step, &frame)?;
        }
        self.frames.push(frame);
        Ok(())
    }
}

/// Convenience for tests and tools: the value under `key` of an action as f32s.
pub fn primitive_f32<'a>(action: &'a Action, key: &str) -> Result<&'a [f32]> {
    action
        .get(key)
        .and_then(Tensor::as_f32)
        .ok_or_else(|| Error::ActionRejected(format!("missing f32 primitive `{key}`")))
}

impl From<&Arena> for Value {
    fn from(arena: &Arena) -> Self {
        Value::Text(arena.name().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A counter that moves by the action's value; no episodes are defined.
    #[derive(Clone, Debug, Default)]
    struct Counter {
        value: f32,
    }

    impl Dynamics for Counter {
        fn name(&self) -> &str {
            "counter"
        }
        fn reset(&mut self, _eid: u64) -> Result<()> {
            self.value = 0.0;
            Ok(())
        }
        fn observation(&self) -> Tree {
            Tree::new().with("value", Tensor::vector_f32(&[self.value]))
        }
        fn render(&self) -> Tensor {
            Tensor::zeros(crate::value::DType::U8, vec![1, 1, 3])
        }
        fn action_horizon(&self) -> usize {
            2
        }
        fn boxed_clone(&self) -> Box<dyn Dynamics> {
            Box::new(self.clone())
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
        fn as_any_mut(&mut self) -> &mut dyn Any {
            self
        }
    }

    #[derive(Debug)]
    struct Nudge(ActionSpace);

    impl ActionTool for Nudge {
        fn name(&self) -> &str {
            "nudge"
        }
        fn action_space(&self) -> &ActionSpace {
            &self.0
        }
        fn supports(&self, d: &dyn Dynamics) -> bool {
            d.as_any().is::<Counter>()
        }
        fn reset(&self, _arena: &mut Arena) -> Result<Tree> {
            Ok(Tree::new())
        }
        fn step(&self, arena: &mut Arena, action: &Action) -> Result<Tree> {
            let dv = primitive_f32(action, "dv")?[0];
            let c = arena.dynamics_mut().as_any_mut().downcast_mut::<Counter>().unwrap();
            c.value += dv;
            Ok(Tree::new())
        }
    }

    fn counter_arena() -> Arena {
        let space = ActionSpace::composite([("dv".into(), ActionSpace::uniform_box(vec![1], -1.0, 1.0).unwrap())]).unwrap();
        Arena::new("counter", Box::new(Counter::default()), Arc::new(Nudge(space)), Arc::new(DummyTask)).unwrap()
    }

    #[test]
    fn defaults_follow_the_base_contract() {
        let mut arena = counter_arena();
        assert_eq!(arena.num_episodes(), -1);
        assert!(arena.eval_configs().is_empty());
        assert_eq!(arena.mode(), Mode::Train);
        arena.reset(None).unwrap();
        assert!(arena.evaluate().unwrap().is_empty());
        assert!(!arena.success().unwrap());
        assert!(arena.no_op().is_err());
    }

    #[test]
    fn dummy_task_rejects_named_metrics() {
        let mut arena = counter_arena();
        arena.reset(None).unwrap();
        assert!(matches!(
            DummyTask.evaluate(&arena, &["iou"]),
            Err(Error::UnknownMetric { .. })
        ));
    }

    #[test]
    fn protocol_errors() {
        let mut arena = counter_arena();
        let a = Action::single("dv", Tensor::vector_f32(&[0.5])).unwrap();
        assert!(matches!(arena.step(&a), Err(Error::Protocol(_))));
        arena.reset(None).unwrap();
        let out = Action::single("dv", Tensor::vector_f32(&[2.0])).unwrap();
        assert!(matches!(arena.step(&out), Err(Error::ActionRejected(_))));
        arena.step(&a).unwrap();
        let info = arena.step(&a).unwrap();
        assert!(info.done(), "dummy task ends at the horizon");
        assert!(matches!(arena.step(&a), Err(Error::Protocol(_))));
    }

    #[test]
    fn frames_follow_save_video() {
        let mut arena = counter_arena();
        let a = Action::single("dv", Tensor::vector_f32(&[0.1])).unwrap();
        arena.reset(Some(&EpisodeConfig { eid: None, save_video: true, mode: Mode::Train })).unwrap();
        arena.step(&a).unwrap();
        assert_eq!(arena.frames().len(), 2);
        arena.clear_frames();
        assert!(arena.frames().is_empty());
        arena.reset(None).unwrap();
        arena.step(&a).unwrap();
        assert!(arena.frames().is_empty());
    }

    #[test]
    fn metric_selection() {
        let all = BTreeMap::from([("coverage".to_string(), 0.5)]);
        assert_eq!(select_metrics(all.clone(), &["coverage"]).unwrap().len(), 1);
        let err = select_metrics(all, &["iou"]).unwrap_err();
        assert!(err.to_string().contains("coverage"));
    }
}
