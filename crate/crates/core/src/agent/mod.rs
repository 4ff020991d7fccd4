//! Agent and trainable-agent contracts.
//!
//! An agent keeps one internal-state tree per arena id it was last reset with.
//! Every call is batched: informations from several arenas arrive together,
//! each tagged with its `arena_id`, and outputs line up with the inputs.

pub mod checkpoint;
mod writer;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::arena::Arena;
use crate::error::{Error, Result};
use crate::logging::{Logger, StepRecord};
use crate::types::{Action, ActionPhase, ArenaId, Information};
use crate::value::Tree;

pub use checkpoint::ParamArray;
pub use writer::{read_train_log, ScalarRecord, TrainWriter, TRAIN_LOG};

/// State shared by every agent implementation.
#[derive(Debug)]
pub struct AgentCore {
    name: String,
    config: Tree,
    internal_states: BTreeMap<ArenaId, Tree>,
    logger: Logger,
}

impl AgentCore {
    pub fn new(name: impl Into<String>, config: Tree) -> Self {
        AgentCore { name: name.into(), config, internal_states: BTreeMap::new(), logger: Logger::dummy("agent") }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn config(&self) -> &Tree {
        &self.config
    }

    pub fn logger(&self) -> &Logger {
        &self.logger
    }

    pub fn states(&self) -> &BTreeMap<ArenaId, Tree> {
        &self.internal_states
    }

    /// Replaces all tracked states with empty trees for `ids`.
    pub fn reset_states(&mut self, ids: &[ArenaId]) -> Result<Vec<bool>> {
        if ids.is_empty() {
            return Err(Error::Protocol("reset needs at least one arena id".into()));
        }
        let mut states = BTreeMap::new();
        for &id in ids {
            if states.insert(id, Tree::new()).is_some() {
                return Err(Error::Protocol(format!("arena id {id} passed twice to reset")));
            }
        }
        self.internal_states = states;
        Ok(vec![true; ids.len()])
    }

    pub fn state(&self, id: ArenaId) -> Result<&Tree> {
        self.internal_states
            .get(&id)
            .ok_or_else(|| Error::Protocol(format!("arena id {id} was not reset by this agent")))
    }

    pub fn state_mut(&mut self, id: ArenaId) -> Result<&mut Tree> {
        self.internal_states
            .get_mut(&id)
            .ok_or_else(|| Error::Protocol(format!("arena id {id} was not reset by this agent")))
    }

    /// The arena id of each information, all of which must be tracked.
    pub fn tracked_ids(&self, infos: &[Information]) -> Result<Vec<ArenaId>> {
        infos
            .iter()
            .map(|info| {
                let id = info.arena_id().ok_or_else(|| Error::Protocol("information lacks `arena_id`".into()))?;
                self.state(id)?;
                Ok(id)
            })
            .collect()
    }

    /// Records the current internal state of each information's arena.
    pub fn log_states(&mut self, infos: &[Information]) -> Result<()> {
        if self.logger.is_dummy() {
            return Ok(());
        }
        for info in infos {
            let Some(id) = info.arena_id() else { continue };
            let Some(state) = self.internal_states.get(&id) else { continue };
            let step = info.tree().get_scalar(crate::types::keys::STEP).unwrap_or(0.0) as u64;
            let payload = Tree::new().with("arena_id", id.0 as f64).with("state", state.clone());
            self.logger.log_step(&StepRecord::new(info.eid().unwrap_or(0), step, payload))?;
        }
        Ok(())
    }

    pub fn set_log_dir(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.logger.set_log_dir(path)
    }

    /// Per tracked arena, `f` of its state.
    pub fn map_states<T>(&self, f: impl Fn(&Tree) -> T) -> BTreeMap<ArenaId, T> {
        self.internal_states.iter().map(|(&id, s)| (id, f(s))).collect()
    }
}

pub trait Agent: Send {
    fn core(&self) -> &AgentCore;

    fn core_mut(&mut self) -> &mut AgentCore;

    fn name(&self) -> &str {
        self.core().name()
    }

    fn config(&self) -> &Tree {
        self.core().config()
    }

    /// Forget all prior trials and start tracking exactly `arena_ids`.
    fn reset(&mut self, arena_ids: &[ArenaId]) -> Result<Vec<bool>> {
        self.core_mut().reset_states(arena_ids)
    }

    /// Called once per trial with the reset information.
    fn init(&mut self, informations: &[Information]) -> Result<Vec<bool>> {
        Ok(vec![true; self.core().tracked_ids(informations)?.len()])
    }

    /// One action per information, in order. With `update` the agent also
    /// folds the information into its internal state.
    fn act(&mut self, informations: &[Information], update: bool) -> Result<Vec<Action>>;

    fn update(&mut self, informations: &[Information], actions: &[Action]) -> Result<Vec<bool>> {
        check_arity(informations, actions)?;
        Ok(vec![true; self.core().tracked_ids(informations)?.len()])
    }

    fn success(&self) -> BTreeMap<ArenaId, bool> {
        self.core().map_states(|_| false)
    }

    fn terminate(&self) -> BTreeMap<ArenaId, bool> {
        self.core().map_states(|_| false)
    }

    fn phase(&self) -> BTreeMap<ArenaId, ActionPhase> {
        self.core().map_states(|_| ActionPhase::default())
    }

    fn state(&self) -> &BTreeMap<ArenaId, Tree> {
        self.core().states()
    }

    fn set_log_dir(&mut self, path: &Path) -> Result<()> {
        self.core_mut().set_log_dir(path)?;
        let dir = self.core().logger().dir().map(Path::to_path_buf);
        if let (Some(t), Some(dir)) = (self.as_trainable(), dir) {
            t.train_state_mut().writer.set_dir(dir);
        }
        Ok(())
    }

    fn as_trainable(&mut self) -> Option<&mut dyn TrainableAgent> {
        None
    }

    fn as_trainable_ref(&self) -> Option<&dyn TrainableAgent> {
        None
    }
}

pub fn check_arity(informations: &[Information], actions: &[Action]) -> Result<()> {
    if informations.len() != actions.len() {
        return Err(Error::Usage(format!(
            "{} informations paired with {} actions",
            informations.len(),
            actions.len()
        )));
    }
    Ok(())
}

/// Training bookkeeping owned by a trainable agent.
#[derive(Debug, Default)]
pub struct TrainState {
    pub update_steps: u64,
    pub training: bool,
    pub writer: TrainWriter,
}

impl TrainState {
    pub fn new() -> Self {
        TrainState { update_steps: 0, training: true, writer: TrainWriter::new() }
    }
}

/// An agent with parameters, a training mode and checkpoints keyed by update steps.
pub trait TrainableAgent: Agent {
    fn train_state(&self) -> &TrainState;

    fn train_state_mut(&mut self) -> &mut TrainState;

    fn update_steps(&self) -> u64 {
        self.train_state().update_steps
    }

    fn is_training(&self) -> bool {
        self.train_state().training
    }

    fn set_train(&mut self) {
        self.train_state_mut().training = true;
    }

    fn set_eval(&mut self) {
        self.train_state_mut().training = false;
    }

    fn train_writer(&self) -> &TrainWriter {
        &self.train_state().writer
    }

    /// Performs exactly `update_steps` parameter updates; `Ok(false)` when
    /// the agent cannot train.
    fn train(&mut self, update_steps: u64, _arenas: Option<&mut [Arena]>) -> Result<bool> {
        if update_steps == 0 {
            return Err(Error::Usage("train needs update_steps > 0".into()));
        }
        Ok(false)
    }

    /// Everything a checkpoint must hold to restore the agent exactly.
    fn parameters(&self) -> BTreeMap<String, ParamArray> {
        BTreeMap::new()
    }

    /// Installs checkpointed parameters; must not modify the agent on error.
    fn load_parameters(&mut self, _params: BTreeMap<String, ParamArray>) -> Result<()> {
        Ok(())
    }

    /// `path` or the agent's log directory.
    fn checkpoint_root(&self, path: Option<&Path>) -> Option<PathBuf> {
        path.map(Path::to_path_buf).or_else(|| self.core().logger().dir().map(Path::to_path_buf))
    }

    /// Writes `checkpoint_<update_steps>`; ids must strictly increase.
    fn save(&mut self, path: Option<&Path>) -> Result<bool> {
        let root = self
            .checkpoint_root(path)
            .ok_or_else(|| Error::Usage("save needs a path or a log directory".into()))?;
        let steps = self.update_steps();
        if let Some(&last) = checkpoint::list(&root).last() {
            if steps <= last {
                return Err(Error::Usage(format!(
                    "checkpoint {steps} would not follow existing checkpoint {last}"
                )));
            }
        }
        checkpoint::write(&root, steps, &self.parameters())?;
        Ok(true)
    }

    /// Restores the latest checkpoint and returns its number, or -1.
    fn load(&mut self, path: Option<&Path>) -> i64 {
        let Some(root) = self.checkpoint_root(path) else { return -1 };
        match checkpoint::list(&root).last() {
            Some(&n) if self.load_checkpoint_from(&root, n) => n as i64,
            _ => -1,
        }
    }

    fn load_checkpoint(&mut self, checkpoint: u64, path: Option<&Path>) -> bool {
        match self.checkpoint_root(path) {
            Some(root) => self.load_checkpoint_from(&root, checkpoint),
            None => false,
        }
    }

    #[doc(hidden)]
    fn load_checkpoint_from(&mut self, root: &Path, checkpoint: u64) -> bool {
        let Ok((steps, params)) = checkpoint::read(&checkpoint::checkpoint_dir(root, checkpoint)) else {
            return false;
        };
        if steps != checkpoint || self.load_parameters(params).is_err() {
            return false;
        }
        self.train_state_mut().update_steps = steps;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Tensor;

    /// The bare contracts with no behaviour of their own.
    struct Base {
        core: AgentCore,
        train: TrainState,
    }

    impl Base {
        fn new() -> Self {
            Base { core: AgentCore::new("base", Tree::new()), train: TrainState::new() }
        }
    }

    impl Agent for Base {
        fn core(&self) -> &AgentCore {
            &self.core
        }
        fn core_mut(&mut self) -> &mut AgentCore {
            &mut self.core
        }
        fn act(&mut self, informations: &[Information], _update: bool) -> Result<Vec<Action>> {
            self.core.tracked_ids(informations)?;
            informations.iter().map(|_| Action::single("v", Tensor::vector_f32(&[0.0]))).collect()
        }
        fn as_trainable(&mut self) -> Option<&mut dyn TrainableAgent> {
            Some(self)
        }
    }

    impl TrainableAgent for Base {
        fn train_state(&self) -> &TrainState {
            &self.train
        }
        fn train_state_mut(&mut self) -> &mut TrainState {
            &mut self.train
        }
    }

    fn info(id: u64) -> Information {
        Information(Tree::new().with("arena_id", id as f64))
    }

    #[test]
    fn reset_replaces_tracked_ids() {
        let mut a = Base::new();
        assert_eq!(a.reset(&[ArenaId(0), ArenaId(1)]).unwrap(), vec![true, true]);
        assert_eq!(a.state().keys().copied().collect::<Vec<_>>(), vec![ArenaId(0), ArenaId(1)]);
        a.reset(&[ArenaId(5)]).unwrap();
        assert_eq!(a.state().keys().copied().collect::<Vec<_>>(), vec![ArenaId(5)]);
        assert!(a.reset(&[]).is_err());
        assert!(a.reset(&[ArenaId(2), ArenaId(2)]).is_err());
    }

    #[test]
    fn base_defaults() {
        let mut a = Base::new();
        a.reset(&[ArenaId(0), ArenaId(1)]).unwrap();
        assert_eq!(a.init(&[info(0), info(1)]).unwrap(), vec![true, true]);
        assert!(a.state().values().all(Tree::is_empty));
        assert_eq!(a.success(), BTreeMap::from([(ArenaId(0), false), (ArenaId(1), false)]));
        assert_eq!(a.terminate().len(), 2);
        assert_eq!(a.phase()[&ArenaId(0)].as_str(), "none");
        assert!(matches!(a.init(&[info(9)]), Err(Error::Protocol(_))));
    }

    #[test]
    fn update_checks_arity() {
        let mut a = Base::new();
        a.reset(&[ArenaId(0), ArenaId(1), ArenaId(2)]).unwrap();
        let infos = [info(0), info(1), info(2)];
        let acts = a.act(&infos, false).unwrap();
        assert_eq!(a.update(&infos, &acts).unwrap(), vec![true; 3]);
        assert!(matches!(a.update(&infos[..2], &acts[..1]), Err(Error::Usage(_))));
    }

    #[test]
    fn base_trainable_defaults() {
        let mut a = Base::new();
        assert!(!a.train(10, None).unwrap());
        assert!(a.train(0, None).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(a.load(Some(dir.path())), -1);
        assert!(a.save(None).is_err(), "no log directory yet");
        a.train_state_mut().update_steps = 500;
        assert!(a.save(Some(dir.path())).unwrap());
        assert!(a.save(Some(dir.path())).is_err(), "ids must strictly increase");
        a.train_state_mut().update_steps = 0;
        assert_eq!(a.load(Some(dir.path())), 500);
        assert_eq!(a.update_steps(), 500);
        assert!(!a.load_checkpoint(9999, Some(dir.path())));
    }

    #[test]
    fn log_dir_feeds_the_train_writer() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Base::new();
        a.set_log_dir(dir.path()).unwrap();
        a.train_state_mut().writer.add_scalar("loss", 1.0, 0).unwrap();
        assert!(dir.path().join("agent").join(TRAIN_LOG).is_file());
    }
}
