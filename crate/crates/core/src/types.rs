//! Identifiers and the two messages of the control loop.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{OracleHandle, Tensor, Tree, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArenaId(pub u64);

impl fmt::Display for ArenaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The agent's view of where it is in a task ("none", "pick", "place", ...).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionPhase(String);

impl ActionPhase {
    pub fn new(phase: impl Into<String>) -> Result<Self> {
        let phase = phase.into();
        if phase.is_empty() {
            return Err(Error::Usage("action phase must be non-empty".into()));
        }
        Ok(ActionPhase(phase))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for ActionPhase {
    fn default() -> Self {
        ActionPhase("none".into())
    }
}

/// Which episode partition an arena samples from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Val,
    Eval,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Val => "val",
            Mode::Eval => "eval",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "val" => Ok(Mode::Val),
            "eval" => Ok(Mode::Eval),
            other => Err(Error::Usage(format!("unknown mode `{other}` (train, val, eval)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub eid: Option<u64>,
    #[serde(default)]
    pub save_video: bool,
    #[serde(default)]
    pub mode: Mode,
}

impl EpisodeConfig {
    pub fn eid(eid: u64, mode: Mode) -> Self {
        EpisodeConfig { eid: Some(eid), save_video: false, mode }
    }
}

/// Well-known keys of an [`Information`] tree.
pub mod keys {
    pub const OBSERVATION: &str = "observation";
    pub const ARENA_ID: &str = "arena_id";
    pub const EID: &str = "eid";
    pub const STEP: &str = "step";
    pub const REWARD: &str = "reward";
    pub const DONE: &str = "done";
    pub const SUCCESS: &str = "success";
    pub const GOAL: &str = "goal";
    pub const EVALUATION: &str = "evaluation";
    pub const ACTION_SPACE: &str = "action_space";
    pub const ACTION_TOOL: &str = "action_tool";
    /// Oracle handle to the arena's true state.
    pub const ARENA: &str = "arena";
}

/// What an arena hands to an agent after reset or step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Information(pub Tree);

impl Information {
    pub fn new(tree: Tree) -> Self {
        Information(tree)
    }

    pub fn tree(&self) -> &Tree {
        &self.0
    }

    pub fn tree_mut(&mut self) -> &mut Tree {
        &mut self.0
    }

    pub fn arena_id(&self) -> Option<ArenaId> {
        self.0.get_scalar(keys::ARENA_ID).map(|x| ArenaId(x as u64))
    }

    pub fn eid(&self) -> Option<u64> {
        self.0.get_scalar(keys::EID).map(|x| x as u64)
    }

    pub fn observation(&self) -> Option<&Tree> {
        self.0.get_tree(keys::OBSERVATION)
    }

    pub fn done(&self) -> bool {
        self.0.get_flag(keys::DONE).unwrap_or(false)
    }

    pub fn success(&self) -> bool {
        self.0.get_flag(keys::SUCCESS).unwrap_or(false)
    }

    pub fn reward(&self) -> Option<&Tree> {
        self.0.get_tree(keys::REWARD)
    }

    /// The reward channel used for returns ("task").
    pub fn task_reward(&self) -> Option<f64> {
        self.reward()?.get_scalar("task")
    }

    pub fn evaluation(&self) -> Option<&Tree> {
        self.0.get_tree(keys::EVALUATION)
    }

    pub fn oracle(&self) -> Option<&OracleHandle> {
        self.0.get(keys::ARENA).and_then(Value::as_handle)
    }
}

/// Map from action-primitive name to a finite tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Action(BTreeMap<String, Tensor>);

impl Action {
    pub fn new(primitives: BTreeMap<String, Tensor>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::ActionRejected("an action needs at least one primitive".into()));
        }
        for (k, t) in &primitives {
            if k.is_empty() {
                return Err(Error::ActionRejected("empty primitive name".into()));
            }
            if !t.is_finite() {
                return Err(Error::ActionRejected(format!("primitive `{k}` has non-finite values")));
            }
        }
        Ok(Action(primitives))
    }

    pub fn single(name: impl Into<String>, tensor: Tensor) -> Result<Self> {
        Action::new(BTreeMap::from([(name.into(), tensor)]))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn primitives(&self) -> &BTreeMap<String, Tensor> {
        &self.0
    }

    pub fn to_value(&self) -> Value {
        Value::Tree(self.0.iter().map(|(k, t)| (k.clone(), Value::Tensor(t.clone()))).collect())
    }

    /// Accepts a tree whose leaves are all tensors.
    pub fn from_value(value: &Value) -> Result<Self> {
        let tree = value
            .as_tree()
            .ok_or_else(|| Error::ActionRejected("an action must be a tree of tensors".into()))?;
        let mut map = BTreeMap::new();
        for (k, v) in tree.iter() {
            let t = v
                .as_tensor()
                .ok_or_else(|| Error::ActionRejected(format!("primitive `{k}` is not a tensor")))?;
            map.insert(k.to_string(), t.clone());
        }
        Action::new(map)
    }
}
