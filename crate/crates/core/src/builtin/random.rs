use std::collections::BTreeMap;

use crate::agent::{Agent, AgentCore};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::space::ActionSpace;
use crate::types::{keys, Action, ArenaId, Information};
use crate::value::{Tree, Value};

/// Samples uniformly from each arena's action space.
///
/// The space is read from the reset information. Each trial draws from its own
/// generator seeded by `(seed, arena_id, eid)`, so batching never changes what
/// an arena sees.
#[derive(Debug)]
pub struct RandomAgent {
    core: AgentCore,
    seed: u64,
    spaces: BTreeMap<ArenaId, (ActionSpace, Rng)>,
}

/// Primitive name used when the action space is not a composite.
pub const BARE_KEY: &str = "action";

impl RandomAgent {
    pub fn new(config: Tree) -> Result<Self> {
        let seed = match config.get("seed") {
            None => 0,
            Some(v) => v.as_scalar().filter(|s| *s >= 0.0).ok_or_else(|| Error::Config("seed must be a non-negative number".into()))? as u64,
        };
        Ok(RandomAgent { core: AgentCore::new("random", config), seed, spaces: BTreeMap::new() })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Agent for RandomAgent {
    fn core(&self) -> &AgentCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut AgentCore {
        &mut self.core
    }

    fn reset(&mut self, arena_ids: &[ArenaId]) -> Result<Vec<bool>> {
        self.spaces.clear();
        self.core.reset_states(arena_ids)
    }

    fn init(&mut self, informations: &[Information]) -> Result<Vec<bool>> {
        let ids = self.core.tracked_ids(informations)?;
        for (info, id) in informations.iter().zip(ids) {
            let descriptor = info
                .tree()
                .get(keys::ACTION_SPACE)
                .ok_or_else(|| Error::Protocol("reset information lacks `action_space`".into()))?;
            let space = ActionSpace::from_value(descriptor)?;
            let eid = info.eid().unwrap_or(0);
            self.spaces.insert(id, (space, rng::seeded(rng::trial_seed(self.seed, id.0, eid))));
        }
        Ok(vec![true; informations.len()])
    }

    fn act(&mut self, informations: &[Information], update: bool) -> Result<Vec<Action>> {
        let ids = self.core.tracked_ids(informations)?;
        let mut actions = Vec::with_capacity(ids.len());
        for id in ids {
            let (space, rng) = self
                .spaces
                .get_mut(&id)
                .ok_or_else(|| Error::Protocol(format!("arena {id} acted on before init")))?;
            let action = match space {
                ActionSpace::Composite(_) => space.sample_action(rng)?,
                _ => Action::from_value(&Value::Tree(Tree::new().with(BARE_KEY, space.sample(rng))))?,
            };
            if update {
                let state = self.core.state_mut(id)?;
                let n = state.get_scalar("actions").unwrap_or(0.0);
                state.insert("actions", n + 1.0);
            }
            actions.push(action);
        }
        Ok(actions)
    }
}
