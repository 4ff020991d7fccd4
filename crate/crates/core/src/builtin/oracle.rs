use std::collections::BTreeMap;

use crate::agent::{Agent, AgentCore};
use crate::builtin::tile_world::{plan_greedy, TileGrid};
use crate::builtin::tools::{cell_centre, PickPlaceAction, PICK_PLACE_KEY};
use crate::error::{Error, Result};
use crate::space::ActionSpace;
use crate::types::{keys, Action, ActionPhase, ArenaId, Information};
use crate::value::{Tensor, Tree};

/// Plans on the true tile grid at init and replays the plan.
///
/// The plan is a `(moves, 2)` i64 tensor of `(pick_cell, place_cell)` rows
/// stored in the arena's state under "plan", with the next row under "cursor".
#[derive(Debug)]
pub struct OracleTileAgent {
    core: AgentCore,
}

struct Plan {
    moves: Vec<(usize, usize)>,
    cursor: usize,
    size: usize,
    pickers: usize,
}

impl Plan {
    fn exhausted(&self) -> bool {
        self.cursor >= self.moves.len()
    }
}

fn read_plan(state: &Tree) -> Option<Plan> {
    let t = state.get_tensor("plan")?.as_i64()?;
    Some(Plan {
        moves: t.chunks_exact(2).map(|m| (m[0] as usize, m[1] as usize)).collect(),
        cursor: state.get_scalar("cursor")? as usize,
        size: state.get_scalar("grid")? as usize,
        pickers: state.get_scalar("pickers")? as usize,
    })
}

impl OracleTileAgent {
    pub fn new(config: Tree) -> Self {
        OracleTileAgent { core: AgentCore::new("oracle-tile", config) }
    }

    fn plan(&self, id: ArenaId) -> Result<Plan> {
        read_plan(self.core.state(id)?).ok_or_else(|| Error::Protocol(format!("arena {id} has no plan; call init first")))
    }

    fn flags(&self) -> BTreeMap<ArenaId, bool> {
        self.core.map_states(|s| read_plan(s).is_some_and(|p| p.exhausted()))
    }
}

/// The planned moves as pick-place actions, `pickers` moves per action.
fn action_for(plan: &Plan) -> Action {
    let corner = [0.0, 0.0];
    let mut act = PickPlaceAction { pick: vec![corner; plan.pickers], place: vec![corner; plan.pickers] };
    for (i, &(p, q)) in plan.moves[plan.cursor.min(plan.moves.len())..].iter().take(plan.pickers).enumerate() {
        act.pick[i] = cell_centre(p, plan.size);
        act.place[i] = cell_centre(q, plan.size);
    }
    act.to_action()
}

impl Agent for OracleTileAgent {
    fn core(&self) -> &AgentCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut AgentCore {
        &mut self.core
    }

    fn init(&mut self, informations: &[Information]) -> Result<Vec<bool>> {
        let ids = self.core.tracked_ids(informations)?;
        for (info, id) in informations.iter().zip(ids) {
            let grid = info
                .oracle()
                .and_then(|h| h.downcast_ref::<TileGrid>())
                .ok_or_else(|| Error::Capability("the tile oracle needs the arena's tile grid".into()))?;
            let pickers = info
                .tree()
                .get(keys::ACTION_SPACE)
                .map(ActionSpace::from_value)
                .transpose()?
                .and_then(|s| s.child(PICK_PLACE_KEY).and_then(|b| b.box_shape()).map(|sh| sh[0] / 2))
                .ok_or_else(|| Error::Capability(format!("the tile oracle drives `{PICK_PLACE_KEY}` only")))?;
            let moves = plan_greedy(grid);
            let flat: Vec<i64> = moves.iter().flat_map(|&(p, q)| [p as i64, q as i64]).collect();
            let state = self.core.state_mut(id)?;
            state.insert("plan", Tensor::from_i64(vec![moves.len(), 2], flat)?);
            state.insert("cursor", 0.0);
            state.insert("grid", grid.size() as f64);
            state.insert("pickers", pickers as f64);
        }
        Ok(vec![true; informations.len()])
    }

    fn act(&mut self, informations: &[Information], update: bool) -> Result<Vec<Action>> {
        let ids = self.core.tracked_ids(informations)?;
        let mut actions = Vec::with_capacity(ids.len());
        for id in ids {
            let plan = self.plan(id)?;
            actions.push(action_for(&plan));
            if update && !plan.exhausted() {
                let next = (plan.cursor + plan.pickers).min(plan.moves.len());
                self.core.state_mut(id)?.insert("cursor", next as f64);
            }
        }
        Ok(actions)
    }

    fn success(&self) -> BTreeMap<ArenaId, bool> {
        self.flags()
    }

    fn terminate(&self) -> BTreeMap<ArenaId, bool> {
        self.flags()
    }

    fn phase(&self) -> BTreeMap<ArenaId, ActionPhase> {
        self.flags()
            .into_iter()
            .map(|(id, done)| (id, if done { ActionPhase::new("done").expect("non-empty") } else { ActionPhase::default() }))
            .collect()
    }
}
