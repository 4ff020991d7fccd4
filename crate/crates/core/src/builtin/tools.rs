//! Action tools for the built-in arenas.

use std::collections::BTreeMap;

use crate::arena::{primitive_f32, ActionTool, Arena, Dynamics};
use crate::builtin::line_walker::LineWalker;
use crate::builtin::tile_world::{MoveOutcome, TileWorld};
use crate::error::{Error, Result};
use crate::space::ActionSpace;
use crate::types::Action;
use crate::value::{Tensor, Tree};

pub const PICK_PLACE_KEY: &str = "norm-pixel-pick-and-place";
pub const VELOCITY_KEY: &str = "velocity";

/// Normalized pixel coordinates `[x, y]` for each picker.
#[derive(Clone, Debug, PartialEq)]
pub struct PickPlaceAction {
    pub pick: Vec<[f32; 2]>,
    pub place: Vec<[f32; 2]>,
}

impl PickPlaceAction {
    pub fn single(pick: [f32; 2], place: [f32; 2]) -> Self {
        PickPlaceAction { pick: vec![pick], place: vec![place] }
    }

    pub fn pickers(&self) -> usize {
        self.pick.len()
    }

    /// Rows `pick_0, place_0, pick_1, place_1, ...` as f32 `(2k, 2)`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pick.iter().zip(&self.place).flat_map(|(p, q)| [p[0], p[1], q[0], q[1]]).collect();
        Tensor::from_f32(vec![2 * self.pickers(), 2], data).expect("paired rows")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (Some(data), [rows, 2]) = (t.as_f32(), t.shape()) else {
            return Err(Error::ActionRejected(format!("pick-place wants f32 (2k, 2), got {:?}", t.shape())));
        };
        if rows % 2 != 0 {
            return Err(Error::ActionRejected("pick-place rows come in pick/place pairs".into()));
        }
        let row = |r: usize| [data[2 * r], data[2 * r + 1]];
        Ok(PickPlaceAction {
            pick: (0..rows / 2).map(|i| row(2 * i)).collect(),
            place: (0..rows / 2).map(|i| row(2 * i + 1)).collect(),
        })
    }

    pub fn to_action(&self) -> Action {
        Action::single(PICK_PLACE_KEY, self.to_tensor()).expect("finite coordinates")
    }

    pub fn from_action(action: &Action) -> Result<Self> {
        let t = action
            .get(PICK_PLACE_KEY)
            .ok_or_else(|| Error::ActionRejected(format!("missing primitive `{PICK_PLACE_KEY}`")))?;
        Self::from_tensor(t)
    }
}

/// Maps a normalized coordinate onto one of `size` cells.
pub fn to_cell(u: f32, size: usize) -> usize {
    ((u.max(0.0) * size as f32).floor() as usize).min(size - 1)
}

/// The centre of `cell` in normalized coordinates.
pub fn cell_centre(cell: usize, size: usize) -> [f32; 2] {
    let (row, col) = (cell / size, cell % size);
    [(col as f32 + 0.5) / size as f32, (row as f32 + 0.5) / size as f32]
}

#[derive(Debug)]
pub struct PickPlaceTool {
    pickers: usize,
    space: ActionSpace,
}

impl PickPlaceTool {
    pub fn new(pickers: usize) -> Result<Self> {
        if pickers == 0 {
            return Err(Error::Config("pick-place needs at least one picker".into()));
        }
        let space = ActionSpace::composite([(
            PICK_PLACE_KEY.to_string(),
            ActionSpace::uniform_box(vec![2 * pickers, 2], 0.0, 1.0)?,
        )])?;
        Ok(PickPlaceTool { pickers, space })
    }

    pub fn pickers(&self) -> usize {
        self.pickers
    }
}

fn tile_world(arena: &mut Arena) -> Result<&mut TileWorld> {
    arena
        .dynamics_mut()
        .as_any_mut()
        .downcast_mut::<TileWorld>()
        .ok_or_else(|| Error::Capability("pick-place needs a tile grid".into()))
}

impl ActionTool for PickPlaceTool {
    fn name(&self) -> &str {
        "pixel-pick-and-place"
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn supports(&self, dynamics: &dyn Dynamics) -> bool {
        dynamics.as_any().is::<TileWorld>()
    }

    fn no_op(&self) -> Result<Action> {
        let corner = [0.0, 0.0];
        Ok(PickPlaceAction { pick: vec![corner; self.pickers], place: vec![corner; self.pickers] }.to_action())
    }

    fn reset(&self, arena: &mut Arena) -> Result<Tree> {
        tile_world(arena)?;
        Ok(Tree::new())
    }

    fn step(&self, arena: &mut Arena, action: &Action) -> Result<Tree> {
        let act = PickPlaceAction::from_action(action)?;
        if act.pickers() != self.pickers {
            return Err(Error::ActionRejected(format!("expected {} pickers, got {}", self.pickers, act.pickers())));
        }
        let world = tile_world(arena)?;
        let size = world.size();
        let mut missed = false;
        for (p, q) in act.pick.iter().zip(&act.place) {
            let pick = to_cell(p[1], size) * size + to_cell(p[0], size);
            let place = to_cell(q[1], size) * size + to_cell(q[0], size);
            missed |= world.grid_mut().apply(pick, place) == MoveOutcome::Miss;
        }
        Ok(Tree::new().with("no_pick", missed))
    }
}

#[derive(Debug)]
pub struct VelocityTool {
    space: ActionSpace,
}

impl Default for VelocityTool {
    fn default() -> Self {
        let space = ActionSpace::composite([(
            VELOCITY_KEY.to_string(),
            ActionSpace::uniform_box(vec![1], -1.0, 1.0).expect("valid bounds"),
        )])
        .expect("non-empty");
        VelocityTool { space }
    }
}

impl VelocityTool {
    pub fn action(v: f32) -> Result<Action> {
        Action::new(BTreeMap::from([(VELOCITY_KEY.to_string(), Tensor::vector_f32(&[v]))]))
    }
}

impl ActionTool for VelocityTool {
    fn name(&self) -> &str {
        VELOCITY_KEY
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn supports(&self, dynamics: &dyn Dynamics) -> bool {
        dynamics.as_any().is::<LineWalker>()
    }

    fn no_op(&self) -> Result<Action> {
        VelocityTool::action(0.0)
    }

    fn reset(&self, _arena: &mut Arena) -> Result<Tree> {
        Ok(Tree::new())
    }

    fn step(&self, arena: &mut Arena, action: &Action) -> Result<Tree> {
        let v = primitive_f32(action, VELOCITY_KEY)?[0] as f64;
        arena
            .dynamics_mut()
            .as_any_mut()
            .downcast_mut::<LineWalker>()
            .ok_or_else(|| Error::Capability("velocity control needs a line walker".into()))?
            .advance(v);
        Ok(Tree::new())
    }
}
