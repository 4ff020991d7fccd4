//! Tasks for the built-in arenas.

use std::collections::BTreeMap;

use crate::arena::{select_metrics, Arena, Dynamics, Task};
use crate::builtin::line_walker::LineWalker;
use crate::builtin::tile_world::TileWorld;
use crate::error::{Error, Result};
use crate::value::{Tensor, Tree};

/// Cover every cell of a tile world.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatteningTask;

fn tiles(arena: &Arena) -> Result<&TileWorld> {
    arena
        .dynamics()
        .as_any()
        .downcast_ref::<TileWorld>()
        .ok_or_else(|| Error::Capability(format!("flattening is defined on tile worlds, not `{}`", arena.dynamics().name())))
}

impl Task for FlatteningTask {
    fn name(&self) -> &str {
        "flattening"
    }

    fn supports(&self, dynamics: &dyn Dynamics) -> bool {
        dynamics.as_any().is::<TileWorld>()
    }

    fn reset(&self, arena: &Arena) -> Result<Tree> {
        tiles(arena)?;
        Ok(Tree::new())
    }

    fn success(&self, arena: &Arena) -> Result<bool> {
        Ok(tiles(arena)?.grid().coverage() == 1.0)
    }

    fn evaluate(&self, arena: &Arena, metrics: &[&str]) -> Result<BTreeMap<String, f64>> {
        let coverage = tiles(arena)?.grid().coverage();
        let all = BTreeMap::from([
            ("coverage".to_string(), coverage),
            ("success".to_string(), if coverage == 1.0 { 1.0 } else { 0.0 }),
        ]);
        select_metrics(all, metrics)
    }

    fn reward(&self, arena: &Arena) -> Result<BTreeMap<String, f64>> {
        Ok(BTreeMap::from([("task".to_string(), tiles(arena)?.grid().coverage())]))
    }

    fn goal(&self, arena: &Arena) -> Result<Tree> {
        let g = tiles(arena)?.size();
        Ok(Tree::new().with("grid", Tensor::from_u8(vec![g, g], vec![1; g * g])?))
    }
}

/// Bring a line walker to its target.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReachTask;

pub const REACH_TOLERANCE: f64 = 0.25;

fn walker(arena: &Arena) -> Result<&LineWalker> {
    arena
        .dynamics()
        .as_any()
        .downcast_ref::<LineWalker>()
        .ok_or_else(|| Error::Capability(format!("reach is defined on line walkers, not `{}`", arena.dynamics().name())))
}

impl Task for ReachTask {
    fn name(&self) -> &str {
        "reach"
    }

    fn supports(&self, dynamics: &dyn Dynamics) -> bool {
        dynamics.as_any().is::<LineWalker>()
    }

    fn reset(&self, arena: &Arena) -> Result<Tree> {
        walker(arena)?;
        Ok(Tree::new())
    }

    fn success(&self, arena: &Arena) -> Result<bool> {
        let w = walker(arena)?;
        Ok((w.position() - w.target()).abs() < REACH_TOLERANCE)
    }

    fn evaluate(&self, arena: &Arena, metrics: &[&str]) -> Result<BTreeMap<String, f64>> {
        let w = walker(arena)?;
        let d = (w.position() - w.target()).abs();
        let all = BTreeMap::from([
            ("distance".to_string(), d),
            ("success".to_string(), if d < REACH_TOLERANCE { 1.0 } else { 0.0 }),
        ]);
        select_metrics(all, metrics)
    }

    fn reward(&self, arena: &Arena) -> Result<BTreeMap<String, f64>> {
        let w = walker(arena)?;
        Ok(BTreeMap::from([("task".to_string(), -(w.position() - w.target()).abs())]))
    }

    fn goal(&self, arena: &Arena) -> Result<Tree> {
        let w = walker(arena)?;
        Ok(Tree::new().with("target", Tensor::vector_f32(&[w.target() as f32])))
    }
}
