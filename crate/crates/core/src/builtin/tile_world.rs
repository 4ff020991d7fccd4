//! A grid of floor cells to be covered by tiles.
//!
//! A solved grid has every cell covered. An episode starts with `misplaced`
//! holes, and the same number of loose tiles stacked on top of covered cells
//! elsewhere. Moving a loose tile onto a hole covers it. The layout for `eid`
//! is the first `2 * misplaced` cells of a Fisher-Yates permutation drawn from
//! a generator seeded by the eid: the first half become holes, the second
//! half receive a loose tile.

use std::any::Any;

use rand::seq::SliceRandom;

use crate::arena::{Dynamics, EpisodePartition};
use crate::error::{Error, Result};
use crate::rng;
use crate::value::{OracleHandle, Tensor, Tree};

pub const DEFAULT_GRID: usize = 8;
pub const DEFAULT_MISPLACED: usize = 3;
pub const DEFAULT_HORIZON: usize = 3;
pub const DEFAULT_CELL_PX: usize = 8;

const HOLE: [u8; 3] = [30, 30, 38];
const COVERED: [u8; 3] = [210, 205, 190];
const LOOSE: [u8; 3] = [200, 90, 40];

/// The true tile state, also handed to oracle agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    size: usize,
    covered: Vec<bool>,
    loose: Vec<u8>,
}

/// What a single pick-place did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveOutcome {
    /// pick == place.
    Stayed,
    /// Nothing loose at the pick cell.
    Miss,
    Moved,
}

impl TileGrid {
    pub fn solved(size: usize) -> Self {
        TileGrid { size, covered: vec![true; size * size], loose: vec![0; size * size] }
    }

    pub fn layout(size: usize, misplaced: usize, eid: u64) -> Result<Self> {
        let cells = size * size;
        if size == 0 || 2 * misplaced > cells {
            return Err(Error::Config(format!(
                "{misplaced} misplaced tiles do not fit a {size}x{size} grid"
            )));
        }
        let mut order: Vec<usize> = (0..cells).collect();
        order.shuffle(&mut rng::seeded(rng::hash_words(&[0x7469_6c65, eid])));
        let mut grid = TileGrid::solved(size);
        for &c in &order[..misplaced] {
            grid.covered[c] = false;
        }
        for &c in &order[misplaced..2 * misplaced] {
            grid.loose[c] = 1;
        }
        Ok(grid)
    }

    /// Builds a grid from explicit cell states, mostly for tests.
    pub fn from_cells(size: usize, covered: Vec<bool>, loose: Vec<u8>) -> Result<Self> {
        let cells = size * size;
        if covered.len() != cells || loose.len() != cells {
            return Err(Error::Config(format!("a {size}x{size} grid needs {cells} cells")));
        }
        if (0..cells).any(|i| loose[i] > 0 && !covered[i]) {
            return Err(Error::Config("loose tiles rest on covered cells only".into()));
        }
        Ok(TileGrid { size, covered, loose })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.size + col
    }

    pub fn is_covered(&self, cell: usize) -> bool {
        self.covered[cell]
    }

    pub fn loose_at(&self, cell: usize) -> u8 {
        self.loose[cell]
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    pub fn coverage(&self) -> f64 {
        self.covered_count() as f64 / (self.size * self.size) as f64
    }

    /// Row-major list of holes.
    pub fn holes(&self) -> Vec<usize> {
        (0..self.covered.len()).filter(|&i| !self.covered[i]).collect()
    }

    /// Row-major list of cells holding loose tiles, once per tile.
    pub fn loose_cells(&self) -> Vec<usize> {
        (0..self.loose.len()).flat_map(|i| std::iter::repeat_n(i, self.loose[i] as usize)).collect()
    }

    pub fn apply(&mut self, pick: usize, place: usize) -> MoveOutcome {
        if pick == place {
            return MoveOutcome::Stayed;
        }
        if self.loose[pick] == 0 {
            return MoveOutcome::Miss;
        }
        self.loose[pick] -= 1;
        if self.covered[place] {
            self.loose[place] = self.loose[place].saturating_add(1);
        } else {
            self.covered[place] = true;
        }
        MoveOutcome::Moved
    }

    /// The coverage grid as u8 `(G,G)`, one for covered.
    pub fn coverage_mask(&self) -> Tensor {
        Tensor::from_u8(vec![self.size, self.size], self.covered.iter().map(|&c| c as u8).collect())
            .expect("square grid")
    }

    /// Flat-colour rendering, u8 `(G*px, G*px, 3)`.
    pub fn render(&self, cell_px: usize) -> Tensor {
        let side = self.size * cell_px;
        let mut data = vec![0u8; side * side * 3];
        for y in 0..side {
            for x in 0..side {
                let cell = self.index(y / cell_px, x / cell_px);
                let colour = match (self.covered[cell], self.loose[cell]) {
                    (false, _) => HOLE,
                    (true, 0) => COVERED,
                    (true, _) => LOOSE,
                };
                let o = (y * side + x) * 3;
                data[o..o + 3].copy_from_slice(&colour);
            }
        }
        Tensor::from_u8(vec![side, side, 3], data).expect("consistent render size")
    }
}

/// Pairs loose tiles with holes in row-major order; each pair is one move.
pub fn plan_greedy(grid: &TileGrid) -> Vec<(usize, usize)> {
    grid.loose_cells().into_iter().zip(grid.holes()).collect()
}

#[derive(Clone, Debug)]
pub struct TileWorld {
    size: usize,
    misplaced: usize,
    horizon: usize,
    cell_px: usize,
    grid: TileGrid,
}

impl Default for TileWorld {
    fn default() -> Self {
        TileWorld::new(DEFAULT_GRID, DEFAULT_MISPLACED, DEFAULT_HORIZON, DEFAULT_CELL_PX).expect("valid defaults")
    }
}

impl TileWorld {
    pub fn new(size: usize, misplaced: usize, horizon: usize, cell_px: usize) -> Result<Self> {
        if cell_px == 0 {
            return Err(Error::Config("cell_px must be positive".into()));
        }
        let grid = TileGrid::layout(size, misplaced, 0)?;
        Ok(TileWorld { size, misplaced, horizon, cell_px, grid })
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    /// Replaces the state mid-episode.
    pub fn set_grid(&mut self, grid: TileGrid) -> Result<()> {
        if grid.size() != self.size {
            return Err(Error::Config(format!("grid size {} does not match {}", grid.size(), self.size)));
        }
        self.grid = grid;
        Ok(())
    }

    pub fn grid_mut(&mut self) -> &mut TileGrid {
        &mut self.grid
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn misplaced(&self) -> usize {
        self.misplaced
    }
}

impl Dynamics for TileWorld {
    fn name(&self) -> &str {
        "tile-world"
    }

    fn reset(&mut self, eid: u64) -> Result<()> {
        self.grid = TileGrid::layout(self.size, self.misplaced, eid)?;
        Ok(())
    }

    fn observation(&self) -> Tree {
        Tree::new().with("rgb", self.render())
    }

    fn render(&self) -> Tensor {
        self.grid.render(self.cell_px)
    }

    fn action_horizon(&self) -> usize {
        self.horizon
    }

    fn episode_partition(&self) -> Option<EpisodePartition> {
        Some(EpisodePartition::standard())
    }

    fn oracle_state(&self) -> Option<OracleHandle> {
        Some(OracleHandle::new(self.grid.clone()))
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn layouts_are_deterministic_and_counted() {
        let a = TileGrid::layout(8, 3, 0).unwrap();
        assert_eq!(a, TileGrid::layout(8, 3, 0).unwrap());
        assert_ne!(a, TileGrid::layout(8, 3, 1).unwrap());
        assert_eq!(a.covered_count(), 61);
        assert_eq!(a.coverage(), 61.0 / 64.0);
        assert_eq!(a.holes().len(), 3);
        assert_eq!(a.loose_cells().len(), 3);
        assert!(TileGrid::layout(2, 3, 0).is_err());
    }

    #[test]
    fn moves_follow_the_rules() {
        let mut g = TileGrid::layout(8, 1, 4).unwrap();
        let (hole, tile) = (g.holes()[0], g.loose_cells()[0]);
        let before = g.clone();
        assert_eq!(g.apply(tile, tile), MoveOutcome::Stayed);
        let empty = (0..64).find(|&c| c != hole && g.loose_at(c) == 0).unwrap();
        assert_eq!(g.apply(empty, hole), MoveOutcome::Miss);
        assert_eq!(g, before);
        assert_eq!(g.apply(tile, hole), MoveOutcome::Moved);
        assert_eq!(g.covered_count(), before.covered_count() + 1);
        assert_eq!(g.coverage(), 1.0);
    }

    #[test]
    fn moving_onto_a_covered_cell_stacks() {
        let mut g = TileGrid::layout(4, 2, 9).unwrap();
        let tile = g.loose_cells()[0];
        let target = (0..16).find(|&c| g.is_covered(c) && g.loose_at(c) == 0).unwrap();
        let coverage = g.coverage();
        g.apply(tile, target);
        assert_eq!(g.coverage(), coverage);
        assert_eq!(g.loose_at(target), 1);
    }

    #[test]
    fn random_moves_replay_exactly() {
        let mut r = rng::seeded(1);
        let moves: Vec<(usize, usize)> =
            (0..10_000).map(|_| ((r.next_u64() % 64) as usize, (r.next_u64() % 64) as usize)).collect();
        let run = || {
            let mut g = TileGrid::layout(8, 3, 0).unwrap();
            for &(p, q) in &moves {
                g.apply(p, q);
            }
            g
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn greedy_plan_solves_every_layout() {
        for k in 0..=5 {
            for eid in 0..40 {
                let mut g = TileGrid::layout(8, k, eid).unwrap();
                let plan = plan_greedy(&g);
                assert_eq!(plan.len(), k);
                for (p, q) in plan {
                    assert_eq!(g.apply(p, q), MoveOutcome::Moved);
                }
                assert_eq!(g.coverage(), 1.0);
            }
        }
    }

    #[test]
    fn render_marks_cells() {
        let g = TileGrid::layout(8, 3, 2).unwrap();
        let img = g.render(8);
        assert_eq!(img.shape(), &[64, 64, 3]);
        let px = img.as_u8().unwrap();
        let hole = g.holes()[0];
        let (r, c) = (hole / 8, hole % 8);
        let o = ((r * 8 + 3) * 64 + c * 8 + 3) * 3;
        assert_eq!(&px[o..o + 3], &HOLE);
    }
}
