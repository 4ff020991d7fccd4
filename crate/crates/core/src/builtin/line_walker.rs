//! A point on a bounded line, driven by a velocity command.

use std::any::Any;

use rand::RngCore;

use crate::arena::{Dynamics, EpisodePartition};
use crate::error::{Error, Result};
use crate::rng;
use crate::value::{DType, Tensor, Tree};

pub const STEP_SIZE: f64 = 0.5;
pub const DEFAULT_EXTENT: f64 = 10.0;
pub const DEFAULT_HORIZON: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct LineWalker {
    extent: f64,
    target: f64,
    horizon: usize,
    x: f64,
}

impl Default for LineWalker {
    fn default() -> Self {
        LineWalker::new(DEFAULT_EXTENT, 0.0, DEFAULT_HORIZON).expect("valid defaults")
    }
}

impl LineWalker {
    pub fn new(extent: f64, target: f64, horizon: usize) -> Result<Self> {
        if extent.is_nan() || extent <= 0.0 || (extent / STEP_SIZE).fract() != 0.0 {
            return Err(Error::Config(format!("extent must be a positive multiple of {STEP_SIZE}, got {extent}")));
        }
        if target.is_nan() || target.abs() > extent {
            return Err(Error::Config(format!("target {target} lies outside [-{extent}, {extent}]")));
        }
        Ok(LineWalker { extent, target, horizon, x: 0.0 })
    }

    pub fn position(&self) -> f64 {
        self.x
    }

    pub fn set_position(&mut self, x: f64) {
        self.x = x.clamp(-self.extent, self.extent);
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Moves by `STEP_SIZE * v`, clamped to the line.
    pub fn advance(&mut self, v: f64) {
        self.set_position(self.x + STEP_SIZE * v);
    }

    /// Start position for `eid`: a random grid point of the line.
    pub fn start_position(&self, eid: u64) -> f64 {
        let points = (2.0 * self.extent / STEP_SIZE) as u64 + 1;
        let k = rng::seeded(rng::hash_words(&[0x6c69_6e65, eid])).next_u64() % points;
        -self.extent + STEP_SIZE * k as f64
    }
}

impl Dynamics for LineWalker {
    fn name(&self) -> &str {
        "line-walker"
    }

    fn reset(&mut self, eid: u64) -> Result<()> {
        self.x = self.start_position(eid);
        Ok(())
    }

    fn observation(&self) -> Tree {
        Tree::new().with("position", Tensor::vector_f32(&[self.x as f32]))
    }

    /// A 1-pixel-high strip with the walker lit.
    fn render(&self) -> Tensor {
        let width = (2.0 * self.extent / STEP_SIZE) as usize + 1;
        let mut t = vec![0u8; width * 3];
        let col = ((self.x + self.extent) / STEP_SIZE).round() as usize;
        t[col.min(width - 1) * 3..][..3].copy_from_slice(&[255, 255, 255]);
        Tensor::from_u8(vec![1, width, 3], t).unwrap_or_else(|_| Tensor::zeros(DType::U8, vec![1, 1, 3]))
    }

    fn action_horizon(&self) -> usize {
        self.horizon
    }

    fn episode_partition(&self) -> Option<EpisodePartition> {
        Some(EpisodePartition::standard())
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

    #[test]
    fn starts_on_the_grid() {
        let w = LineWalker::default();
        for eid in 0..200 {
            let x = w.start_position(eid);
            assert!(x.abs() <= 10.0);
            assert_eq!((x / STEP_SIZE).fract(), 0.0);
        }
        assert_eq!(w.start_position(3), w.start_position(3));
    }

    #[test]
    fn motion_is_clamped() {
        let mut w = LineWalker::new(1.0, 0.0, 5).unwrap();
        w.set_position(0.5);
        w.advance(1.0);
        assert_eq!(w.position(), 1.0);
        w.advance(1.0);
        assert_eq!(w.position(), 1.0);
        w.advance(-0.5);
        assert_eq!(w.position(), 0.75);
    }

    #[test]
    fn invalid_parameters() {
        assert!(LineWalker::new(0.0, 0.0, 1).is_err());
        assert!(LineWalker::new(1.2, 0.0, 1).is_err());
        assert!(LineWalker::new(1.0, 2.0, 1).is_err());
    }
}
