//! Deterministic toy arenas, tasks, tools and agents.

pub mod line_walker;
pub mod oracle;
pub mod qlearner;
pub mod random;
pub mod tasks;
pub mod tile_world;
pub mod tools;

use std::sync::Arc;

use crate::arena::{Arena, DummyTask, Task};
use crate::error::Result;

pub use line_walker::LineWalker;
pub use oracle::OracleTileAgent;
pub use qlearner::{QConfig, QLearner};
pub use random::RandomAgent;
pub use tasks::{FlatteningTask, ReachTask};
pub use tile_world::{plan_greedy, TileGrid, TileWorld};
pub use tools::{PickPlaceAction, PickPlaceTool, VelocityTool, PICK_PLACE_KEY, VELOCITY_KEY};

/// Default tile world with a one-picker tool and the flattening task.
pub fn tile_world_arena() -> Result<Arena> {
    Arena::new(
        "toy|domain:tile-world,action:pixel-pick-and-place(1),task:flattening",
        Box::new(TileWorld::default()),
        Arc::new(PickPlaceTool::new(1)?),
        Arc::new(FlatteningTask),
    )
}

/// Default line walker with velocity control and the reach task.
pub fn line_walker_arena() -> Result<Arena> {
    line_walker_with(LineWalker::default(), Arc::new(ReachTask))
}

pub fn line_walker_with(walker: LineWalker, task: Arc<dyn Task>) -> Result<Arena> {
    Arena::new("toy|domain:line-walker,task:reach", Box::new(walker), Arc::new(VelocityTool::default()), task)
}

/// A tile world without a task.
pub fn bare_tile_world() -> Result<Arena> {
    Arena::new("toy|domain:tile-world", Box::new(TileWorld::default()), Arc::new(PickPlaceTool::new(1)?), Arc::new(DummyTask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Agent;
    use crate::arena::ActionTool;
    use crate::error::Error;
    use crate::types::{keys, ArenaId, EpisodeConfig, Mode};
    use tools::cell_centre;

    fn world(arena: &mut Arena) -> &mut TileWorld {
        arena.dynamics_mut().as_any_mut().downcast_mut::<TileWorld>().unwrap()
    }

    #[test]
    fn reset_is_deterministic_per_eid() {
        let mut a = tile_world_arena().unwrap();
        let mut b = tile_world_arena().unwrap();
        let cfg = EpisodeConfig::eid(0, Mode::Train);
        assert_eq!(a.reset(Some(&cfg)).unwrap(), b.reset(Some(&cfg)).unwrap());
        let other = a.reset(Some(&EpisodeConfig::eid(1, Mode::Train))).unwrap();
        assert_ne!(other.observation(), b.reset(Some(&cfg)).unwrap().observation());
    }

    #[test]
    fn eid_ranges_and_configs() {
        let mut a = tile_world_arena().unwrap();
        let eval: Vec<u64> = a.eval_configs().iter().map(|c| c.eid.unwrap()).collect();
        let val: Vec<u64> = a.val_configs().iter().map(|c| c.eid.unwrap()).collect();
        assert_eq!(eval, (100..120).collect::<Vec<_>>());
        assert_eq!(val, (120..130).collect::<Vec<_>>());
        assert_eq!(a.eval_configs(), a.eval_configs());
        assert!(eval.iter().all(|e| !val.contains(e) && *e >= 100));
        assert_eq!(a.num_episodes(), 100);
        assert_eq!(a.action_horizon(), 3);
        assert!(matches!(a.reset(Some(&EpisodeConfig::eid(1_000_000_000, Mode::Train))), Err(Error::Config(_))));
        a.set_random_reset(false);
        let info = a.reset(None).unwrap();
        assert_eq!(info.eid(), Some(0));
        a.set_eval();
        assert_eq!(a.reset(None).unwrap().eid(), Some(100));
    }

    #[test]
    fn no_op_keeps_metrics() {
        for mut arena in [tile_world_arena().unwrap(), line_walker_arena().unwrap()] {
            arena.reset(Some(&EpisodeConfig::eid(7, Mode::Train))).unwrap();
            let before = arena.evaluate().unwrap();
            let obs = arena.dynamics().observation();
            let no_op = arena.no_op().unwrap();
            for _ in 0..arena.action_horizon() {
                let info = arena.step(&no_op).unwrap();
                assert_eq!(arena.evaluate().unwrap(), before);
                assert_eq!(info.observation().unwrap(), &obs);
                if info.done() {
                    break;
                }
            }
        }
    }

    #[test]
    fn fixing_the_last_tile_finishes_the_episode() {
        let mut arena = tile_world_arena().unwrap();
        arena.reset(Some(&EpisodeConfig::eid(3, Mode::Train))).unwrap();
        let grid = world(&mut arena).grid().clone();
        let moves = plan_greedy(&grid);
        let mut info = None;
        for &(p, q) in &moves {
            info = Some(arena.step(&PickPlaceAction::single(cell_centre(p, 8), cell_centre(q, 8)).to_action()).unwrap());
        }
        let info = info.unwrap();
        assert!(info.done() && info.success());
        assert_eq!(arena.evaluate().unwrap()["coverage"], 1.0);
        let counted = world(&mut arena).grid().covered_count();
        assert_eq!(counted, 64);
    }

    #[test]
    fn misses_are_flagged() {
        let mut arena = tile_world_arena().unwrap();
        arena.reset(Some(&EpisodeConfig::eid(3, Mode::Train))).unwrap();
        let grid = world(&mut arena).grid().clone();
        let empty = (0..64).find(|&c| grid.loose_at(c) == 0 && grid.is_covered(c)).unwrap();
        let hole = grid.holes()[0];
        let info = arena.step(&PickPlaceAction::single(cell_centre(empty, 8), cell_centre(hole, 8)).to_action()).unwrap();
        assert_eq!(info.tree().get_tree(keys::ACTION_TOOL).unwrap().get_flag("no_pick"), Some(true));
        assert_eq!(world(&mut arena).grid(), &grid);
    }

    #[test]
    fn flattening_metrics() {
        let mut arena = tile_world_arena().unwrap();
        arena.reset(Some(&EpisodeConfig::eid(0, Mode::Train))).unwrap();
        assert_eq!(arena.evaluate().unwrap()["coverage"], 61.0 / 64.0);
        world(&mut arena).set_grid(TileGrid::solved(8)).unwrap();
        let m = arena.evaluate().unwrap();
        assert_eq!((m["coverage"], m["success"]), (1.0, 1.0));
        let err = arena.task().evaluate(&arena, &["iou"]).unwrap_err();
        assert!(err.to_string().contains("coverage"));

        let mut small = Arena::new(
            "small",
            Box::new(TileWorld::new(4, 0, 3, 2).unwrap()),
            Arc::new(PickPlaceTool::new(1).unwrap()),
            Arc::new(FlatteningTask),
        )
        .unwrap();
        small.reset(Some(&EpisodeConfig::eid(0, Mode::Train))).unwrap();
        let covered: Vec<bool> = (0..16).map(|i| i % 2 == 0).collect();
        world(&mut small).set_grid(TileGrid::from_cells(4, covered, vec![0; 16]).unwrap()).unwrap();
        assert_eq!(small.evaluate().unwrap()["coverage"], 0.5);
    }

    #[test]
    fn tasks_and_tools_check_capabilities() {
        let walker = line_walker_arena().unwrap();
        assert!(matches!(FlatteningTask.evaluate(&walker, &[]), Err(Error::Capability(_))));
        assert!(matches!(
            Arena::new("x", Box::new(LineWalker::default()), Arc::new(PickPlaceTool::new(1).unwrap()), Arc::new(DummyTask)),
            Err(Error::Capability(_))
        ));
        assert!(matches!(
            line_walker_with(LineWalker::default(), Arc::new(FlatteningTask)),
            Err(Error::Capability(_))
        ));
        let mut w = line_walker_arena().unwrap();
        w.reset(None).unwrap();
        let pp = PickPlaceTool::new(1).unwrap();
        assert!(matches!(pp.step(&mut w, &pp.no_op().unwrap()), Err(Error::Capability(_))));
    }

    #[test]
    fn task_swap_leaves_observations_alone() {
        let mut with_task = tile_world_arena().unwrap();
        let mut bare = bare_tile_world().unwrap();
        let cfg = EpisodeConfig::eid(9, Mode::Train);
        let a = with_task.reset(Some(&cfg)).unwrap();
        let b = bare.reset(Some(&cfg)).unwrap();
        assert_eq!(a.observation(), b.observation());
        assert!(b.tree().get_tree(keys::GOAL).unwrap().is_empty());
        let act = PickPlaceAction::single([0.3, 0.3], [0.6, 0.9]).to_action();
        let a = with_task.step(&act).unwrap();
        let b = bare.step(&act).unwrap();
        assert_eq!(a.observation(), b.observation());
        assert!(b.evaluation().unwrap().is_empty());
        assert_eq!(a.task_reward(), Some(with_task.evaluate().unwrap()["coverage"]));
    }

    #[test]
    fn reach_rewards_and_goal() {
        let mut arena = line_walker_arena().unwrap();
        let info = arena.reset(Some(&EpisodeConfig::eid(2, Mode::Train))).unwrap();
        let x = info.observation().unwrap().get_tensor("position").unwrap().as_f32().unwrap()[0] as f64;
        assert_eq!(info.tree().get_path(&["goal", "target"]).unwrap().as_tensor().unwrap().as_f32().unwrap(), &[0.0]);
        let v = if x > 0.0 { -1.0 } else { 1.0 };
        let info = arena.step(&VelocityTool::action(v).unwrap()).unwrap();
        let x2 = (x + 0.5 * v as f64).clamp(-10.0, 10.0);
        assert_eq!(info.task_reward(), Some(-x2.abs()));
        assert_eq!(arena.evaluate().unwrap()["distance"], x2.abs());
    }

    #[test]
    fn oracle_matches_brute_force_on_one_tile() {
        for eid in 0..10 {
            let mut arena = Arena::new(
                "one",
                Box::new(TileWorld::new(8, 1, 3, 8).unwrap()),
                Arc::new(PickPlaceTool::new(1).unwrap()),
                Arc::new(FlatteningTask),
            )
            .unwrap();
            let info = arena.reset(Some(&EpisodeConfig::eid(eid, Mode::Train))).unwrap();
            let grid = world(&mut arena).grid().clone();

            let mut best = (f64::MIN, 0, 0);
            for p in 0..64 {
                for q in 0..64 {
                    let mut g = grid.clone();
                    g.apply(p, q);
                    if g.coverage() > best.0 {
                        best = (g.coverage(), p, q);
                    }
                }
            }

            let mut agent = OracleTileAgent::new(Default::default());
            agent.reset(&[ArenaId(0)]).unwrap();
            agent.init(std::slice::from_ref(&info)).unwrap();
            assert!(agent.state()[&ArenaId(0)].contains_key("plan"));
            let act = agent.act(&[info], true).unwrap().remove(0);
            let expected = PickPlaceAction::single(cell_centre(best.1, 8), cell_centre(best.2, 8)).to_action();
            assert_eq!(act, expected);
            let step = arena.step(&act).unwrap();
            assert!(step.success());
            assert!(agent.success()[&ArenaId(0)]);
            assert_eq!(agent.phase()[&ArenaId(0)].as_str(), "done");
        }
    }

    #[test]
    fn oracle_on_a_solved_grid_emits_the_no_op() {
        let mut arena = Arena::new(
            "solved",
            Box::new(TileWorld::new(8, 0, 3, 8).unwrap()),
            Arc::new(PickPlaceTool::new(1).unwrap()),
            Arc::new(FlatteningTask),
        )
        .unwrap();
        let info = arena.reset(Some(&EpisodeConfig::eid(0, Mode::Train))).unwrap();
        let mut agent = OracleTileAgent::new(Default::default());
        agent.reset(&[ArenaId(0)]).unwrap();
        agent.init(std::slice::from_ref(&info)).unwrap();
        assert!(agent.success()[&ArenaId(0)]);
        assert_eq!(agent.act(&[info], true).unwrap()[0], arena.no_op().unwrap());
    }

    #[test]
    fn oracle_without_a_handle_is_a_capability_error() {
        let mut arena = line_walker_arena().unwrap();
        let info = arena.reset(None).unwrap();
        let mut agent = OracleTileAgent::new(Default::default());
        agent.reset(&[ArenaId(0)]).unwrap();
        assert!(matches!(agent.init(&[info]), Err(Error::Capability(_))));
    }
}
