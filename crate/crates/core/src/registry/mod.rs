//! String-driven construction of arenas, agents, configs and transforms.

pub mod config;
pub mod domain;
pub mod transform;

use std::str::FromStr;
use std::sync::Arc;

use crate::agent::Agent;
use crate::arena::{ActionTool, Arena, Dynamics, DummyTask, Task};
use crate::builtin::{FlatteningTask, OracleTileAgent, PickPlaceTool, QLearner, RandomAgent, ReachTask};
use crate::error::{Error, Result};

pub use config::{config_root, retrieve_config, retrieve_config_from, Config, CONFIG_DIR_VAR};
pub use domain::{split_call, AgentSpec, DomainSpec};
pub use transform::{build_transform, resize_nearest, Transform};

pub const ARENA_BASES: [&str; 1] = ["toy"];
pub const DOMAINS: [&str; 2] = ["tile-world", "line-walker"];
pub const AGENT_BASES: [&str; 3] = ["random", "oracle-tile", "tabular-q"];

const COMMON_PARAMS: [&str; 6] = ["domain", "action", "task", "disp", "seed", "random_reset"];
const TILE_PARAMS: [&str; 4] = ["grid", "misplaced", "horizon", "cell_px"];
const WALKER_PARAMS: [&str; 3] = ["extent", "target", "horizon"];

/// What a domain contributes to an arena.
type Parts = (Box<dyn Dynamics>, Arc<dyn ActionTool>, Arc<dyn Task>);

fn names(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "True" | "true" | "1" => Ok(true),
        "False" | "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects True or False, got `{value}`"))),
    }
}

fn parse_num<T: FromStr>(spec: &DomainSpec, key: &str, default: T) -> Result<T> {
    match spec.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| Error::Config(format!("`{key}` has an invalid value `{v}`"))),
    }
}

fn build_tile_world(spec: &DomainSpec) -> Result<Parts> {
    use crate::builtin::tile_world::*;
    let world = TileWorld::new(
        parse_num(spec, "grid", DEFAULT_GRID)?,
        parse_num(spec, "misplaced", DEFAULT_MISPLACED)?,
        parse_num(spec, "horizon", DEFAULT_HORIZON)?,
        parse_num(spec, "cell_px", DEFAULT_CELL_PX)?,
    )?;
    let action = spec.get("action").unwrap_or("pixel-pick-and-place(1)");
    let tool: Arc<dyn ActionTool> = match split_call(action) {
        ("pixel-pick-and-place" | "norm-pixel-pick-and-place", args) => {
            let k = match args {
                None => 1,
                Some(a) => a.trim().parse().map_err(|_| Error::Config(format!("bad picker count in `{action}`")))?,
            };
            Arc::new(PickPlaceTool::new(k)?)
        }
        _ => return Err(Error::registry("action tool", action, names(&["pixel-pick-and-place(<k>)"]))),
    };
    let task: Arc<dyn Task> = match spec.get("task") {
        None | Some("dummy") => Arc::new(DummyTask),
        Some("flattening") => Arc::new(FlatteningTask),
        Some(other) => return Err(Error::registry("task", other, names(&["flattening", "dummy"]))),
    };
    Ok((Box::new(world), tool, task))
}

fn build_line_walker(spec: &DomainSpec) -> Result<Parts> {
    use crate::builtin::line_walker::*;
    let walker = LineWalker::new(
        parse_num(spec, "extent", DEFAULT_EXTENT)?,
        parse_num(spec, "target", 0.0)?,
        parse_num(spec, "horizon", DEFAULT_HORIZON)?,
    )?;
    let tool: Arc<dyn ActionTool> = match spec.get("action") {
        None | Some("velocity") => Arc::new(crate::builtin::VelocityTool::default()),
        Some(other) => return Err(Error::registry("action tool", other, names(&["velocity"]))),
    };
    let task: Arc<dyn Task> = match spec.get("task") {
        None | Some("dummy") => Arc::new(DummyTask),
        Some("reach") => Arc::new(ReachTask),
        Some(other) => return Err(Error::registry("task", other, names(&["reach", "dummy"]))),
    };
    Ok((Box::new(walker), tool, task))
}

/// Builds an arena from a domain string such as
/// `toy|domain:tile-world,action:pixel-pick-and-place(1),task:flattening`.
pub fn build_arena(s: &str) -> Result<Arena> {
    let spec = DomainSpec::parse(s)?;
    if spec.base != "toy" {
        return Err(Error::registry("arena", &spec.base, names(&ARENA_BASES)));
    }
    let domain = spec.get("domain").ok_or_else(|| Error::Config("toy arenas need a `domain` param".into()))?;
    let extra: &[&str] = match domain {
        "tile-world" => &TILE_PARAMS,
        "line-walker" => &WALKER_PARAMS,
        other => return Err(Error::registry("domain", other, names(&DOMAINS))),
    };
    if let Some(bad) = spec.params.keys().find(|k| !COMMON_PARAMS.contains(&k.as_str()) && !extra.contains(&k.as_str())) {
        return Err(Error::registry("param", bad, COMMON_PARAMS.iter().chain(extra).map(|s| s.to_string())));
    }
    let (dynamics, tool, task) = match domain {
        "tile-world" => build_tile_world(&spec)?,
        _ => build_line_walker(&spec)?,
    };
    let mut arena = Arena::new(spec.to_string(), dynamics, tool, task)?;
    if let Some(v) = spec.get("disp") {
        arena.set_disp(parse_flag("disp", v)?);
    }
    if let Some(v) = spec.get("random_reset") {
        arena.set_random_reset(parse_flag("random_reset", v)?);
    }
    arena.set_seed(parse_num(&spec, "seed", 0u64)?);
    Ok(arena)
}

/// Parses an agent name and checks it against the registry.
pub fn check_agent(s: &str) -> Result<AgentSpec> {
    let spec = AgentSpec::parse(s)?;
    let allowed: &[&str] = match spec.base.as_str() {
        "oracle-tile" => &["pick-and-place"],
        "random" | "tabular-q" => &[],
        other => return Err(Error::registry("agent", other, names(&AGENT_BASES))),
    };
    if let Some(v) = &spec.variant {
        if !allowed.contains(&v.as_str()) {
            return Err(Error::registry("agent variant", v, names(allowed)));
        }
    }
    Ok(spec)
}

/// Builds an agent by name with `config` injected.
pub fn build_agent(s: &str, config: &Config) -> Result<Box<dyn Agent>> {
    let spec = check_agent(s)?;
    let tree = config.tree().clone();
    Ok(match spec.base.as_str() {
        "random" => Box::new(RandomAgent::new(tree)?),
        "oracle-tile" => Box::new(OracleTileAgent::new(tree)),
        _ => Box::new(QLearner::new(tree)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::tools::PICK_PLACE_KEY;
    use crate::types::{EpisodeConfig, Mode};

    #[test]
    fn builds_the_tile_world() {
        let a = build_arena("toy|domain:tile-world,action:pixel-pick-and-place(1),task:flattening").unwrap();
        assert_eq!(a.task().name(), "flattening");
        assert_eq!(a.tool().name(), "pixel-pick-and-place");
        assert_eq!(a.action_space().child(PICK_PLACE_KEY).unwrap().box_shape(), Some(&[2usize, 2][..]));
        assert!(!a.disp());
        let b = build_arena("toy|domain:tile-world,action:pixel-pick-and-place(2),task:flattening,disp:True").unwrap();
        assert_eq!(b.action_space().child(PICK_PLACE_KEY).unwrap().box_shape(), Some(&[4usize, 2][..]));
        assert!(b.disp());
    }

    #[test]
    fn missing_task_means_dummy() {
        let a = build_arena("toy|domain:line-walker").unwrap();
        assert_eq!(a.task().name(), "dummy");
    }

    #[test]
    fn registry_errors_list_names() {
        let err = build_arena("softgym|domain:x").unwrap_err();
        assert!(err.to_string().contains("toy"), "{err}");
        let err = build_arena("toy|domain:tile-world,colour:red").unwrap_err();
        assert!(err.to_string().contains("misplaced"), "{err}");
        let err = build_arena("toy|domain:cube").unwrap_err();
        assert!(err.to_string().contains("line-walker"), "{err}");
        let err = build_agent("dreamer_v2", &Config::empty()).err().unwrap();
        assert!(err.to_string().contains("tabular-q"), "{err}");
    }

    #[test]
    fn builds_are_pure() {
        let s = "toy|domain:tile-world,action:pixel-pick-and-place(1),task:flattening";
        let cfg = EpisodeConfig::eid(42, Mode::Train);
        let a = build_arena(s).unwrap().reset(Some(&cfg)).unwrap();
        let b = build_arena(s).unwrap().reset(Some(&cfg)).unwrap();
        assert_eq!(a.observation(), b.observation());
    }

    #[test]
    fn agents_receive_their_config() {
        let cfg = Config::from_yaml_str("alpha: 0.1\n").unwrap();
        let agent = build_agent("tabular-q", &cfg).unwrap();
        assert_eq!(agent.config().get_scalar("alpha"), Some(0.1));
        assert_eq!(agent.name(), "tabular-q");
        assert_eq!(build_agent("random", &Config::empty()).unwrap().name(), "random");
        assert!(build_agent("oracle-tile|pick-and-place", &Config::empty()).is_ok());
        assert!(build_agent("random|fancy", &Config::empty()).is_err());
    }
}
