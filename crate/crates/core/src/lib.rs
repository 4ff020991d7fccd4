//! Closed-loop orchestration of agents and arenas.
//!
//! An [`Arena`] bundles environment dynamics with a [`Task`] and an
//! [`ActionTool`]. An [`Agent`] maps batches of per-arena [`Information`] to
//! [`Action`]s. The [`runner`] drives them (one trial, many arenas in
//! parallel, evaluation sweeps, train-and-evaluate), the [`registry`] builds
//! both from strings, and the [`store`] keeps collected trajectories on disk.

pub mod agent;
pub mod arena;
pub mod builtin;
pub mod cli;
pub mod error;
pub mod exec;
pub mod json;
pub mod logging;
pub mod registry;
pub mod rng;
pub mod runner;
pub mod space;
pub mod store;
pub mod types;
pub mod value;

pub use agent::{Agent, AgentCore, TrainableAgent};
pub use arena::{ActionTool, Arena, Dynamics, Task};
pub use error::{Error, Result};
pub use space::ActionSpace;
pub use types::{Action, ActionPhase, ArenaId, EpisodeConfig, Information, Mode};
pub use value::{DType, Tensor, Tree, Value};
