//! Deterministic playable environments.
//!
//! A world is a static [`WorldSpec`] plus a mutable [`WorldState`]. All
//! transitions go through [`step`], which is a pure function of its inputs,
//! so any episode can be replayed from a reset state and an action list.

mod action;
mod engine;
mod format;
mod parser;
pub mod procgen;
pub mod search;
mod spec;

pub use action::{Action, Direction};
pub use engine::{
    atom_count, is_goal, legal_actions, observe, reset, state_digest, step, ActionResult, Observation,
    StepError, WorldState,
};
pub use format::{load_world, save_world, FormatError, WORLD_FORMAT_VERSION};
pub use parser::{parse_command, ParseError};
pub use procgen::{generate_world, GenerationError, ProcgenParams};
pub use spec::{
    Container, Exit, GoalAtom, GoalPredicate, Item, Location, Room, SpecError, WorldSpec,
    SEARCH_BUDGET,
};
