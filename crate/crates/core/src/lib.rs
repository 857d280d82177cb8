//! Multi-agent game-playing engine.
//!
//! Expert traces are distilled into a step outline and a reward model (the
//! critic); a swarm of temperature-differentiated player agents plays
//! independent replicas of a deterministic world, is scored each step, and
//! shares outcomes through a memory buffer before the next step. The most
//! successful agent is selected at the end of each episode.

pub mod agents;
pub mod critic;
pub mod digest;
pub mod fixtures;
pub mod gateway;
pub mod swarm;
pub mod trace;
pub mod world;
