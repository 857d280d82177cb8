//! Worlds and expert traces shipped with the crate.

use crate::trace::{parse_trace, ExpertTrace};
use crate::world::{load_world, WorldSpec};

pub const MINI_ZORK_WORLD: &str = include_str!("../fixtures/mini_zork.world.json");
pub const MINI_ZORK_TRACE: &str = include_str!("../fixtures/mini_zork.trace.jsonl");
pub const SIX_ROOM_WORLD: &str = include_str!("../fixtures/six_room.world.json");
pub const SIX_ROOM_TRACE: &str = include_str!("../fixtures/six_room.trace.jsonl");
pub const MAP_NAVIGATION_WORLD: &str = include_str!("../fixtures/map_navigation.world.json");
pub const MAP_NAVIGATION_TRACE: &str = include_str!("../fixtures/map_navigation.trace.jsonl");
pub const DECISIVE_ACTION_WORLD: &str = include_str!("../fixtures/decisive_action.world.json");
pub const DECISIVE_ACTION_TRACE: &str = include_str!("../fixtures/decisive_action.trace.jsonl");

/// A bundled world together with its expert trace.
pub struct Bundled {
    pub name: &'static str,
    pub world: &'static str,
    pub trace: &'static str,
}

pub const BUNDLED: [Bundled; 4] = [
    Bundled {
        name: "mini_zork",
        world: MINI_ZORK_WORLD,
        trace: MINI_ZORK_TRACE,
    },
    Bundled {
        name: "six_room",
        world: SIX_ROOM_WORLD,
        trace: SIX_ROOM_TRACE,
    },
    Bundled {
        name: "map_navigation",
        world: MAP_NAVIGATION_WORLD,
        trace: MAP_NAVIGATION_TRACE,
    },
    Bundled {
        name: "decisive_action",
        world: DECISIVE_ACTION_WORLD,
        trace: DECISIVE_ACTION_TRACE,
    },
];

pub fn bundled(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}

impl Bundled {
    pub fn load_world(&self) -> WorldSpec {
        load_world(self.world).expect("bundled worlds are valid")
    }

    pub fn load_trace(&self) -> ExpertTrace {
        parse_trace(self.trace).expect("bundled traces are valid")
    }
}

pub fn mini_zork() -> WorldSpec {
    BUNDLED[0].load_world()
}

pub fn mini_zork_trace() -> ExpertTrace {
    BUNDLED[0].load_trace()
}

pub fn six_room() -> WorldSpec {
    BUNDLED[1].load_world()
}

pub fn six_room_trace() -> ExpertTrace {
    BUNDLED[1].load_trace()
}
