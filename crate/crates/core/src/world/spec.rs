use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::{Action, Direction};
use super::search;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: String,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exit {
    pub dest: String,
    #[serde(default)]
    pub required_item: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub name: String,
    /// Room id or container id.
    pub initial_location: String,
    pub portable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Container {
    pub id: String,
    pub name: String,
    pub room_id: String,
    pub open: bool,
    pub contents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalAtom {
    AtRoom(String),
    Holds(String),
    ContainerOpen(String),
}

/// Conjunction of goal atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalPredicate {
    pub atoms: Vec<GoalAtom>,
}

/// Where an item currently is.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Room(String),
    Container(String),
    Inventory,
}

/// Static definition of a world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub format_version: u32,
    pub world_id: String,
    pub rooms: Vec<Room>,
    pub exits: BTreeMap<String, BTreeMap<Direction, Exit>>,
    #[serde(default)]
    pub items: Vec<Item>,
    #[serde(default)]
    pub containers: Vec<Container>,
    pub start_room: String,
    pub goal: GoalPredicate,
    pub max_steps_hint: u32,
    /// A known winning action sequence, kept as a solvability certificate.
    #[serde(default)]
    pub certificate: Option<Vec<Action>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
    #[error("invalid id {0:?}: ids are lowercase [a-z0-9_] words")]
    BadId(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{context} references unknown {kind} {id:?}")]
    UnknownReference {
        context: String,
        kind: &'static str,
        id: String,
    },
    #[error("item {item:?} placement disagrees with container {container:?} contents")]
    ContentsMismatch { item: String, container: String },
    #[error("goal predicate is empty")]
    EmptyGoal,
    #[error("goal already holds in the start state")]
    TrivialGoal,
    #[error("goal is unreachable from the start room")]
    Unreachable,
    #[error("solvability search exceeded {0} states")]
    SearchBudget(usize),
    #[error("certificate does not reach the goal")]
    BadCertificate,
}

const ARTICLES: [&str; 3] = ["the", "a", "an"];

fn check_id(id: &str) -> Result<(), SpecError> {
    let well_formed = !id.is_empty()
        && id.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && id.split('_').all(|seg| !seg.is_empty() && !ARTICLES.contains(&seg));
    if well_formed {
        Ok(())
    } else {
        Err(SpecError::BadId(id.to_string()))
    }
}

/// State budget for load-time solvability checks.
pub const SEARCH_BUDGET: usize = 500_000;

impl WorldSpec {
    pub fn room(&self, id: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn container(&self, id: &str) -> Option<&Container> {
        self.containers.iter().find(|c| c.id == id)
    }

    pub fn exit(&self, room: &str, dir: Direction) -> Option<&Exit> {
        self.exits.get(room).and_then(|m| m.get(&dir))
    }

    pub fn is_object(&self, id: &str) -> bool {
        self.item(id).is_some() || self.container(id).is_some()
    }

    /// Every object id (items then containers), sorted.
    pub fn object_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .items
            .iter()
            .map(|i| i.id.as_str())
            .chain(self.containers.iter().map(|c| c.id.as_str()))
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Initial item placement resolved to [`Location`]s.
    pub fn initial_locations(&self) -> BTreeMap<String, Location> {
        self.items
            .iter()
            .map(|item| {
                let loc = if self.container(&item.initial_location).is_some() {
                    Location::Container(item.initial_location.clone())
                } else {
                    Location::Room(item.initial_location.clone())
                };
                (item.id.clone(), loc)
            })
            .collect()
    }

    /// Structural checks: ids, references, placements and goal atoms.
    pub fn validate_structure(&self) -> Result<(), SpecError> {
        if self.format_version != super::WORLD_FORMAT_VERSION {
            return Err(SpecError::FormatVersion(self.format_version));
        }
        let mut seen = BTreeSet::new();
        let ids = self
            .rooms
            .iter()
            .map(|r| &r.id)
            .chain(self.items.iter().map(|i| &i.id))
            .chain(self.containers.iter().map(|c| &c.id));
        for id in ids {
            check_id(id)?;
            if !seen.insert(id.as_str()) {
                return Err(SpecError::DuplicateId(id.clone()));
            }
        }

        let unknown = |context: String, kind: &'static str, id: &str| SpecError::UnknownReference {
            context,
            kind,
            id: id.to_string(),
        };

        if self.room(&self.start_room).is_none() {
            return Err(unknown("start_room".into(), "room", &self.start_room));
        }
        for (from, dirs) in &self.exits {
            if self.room(from).is_none() {
                return Err(unknown("exits".into(), "room", from));
            }
            for (dir, exit) in dirs {
                let ctx = format!("exit {from}/{dir}");
                if self.room(&exit.dest).is_none() {
                    return Err(unknown(ctx, "room", &exit.dest));
                }
                if let Some(req) = &exit.required_item {
                    if self.item(req).is_none() {
                        return Err(unknown(ctx, "item", req));
                    }
                }
            }
        }
        for c in &self.containers {
            if self.room(&c.room_id).is_none() {
                return Err(unknown(format!("container {}", c.id), "room", &c.room_id));
            }
            for content in &c.contents {
                let placed_here = self
                    .item(content)
                    .map(|i| i.initial_location == c.id)
                    .unwrap_or(false);
                if !placed_here {
                    return Err(SpecError::ContentsMismatch {
                        item: content.clone(),
                        container: c.id.clone(),
                    });
                }
            }
        }
        for item in &self.items {
            let loc = &item.initial_location;
            if let Some(c) = self.container(loc) {
                if !c.contents.contains(&item.id) {
                    return Err(SpecError::ContentsMismatch {
                        item: item.id.clone(),
                        container: c.id.clone(),
                    });
                }
            } else if self.room(loc).is_none() {
                return Err(unknown(format!("item {}", item.id), "location", loc));
            }
        }

        if self.goal.atoms.is_empty() {
            return Err(SpecError::EmptyGoal);
        }
        for atom in &self.goal.atoms {
            let (kind, id, ok) = match atom {
                GoalAtom::AtRoom(r) => ("room", r, self.room(r).is_some()),
                GoalAtom::Holds(i) => ("item", i, self.item(i).is_some()),
                GoalAtom::ContainerOpen(c) => ("container", c, self.container(c).is_some()),
            };
            if !ok {
                return Err(unknown("goal".into(), kind, id));
            }
        }
        Ok(())
    }

    /// Full load-time validation: structure plus a solvability search.
    ///
    /// A stored certificate is replayed first; the breadth-first search only
    /// runs when there is none.
    pub fn validate(&self) -> Result<(), SpecError> {
        self.validate_structure()?;
        let start = super::engine::initial_state(self);
        if super::is_goal(&start, self) {
            return Err(SpecError::TrivialGoal);
        }
        if let Some(cert) = &self.certificate {
            return if search::replay_reaches_goal(self, cert) {
                Ok(())
            } else {
                Err(SpecError::BadCertificate)
            };
        }
        match search::shortest_solution(self, SEARCH_BUDGET) {
            search::SearchOutcome::Solved(_) => Ok(()),
            search::SearchOutcome::Unreachable => Err(SpecError::Unreachable),
            search::SearchOutcome::BudgetExceeded => Err(SpecError::SearchBudget(SEARCH_BUDGET)),
        }
    }
}
