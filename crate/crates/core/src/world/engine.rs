use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::{Action, Direction};
use super::spec::{GoalAtom, Location, SpecError, WorldSpec};
use crate::digest::short_hash;

/// Mutable episode state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub current_room: String,
    pub item_locations: BTreeMap<String, Location>,
    pub container_flags: BTreeMap<String, bool>,
    pub step_count: u32,
    pub done: bool,
}

impl WorldState {
    pub fn inventory(&self) -> BTreeSet<&str> {
        self.item_locations
            .iter()
            .filter(|(_, loc)| **loc == Location::Inventory)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn holds(&self, item: &str) -> bool {
        self.item_locations.get(item) == Some(&Location::Inventory)
    }

    pub fn is_open(&self, container: &str) -> bool {
        self.container_flags.get(container).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionResult {
    Ok,
    /// The object is here but the action cannot apply (locked exit, already open, not portable).
    Blocked,
    /// The object id is not declared in this world.
    UnknownObject,
    /// The object exists but is not present or visible.
    NothingHappens,
    GoalReached,
}

impl ActionResult {
    /// Ok or GoalReached.
    pub fn succeeded(self) -> bool {
        matches!(self, ActionResult::Ok | ActionResult::GoalReached)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub room_id: String,
    pub description_text: String,
    pub visible_items: Vec<String>,
    pub available_exits: Vec<Direction>,
    pub last_result: ActionResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("invalid world spec: {0}")]
    InvalidSpec(#[from] SpecError),
}

pub(crate) fn initial_state(spec: &WorldSpec) -> WorldState {
    WorldState {
        current_room: spec.start_room.clone(),
        item_locations: spec.initial_locations(),
        container_flags: spec
            .containers
            .iter()
            .map(|c| (c.id.clone(), c.open))
            .collect(),
        step_count: 0,
        done: false,
    }
}

/// Start-of-episode state.
pub fn reset(spec: &WorldSpec) -> Result<WorldState, StepError> {
    spec.validate_structure()?;
    Ok(initial_state(spec))
}

/// True iff every goal atom holds.
pub fn is_goal(state: &WorldState, spec: &WorldSpec) -> bool {
    spec.goal.atoms.iter().all(|atom| atom_holds(atom, state))
}

/// Number of goal atoms currently satisfied.
pub fn atom_count(state: &WorldState, spec: &WorldSpec) -> usize {
    spec.goal.atoms.iter().filter(|a| atom_holds(a, state)).count()
}

pub(crate) fn atom_holds(atom: &GoalAtom, state: &WorldState) -> bool {
    match atom {
        GoalAtom::AtRoom(r) => state.current_room == *r,
        GoalAtom::Holds(i) => state.holds(i),
        GoalAtom::ContainerOpen(c) => state.is_open(c),
    }
}

/// Hash of (current room, inventory, container flags). Step count and the
/// placement of items outside the inventory are deliberately excluded.
pub fn state_digest(state: &WorldState) -> String {
    let inventory: Vec<&str> = state.inventory().into_iter().collect();
    let flags: Vec<String> = state
        .container_flags
        .iter()
        .map(|(id, open)| format!("{id}:{}", u8::from(*open)))
        .collect();
    let projection = format!(
        "room={};inv={};open={}",
        state.current_room,
        inventory.join(","),
        flags.join(",")
    );
    short_hash(projection.as_bytes())
}

fn visible_items(state: &WorldState, spec: &WorldSpec) -> Vec<String> {
    state
        .item_locations
        .iter()
        .filter(|(_, loc)| match loc {
            Location::Room(r) => *r == state.current_room,
            Location::Container(c) => {
                state.is_open(c)
                    && spec
                        .container(c)
                        .map(|c| c.room_id == state.current_room)
                        .unwrap_or(false)
            }
            Location::Inventory => false,
        })
        .map(|(id, _)| id.clone())
        .collect()
}

fn exit_passable(state: &WorldState, spec: &WorldSpec, dir: Direction) -> Option<String> {
    let exit = spec.exit(&state.current_room, dir)?;
    match &exit.required_item {
        Some(req) if !state.holds(req) => None,
        _ => Some(exit.dest.clone()),
    }
}

fn container_here(state: &WorldState, spec: &WorldSpec, id: &str) -> bool {
    spec.container(id)
        .map(|c| c.room_id == state.current_room)
        .unwrap_or(false)
}

/// Builds the observation of `state` tagged with `last_result`.
pub fn observe(state: &WorldState, spec: &WorldSpec, last_result: ActionResult) -> Observation {
    let room = spec.room(&state.current_room);
    let visible = visible_items(state, spec);
    let exits: Vec<Direction> = Direction::ALL
        .into_iter()
        .filter(|d| exit_passable(state, spec, *d).is_some())
        .collect();

    let mut text = match room {
        Some(r) => format!("{}. {}", r.name, r.description),
        None => state.current_room.clone(),
    };
    for c in spec.containers.iter().filter(|c| c.room_id == state.current_room) {
        let status = if state.is_open(&c.id) { "open" } else { "closed" };
        text.push_str(&format!(" There is a {} here ({status}).", c.name));
    }
    if !visible.is_empty() {
        let names: Vec<&str> = visible
            .iter()
            .filter_map(|id| spec.item(id).map(|i| i.name.as_str()))
            .collect();
        text.push_str(&format!(" You see: {}.", names.join(", ")));
    }
    if exits.is_empty() {
        text.push_str(" There are no exits.");
    } else {
        let names: Vec<&str> = exits.iter().map(|d| d.name()).collect();
        text.push_str(&format!(" Exits: {}.", names.join(", ")));
    }

    Observation {
        room_id: state.current_room.clone(),
        description_text: text,
        visible_items: visible,
        available_exits: exits,
        last_result,
    }
}

fn apply(next: &mut WorldState, action: &Action, spec: &WorldSpec) -> ActionResult {
    use ActionResult::*;

    if let Some(obj) = action.object() {
        if !spec.is_object(obj) {
            return UnknownObject;
        }
    }

    match action {
        Action::Move(dir) => match exit_passable(next, spec, *dir) {
            Some(dest) => {
                next.current_room = dest;
                Ok
            }
            None => Blocked,
        },
        Action::Open(obj) => {
            if spec.container(obj).is_some() {
                if !container_here(next, spec, obj) {
                    NothingHappens
                } else if next.is_open(obj) {
                    Blocked
                } else {
                    next.container_flags.insert(obj.clone(), true);
                    Ok
                }
            } else if next.holds(obj) || visible_items(next, spec).contains(obj) {
                Blocked
            } else {
                NothingHappens
            }
        }
        Action::Take(obj) => {
            if let Some(item) = spec.item(obj) {
                if next.holds(obj) {
                    Blocked
                } else if visible_items(next, spec).contains(obj) {
                    if item.portable {
                        next.item_locations.insert(obj.clone(), Location::Inventory);
                        Ok
                    } else {
                        Blocked
                    }
                } else {
                    NothingHappens
                }
            } else if container_here(next, spec, obj) {
                Blocked
            } else {
                NothingHappens
            }
        }
        Action::Drop(obj) => {
            if next.holds(obj) {
                let here = Location::Room(next.current_room.clone());
                next.item_locations.insert(obj.clone(), here);
                Ok
            } else if visible_items(next, spec).contains(obj) || container_here(next, spec, obj)
            {
                Blocked
            } else {
                NothingHappens
            }
        }
        Action::Look | Action::Inventory => Ok,
    }
}

/// Applies `action`. Failed actions leave the state unchanged apart from the
/// step counter.
pub fn step(
    state: &WorldState,
    action: &Action,
    spec: &WorldSpec,
) -> Result<(WorldState, Observation), StepError> {
    if state.done {
        return Err(StepError::EpisodeFinished);
    }
    let mut next = state.clone();
    let mut result = apply(&mut next, action, spec);
    if !result.succeeded() {
        next = state.clone();
    }
    next.step_count += 1;
    if result == ActionResult::Ok && is_goal(&next, spec) {
        next.done = true;
        result = ActionResult::GoalReached;
    }
    let obs = observe(&next, spec, result);
    Ok((next, obs))
}

/// Actions that succeed from `state`, in a fixed order: moves (N, S, E, W),
/// then opens, takes and drops each by object id, then look and inventory.
pub fn legal_actions(state: &WorldState, spec: &WorldSpec) -> Vec<Action> {
    if state.done {
        return Vec::new();
    }
    let mut out: Vec<Action> = Direction::ALL
        .into_iter()
        .filter(|d| exit_passable(state, spec, *d).is_some())
        .map(Action::Move)
        .collect();

    let mut closed_here: Vec<&str> = spec
        .containers
        .iter()
        .filter(|c| c.room_id == state.current_room && !state.is_open(&c.id))
        .map(|c| c.id.as_str())
        .collect();
    closed_here.sort_unstable();
    out.extend(closed_here.into_iter().map(|c| Action::Open(c.to_string())));

    // visible_items iterates a BTreeMap, so ids are already sorted
    out.extend(
        visible_items(state, spec)
            .into_iter()
            .filter(|id| spec.item(id).map(|i| i.portable).unwrap_or(false))
            .map(Action::Take),
    );
    out.extend(
        state
            .inventory()
            .into_iter()
            .map(|id| Action::Drop(id.to_string())),
    );
    out.push(Action::Look);
    out.push(Action::Inventory);
    out
}
