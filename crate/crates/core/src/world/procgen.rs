//! Seeded grid-world generator.
//!
//! Open cells become rooms joined by 4-neighbourhood exits; wall cells are
//! left out entirely. Keys are dropped along the way and their doors gate
//! every exit into a cell on the shortest start-goal path. Each candidate is
//! solved by search before it is returned, and the solution is stored as the
//! world's certificate.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::Direction;
use super::search::{shortest_solution, SearchOutcome};
use super::spec::{Exit, GoalAtom, GoalPredicate, Item, Room, WorldSpec, SEARCH_BUDGET};
use super::WORLD_FORMAT_VERSION;

/// Attempts per call; attempt `a` uses sub-seed `seed ^ a`.
pub const MAX_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcgenParams {
    pub seed: u64,
    pub grid_width: u32,
    pub grid_height: u32,
    pub wall_density: f64,
    #[serde(default)]
    pub n_keys: u32,
    pub min_goal_distance: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("invalid procgen parameters: {0}")]
    InvalidParams(String),
    #[error("no solvable world after {attempts} attempts")]
    GenerationFailed { attempts: u64 },
}

impl ProcgenParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.grid_width < 3 || self.grid_height < 3 {
            return Err(GenerationError::InvalidParams(
                "grid dimensions must be at least 3".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.wall_density) {
            return Err(GenerationError::InvalidParams(
                "wall_density must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct Cell {
    x: u32,
    y: u32,
}

impl Cell {
    fn id(self) -> String {
        format!("cell_{}_{}", self.x, self.y)
    }
}

struct Grid {
    width: u32,
    height: u32,
    wall: Vec<bool>,
}

impl Grid {
    fn open(&self, c: Cell) -> bool {
        !self.wall[(c.y * self.width + c.x) as usize]
    }

    fn neighbour(&self, c: Cell, d: Direction) -> Option<Cell> {
        let (x, y) = (c.x as i64, c.y as i64);
        let (nx, ny) = match d {
            Direction::North => (x, y - 1),
            Direction::South => (x, y + 1),
            Direction::East => (x + 1, y),
            Direction::West => (x - 1, y),
        };
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return None;
        }
        let n = Cell {
            x: nx as u32,
            y: ny as u32,
        };
        self.open(n).then_some(n)
    }

    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell { x, y }))
    }

    /// BFS from `from` avoiding `blocked`; returns distance and parent maps.
    fn bfs(&self, from: Cell, blocked: &[Cell]) -> BTreeMap<Cell, (u32, Option<Cell>)> {
        let mut out = BTreeMap::from([(from, (0, None))]);
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            let dist = out[&c].0;
            for d in Direction::ALL {
                if let Some(n) = self.neighbour(c, d) {
                    if blocked.contains(&n) || out.contains_key(&n) {
                        continue;
                    }
                    out.insert(n, (dist + 1, Some(c)));
                    queue.push_back(n);
                }
            }
        }
        out
    }
}

fn attempt(params: &ProcgenParams, sub_seed: u64) -> Option<WorldSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let grid = Grid {
        width: params.grid_width,
        height: params.grid_height,
        wall: (0..params.grid_width * params.grid_height)
            .map(|_| rng.random::<f64>() < params.wall_density)
            .collect(),
    };
    let open: Vec<Cell> = grid.cells().filter(|c| grid.open(*c)).collect();
    if open.len() < 2 {
        return None;
    }
    let start = open[rng.random_range(0..open.len())];
    let from_start = grid.bfs(start, &[]);
    let far: Vec<Cell> = from_start
        .iter()
        .filter(|(_, (dist, _))| *dist >= params.min_goal_distance.max(1))
        .map(|(c, _)| *c)
        .collect();
    if far.is_empty() {
        return None;
    }
    let goal = far[rng.random_range(0..far.len())];

    let mut path = vec![goal];
    while let Some(parent) = from_start[path.last()?].1 {
        path.push(parent);
    }
    path.reverse();

    let interior = path.len().saturating_sub(2);
    let n_keys = params.n_keys as usize;
    if n_keys > interior {
        return None;
    }
    let mut door_positions = sample(&mut rng, interior, n_keys).into_vec();
    door_positions.sort_unstable();
    let doors: Vec<Cell> = door_positions.iter().map(|p| path[p + 1]).collect();

    let mut items = Vec::new();
    for (i, _) in doors.iter().enumerate() {
        let region: Vec<Cell> = grid
            .bfs(start, &doors[i..])
            .into_keys()
            .filter(|c| !doors.contains(c))
            .collect();
        let spot = region[rng.random_range(0..region.len())];
        items.push(Item {
            id: format!("key_{i}"),
            name: format!("key {i}"),
            initial_location: spot.id(),
            portable: true,
        });
    }

    let rooms = open
        .iter()
        .map(|c| Room {
            id: c.id(),
            name: format!("Cell ({}, {})", c.x, c.y),
            description: format!("A bare grid chamber at column {}, row {}.", c.x, c.y),
        })
        .collect();
    let mut exits = BTreeMap::new();
    for c in &open {
        let mut dirs = BTreeMap::new();
        for d in Direction::ALL {
            if let Some(n) = grid.neighbour(*c, d) {
                let required_item = doors.iter().position(|door| *door == n).map(|i| format!("key_{i}"));
                dirs.insert(
                    d,
                    Exit {
                        dest: n.id(),
                        required_item,
                    },
                );
            }
        }
        if !dirs.is_empty() {
            exits.insert(c.id(), dirs);
        }
    }

    let mut spec = WorldSpec {
        format_version: WORLD_FORMAT_VERSION,
        world_id: format!(
            "procgen_s{}_{}x{}",
            params.seed, params.grid_width, params.grid_height
        ),
        rooms,
        exits,
        items,
        containers: Vec::new(),
        start_room: start.id(),
        goal: GoalPredicate {
            atoms: vec![GoalAtom::AtRoom(goal.id())],
        },
        max_steps_hint: 0,
        certificate: None,
    };
    spec.validate_structure().ok()?;
    match shortest_solution(&spec, SEARCH_BUDGET) {
        SearchOutcome::Solved(solution) => {
            spec.max_steps_hint = 3 * solution.len() as u32;
            spec.certificate = Some(solution);
            Some(spec)
        }
        _ => None,
    }
}

/// Deterministic in `params`; retries with sub-seeds before giving up.
pub fn generate_world(params: &ProcgenParams) -> Result<WorldSpec, GenerationError> {
    params.validate()?;
    (0..MAX_ATTEMPTS)
        .find_map(|a| attempt(params, params.seed ^ a))
        .ok_or(GenerationError::GenerationFailed {
            attempts: MAX_ATTEMPTS,
        })
}
