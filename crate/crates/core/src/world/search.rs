//! Breadth-first search over world states.

use std::collections::{HashMap, VecDeque};

use super::action::Action;
use super::engine::{initial_state, legal_actions, step, WorldState};
use super::spec::WorldSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Solved(Vec<Action>),
    Unreachable,
    BudgetExceeded,
}

fn key(state: &WorldState) -> WorldState {
    WorldState {
        step_count: 0,
        ..state.clone()
    }
}

/// Shortest winning action sequence from the start state. Ties resolve to
/// the first sequence in legal-action order.
pub fn shortest_solution(spec: &WorldSpec, budget: usize) -> SearchOutcome {
    let start = initial_state(spec);
    let mut nodes: Vec<(WorldState, Option<(usize, Action)>)> = vec![(key(&start), None)];
    let mut seen: HashMap<WorldState, usize> = HashMap::from([(key(&start), 0)]);
    let mut queue = VecDeque::from([0usize]);

    while let Some(idx) = queue.pop_front() {
        let state = nodes[idx].0.clone();
        for action in legal_actions(&state, spec) {
            let Ok((next, _)) = step(&state, &action, spec) else {
                continue;
            };
            if next.done {
                let mut path = vec![action];
                let mut cursor = idx;
                while let Some((parent, act)) = nodes[cursor].1.clone() {
                    path.push(act);
                    cursor = parent;
                }
                path.reverse();
                return SearchOutcome::Solved(path);
            }
            let k = key(&next);
            if seen.contains_key(&k) {
                continue;
            }
            if nodes.len() >= budget {
                return SearchOutcome::BudgetExceeded;
            }
            seen.insert(k.clone(), nodes.len());
            nodes.push((k, Some((idx, action))));
            queue.push_back(nodes.len() - 1);
        }
    }
    SearchOutcome::Unreachable
}

/// Every non-terminal state reachable from the start, in BFS order, with
/// step counts zeroed. `None` if more than `budget` states exist.
pub fn reachable_states(spec: &WorldSpec, budget: usize) -> Option<Vec<WorldState>> {
    let start = key(&initial_state(spec));
    let mut out = vec![start.clone()];
    let mut seen = std::collections::HashSet::from([start]);
    let mut cursor = 0;
    while cursor < out.len() {
        let state = out[cursor].clone();
        cursor += 1;
        for action in legal_actions(&state, spec) {
            let Ok((next, _)) = step(&state, &action, spec) else {
                continue;
            };
            if next.done {
                continue;
            }
            let k = key(&next);
            if seen.insert(k.clone()) {
                if out.len() >= budget {
                    return None;
                }
                out.push(k);
            }
        }
    }
    Some(out)
}

/// Replays `actions` from the start state; true iff the last one reaches the goal.
pub fn replay_reaches_goal(spec: &WorldSpec, actions: &[Action]) -> bool {
    let mut state = initial_state(spec);
    for action in actions {
        match step(&state, action, spec) {
            Ok((next, _)) => state = next,
            Err(_) => return false,
        }
    }
    state.done
}
