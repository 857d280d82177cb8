use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::world::Action;

/// Value estimates keyed by state digest, then canonical action text.
/// Missing keys read as 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub values: BTreeMap<String, BTreeMap<String, f64>>,
}

impl PolicyState {
    pub fn value(&self, digest: &str, action: &Action) -> f64 {
        self.values
            .get(digest)
            .and_then(|m| m.get(&action.canonical_text()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state_digest: String,
    pub action: Action,
    pub reward: f64,
}

/// Advantage-weighted value update.
///
/// Each transition gets a batch weight w_i = exp(r_i / kl_scale) / Z. Every
/// touched key moves by `learning_rate × Σ w_i (r_i − v)` over the transitions
/// sharing that key, all computed from the pre-update values. `kl_scale` may be
/// infinite, which makes the weights uniform.
pub fn update_policy(
    policy: &PolicyState,
    transitions: &[Transition],
    learning_rate: f64,
    kl_scale: f64,
) -> Result<PolicyState, AgentError> {
    if !(learning_rate > 0.0 && learning_rate <= 1.0) {
        return Err(AgentError::InvalidUpdate(format!(
            "learning_rate {learning_rate} outside (0, 1]"
        )));
    }
    if !(kl_scale > 0.0) {
        return Err(AgentError::InvalidUpdate(format!(
            "kl_scale {kl_scale} must be positive"
        )));
    }
    if transitions.iter().any(|t| !t.reward.is_finite()) {
        return Err(AgentError::InvalidUpdate("non-finite reward".into()));
    }
    if transitions.is_empty() {
        return Ok(policy.clone());
    }

    let max = transitions
        .iter()
        .map(|t| t.reward)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = transitions
        .iter()
        .map(|t| ((t.reward - max) / kl_scale).exp())
        .collect();
    let z: f64 = raw.iter().sum();

    let mut deltas: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (t, w) in transitions.iter().zip(&raw) {
        let v = policy.value(&t.state_digest, &t.action);
        *deltas
            .entry((t.state_digest.clone(), t.action.canonical_text()))
            .or_default() += (w / z) * (t.reward - v);
    }

    let mut next = policy.clone();
    for ((digest, action), delta) in deltas {
        let slot = next.values.entry(digest).or_default().entry(action).or_insert(0.0);
        *slot += learning_rate * delta;
    }
    Ok(next)
}
