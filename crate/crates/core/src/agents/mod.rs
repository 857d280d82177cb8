//! Player agents: temperature-controlled policies over the legal actions.
//!
//! The native [`AgentBackend::ValueSoftmax`] policy scores each legal action
//! as its learned value plus a memory bonus and samples from
//! softmax(score / temperature). Scripted agents replay a fixed list and
//! external agents ask a language model through the gateway.

mod memory;
mod policy;
mod prompt;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::Critique;
use crate::gateway::{extract_action, GatewayError};
use crate::world::{Action, Observation};

pub use memory::{attention_weights, MemoryBuffer, MemoryEntry};
pub use policy::{update_policy, PolicyState, Transition};
pub use prompt::{
    format_prompt, template_hash, Prompt, PromptContext, MEMORY_LINES, PROMPT_TEMPLATE_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentBackend {
    /// Plays `actions[step]`, legal or not; "look" once the list runs out.
    Scripted { actions: Vec<Action> },
    ValueSoftmax,
    External { backend_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub agent_id: String,
    pub temperature: f64,
    pub backend: AgentBackend,
    #[serde(default)]
    pub role_label: String,
}

impl AgentConfig {
    pub fn value_softmax(agent_id: &str, temperature: f64) -> Self {
        AgentConfig {
            agent_id: agent_id.to_string(),
            temperature,
            backend: AgentBackend::ValueSoftmax,
            role_label: format!("player at temperature {temperature}"),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.temperature >= 0.0) || self.temperature.is_infinite() {
            return Err(AgentError::InvalidConfig(format!(
                "agent {}: temperature must be finite and >= 0",
                self.agent_id
            )));
        }
        if self.agent_id.is_empty() {
            return Err(AgentError::InvalidConfig("empty agent_id".into()));
        }
        Ok(())
    }
}

/// Tunables shared by every agent in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentParams {
    /// Size of the memory bonus per attention-weighted entry.
    pub bonus_scale: f64,
    /// Score added to the critic's recommended action. Off by default, so the
    /// native policy learns only from rewards and memory.
    pub critique_bonus: f64,
    pub learning_rate: f64,
    pub kl_scale: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            bonus_scale: 0.5,
            critique_bonus: 0.0,
            learning_rate: 0.5,
            kl_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub chosen: Action,
    /// Canonical action text → probability.
    pub distribution: BTreeMap<String, f64>,
    /// Set when an external reply could not be matched and "look" was played instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("no legal actions")]
    NoLegalActions,
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid policy update: {0}")]
    InvalidUpdate(String),
    #[error("agent needs backend {0:?} but no gateway is available")]
    NoGateway(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Source of replies for [`AgentBackend::External`] agents.
pub trait ExternalPlayer: Sync {
    fn reply(&self, backend_id: &str, prompt: &Prompt, temperature: f64)
        -> Result<String, GatewayError>;
}

/// Everything an agent sees when choosing its next action.
#[derive(Debug, Clone, Copy)]
pub struct ProposalInput<'a> {
    pub step: usize,
    pub observation: &'a Observation,
    pub digest: &'a str,
    pub legal: &'a [Action],
    pub memory: &'a MemoryBuffer,
    pub critique: Option<&'a Critique>,
    pub policy: &'a PolicyState,
    pub goal_text: &'a str,
}

/// Policy value plus memory and critique bonuses, one per legal action.
pub fn action_scores(input: &ProposalInput<'_>, params: &AgentParams) -> Vec<f64> {
    let weights = attention_weights(input.memory, input.digest);
    let recommended = input.critique.and_then(|c| c.recommended_action.as_ref());
    input
        .legal
        .iter()
        .map(|a| {
            let mut score = input.policy.value(input.digest, a);
            for (e, w) in input.memory.iter().zip(&weights) {
                if e.state_digest == input.digest && e.action == *a {
                    let sign = if e.reward.value > 0.0 {
                        1.0
                    } else if e.reward.value < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    score += w * sign * params.bonus_scale;
                }
            }
            if recommended == Some(a) {
                score += params.critique_bonus;
            }
            score
        })
        .collect()
}

/// softmax(scores / temperature); temperature 0 puts all mass on the first
/// maximum.
pub fn softmax_distribution(scores: &[f64], temperature: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if temperature == 0.0 {
        let first = scores.iter().position(|s| *s == max).unwrap_or(0);
        let mut out = vec![0.0; scores.len()];
        out[first] = 1.0;
        return out;
    }
    let raw: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / z).collect()
}

/// Index picked by one uniform draw `u` in [0, 1), skipping zero-mass entries.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        last_positive = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

fn point_mass(action: &Action) -> BTreeMap<String, f64> {
    BTreeMap::from([(action.canonical_text(), 1.0)])
}

/// Chooses an action. Every call consumes exactly one draw from `rng`, whatever
/// the backend, so per-agent streams stay aligned across runs.
pub fn propose_action<R: Rng + ?Sized>(
    config: &AgentConfig,
    input: &ProposalInput<'_>,
    params: &AgentParams,
    rng: &mut R,
    external: Option<&dyn ExternalPlayer>,
) -> Result<ActionProposal, AgentError> {
    let u: f64 = rng.random();
    if input.legal.is_empty() {
        return Err(AgentError::NoLegalActions);
    }
    match &config.backend {
        AgentBackend::Scripted { actions } => {
            let chosen = actions.get(input.step).cloned().unwrap_or(Action::Look);
            Ok(ActionProposal {
                distribution: point_mass(&chosen),
                chosen,
                extraction_error: None,
            })
        }
        AgentBackend::ValueSoftmax => {
            let scores = action_scores(input, params);
            let probs = softmax_distribution(&scores, config.temperature);
            let chosen = input.legal[sample_index(&probs, u)].clone();
            let mut distribution = BTreeMap::new();
            for (a, p) in input.legal.iter().zip(probs) {
                *distribution.entry(a.canonical_text()).or_insert(0.0) += p;
            }
            Ok(ActionProposal {
                chosen,
                distribution,
                extraction_error: None,
            })
        }
        AgentBackend::External { backend_id } => {
            let external = external.ok_or_else(|| AgentError::NoGateway(backend_id.clone()))?;
            let context = PromptContext {
                agent_id: config.agent_id.clone(),
                role_label: config.role_label.clone(),
                goal_text: input.goal_text.to_string(),
            };
            let prompt = format_prompt(
                &context,
                input.observation,
                input.digest,
                input.legal,
                input.memory,
                input.critique,
            );
            let reply = external.reply(backend_id, &prompt, config.temperature)?;
            let (chosen, extraction_error) = match extract_action(&reply, input.legal) {
                Ok(a) => (a, None),
                Err(e) => (Action::Look, Some(e.to_string())),
            };
            Ok(ActionProposal {
                distribution: point_mass(&chosen),
                chosen,
                extraction_error,
            })
        }
    }
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}
