//! Swarm orchestration.
//!
//! Every agent plays its own replica of the world. Within a step each live
//! agent receives a critique (when a critic is present), proposes an action
//! from its own rng stream, steps its replica and is scored. Only after all
//! agents have acted are the outcomes appended to the shared memory as one
//! batch, so no agent ever sees a peer's outcome from the same step.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    propose_action, update_policy, AgentConfig, AgentError, AgentParams, ExternalPlayer,
    MemoryBuffer, MemoryEntry, PolicyState, ProposalInput, Transition,
};
use crate::critic::{Critique, RewardModel, RewardSignal};
use crate::digest::hash64;
use crate::world::{
    legal_actions, observe, reset, state_digest, step, Action, ActionResult, GoalAtom,
    Observation, StepError, WorldSpec, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwarmMode {
    Solo,
    SoloCritic,
    SwarmCritic,
}

impl SwarmMode {
    pub const ALL: [SwarmMode; 3] = [SwarmMode::Solo, SwarmMode::SoloCritic, SwarmMode::SwarmCritic];

    pub fn name(self) -> &'static str {
        match self {
            SwarmMode::Solo => "solo",
            SwarmMode::SoloCritic => "solo_critic",
            SwarmMode::SwarmCritic => "swarm_critic",
        }
    }

    pub fn has_critic(self) -> bool {
        self != SwarmMode::Solo
    }

    pub fn single_agent(self) -> bool {
        self != SwarmMode::SwarmCritic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub agents: Vec<AgentConfig>,
    pub max_steps: usize,
    /// `None` keeps every entry.
    #[serde(default)]
    pub memory_window: Option<usize>,
    pub seed: u64,
    pub mode: SwarmMode,
    #[serde(default)]
    pub params: AgentParams,
}

impl SwarmConfig {
    /// Checks the invariants and returns warnings for legal but suspicious
    /// setups (currently: repeated temperatures).
    pub fn validate(&self) -> Result<Vec<String>, SwarmError> {
        if self.agents.is_empty() {
            return Err(SwarmError::ConfigInvalid("at least one agent is required".into()));
        }
        if self.mode.single_agent() && self.agents.len() != 1 {
            return Err(SwarmError::ConfigInvalid(format!(
                "mode {} runs exactly one agent, got {}",
                self.mode.name(),
                self.agents.len()
            )));
        }
        if self.max_steps == 0 {
            return Err(SwarmError::ConfigInvalid("max_steps must be positive".into()));
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            a.validate()
                .map_err(|e| SwarmError::ConfigInvalid(e.to_string()))?;
            if !ids.insert(a.agent_id.as_str()) {
                return Err(SwarmError::ConfigInvalid(format!(
                    "duplicate agent_id {}",
                    a.agent_id
                )));
            }
        }
        let mut warnings = Vec::new();
        let mut seen: BTreeMap<u64, &str> = BTreeMap::new();
        for a in &self.agents {
            if let Some(prev) = seen.insert(a.temperature.to_bits(), &a.agent_id) {
                warnings.push(format!(
                    "agents {prev} and {} share temperature {}",
                    a.agent_id, a.temperature
                ));
            }
        }
        Ok(warnings)
    }
}

/// What one agent did in one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub state_digest: String,
    pub critique: Option<Critique>,
    pub action: Option<Action>,
    pub distribution: Option<BTreeMap<String, f64>>,
    pub result: Option<ActionResult>,
    pub reward: Option<RewardSignal>,
    pub post_digest: String,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub per_agent: BTreeMap<String, AgentStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub winner: String,
    pub criterion: String,
    pub tie_break: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub cumulative_reward: f64,
    pub success: bool,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub mode: SwarmMode,
    pub per_agent: BTreeMap<String, AgentOutcome>,
    pub step_records: Vec<StepRecord>,
    pub selection: SelectionResult,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Set when a step failed; the records up to that point are kept.
    #[serde(default)]
    pub error: Option<String>,
}

impl EpisodeResult {
    /// Whether the selected agent reached the goal.
    pub fn winner_success(&self) -> bool {
        self.per_agent
            .get(&self.selection.winner)
            .map(|o| o.success)
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwarmError {
    #[error("invalid swarm configuration: {0}")]
    ConfigInvalid(String),
    #[error("agent {agent_id}: {source}")]
    Agent {
        agent_id: String,
        #[source]
        source: AgentError,
    },
    #[error("agent {agent_id}: {source}")]
    World {
        agent_id: String,
        #[source]
        source: StepError,
    },
    #[error("no live agents left")]
    AllDone,
}

/// Per-agent mutable state for one episode.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub config: AgentConfig,
    pub state: WorldState,
    pub observation: Observation,
    pub rng: ChaCha8Rng,
    pub policy: PolicyState,
    pub cumulative_reward: f64,
    pub steps_taken: usize,
    pub success: bool,
}

impl AgentRuntime {
    pub fn new(config: AgentConfig, spec: &WorldSpec, seed: u64) -> Result<Self, StepError> {
        let state = reset(spec)?;
        let observation = observe(&state, spec, ActionResult::Ok);
        let rng = ChaCha8Rng::seed_from_u64(agent_seed(seed, &config.agent_id));
        Ok(AgentRuntime {
            config,
            state,
            observation,
            rng,
            policy: PolicyState::default(),
            cumulative_reward: 0.0,
            steps_taken: 0,
            success: false,
        })
    }
}

/// Per-agent stream seed: seed XOR hash64(agent_id).
pub fn agent_seed(seed: u64, agent_id: &str) -> u64 {
    seed ^ hash64(agent_id)
}

/// Shared, read-only inputs to a step.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub spec: &'a WorldSpec,
    pub critic: Option<&'a RewardModel>,
    pub params: &'a AgentParams,
    pub episode_id: &'a str,
    pub goal_text: &'a str,
    pub external: Option<&'a dyn ExternalPlayer>,
    pub parallel: bool,
}

/// A successful step for one agent, applied only once every agent succeeded.
struct Pending {
    record: AgentStep,
    next: Option<(WorldState, Observation)>,
}

/// Proposes, steps and scores without touching the agent's episode state;
/// only its rng advances.
fn act_one(
    ctx: &StepContext<'_>,
    step_index: usize,
    agent: &mut AgentRuntime,
    memory: &MemoryBuffer,
) -> Result<Pending, SwarmError> {
    let digest = state_digest(&agent.state);
    if agent.state.done {
        return Ok(Pending {
            record: AgentStep {
                state_digest: digest.clone(),
                critique: None,
                action: None,
                distribution: None,
                result: None,
                reward: None,
                post_digest: digest,
                done: true,
            },
            next: None,
        });
    }
    let agent_id = agent.config.agent_id.clone();
    let legal = legal_actions(&agent.state, ctx.spec);
    let critique = ctx.critic.map(|c| c.critique(&digest, &legal));
    let input = ProposalInput {
        step: step_index,
        observation: &agent.observation,
        digest: &digest,
        legal: &legal,
        memory,
        critique: critique.as_ref(),
        policy: &agent.policy,
        goal_text: ctx.goal_text,
    };
    let proposal = propose_action(&agent.config, &input, ctx.params, &mut agent.rng, ctx.external)
        .map_err(|source| SwarmError::Agent {
            agent_id: agent_id.clone(),
            source,
        })?;
    let (next, obs) = step(&agent.state, &proposal.chosen, ctx.spec).map_err(|source| {
        SwarmError::World {
            agent_id: agent_id.clone(),
            source,
        }
    })?;
    let post_digest = state_digest(&next);
    let goal_reached = obs.last_result == ActionResult::GoalReached;
    let was_legal = legal.contains(&proposal.chosen);
    let reward = match ctx.critic {
        Some(c) => c.score(&digest, &proposal.chosen, &post_digest, goal_reached, was_legal),
        None => RewardSignal::UNSCORED,
    };

    Ok(Pending {
        record: AgentStep {
            state_digest: digest,
            critique,
            action: Some(proposal.chosen),
            distribution: Some(proposal.distribution),
            result: Some(obs.last_result),
            reward: Some(reward),
            post_digest,
            done: next.done,
        },
        next: Some((next, obs)),
    })
}

/// Appends the step's outcomes in agent-id order.
pub fn broadcast_memory(record: &StepRecord, memory: &MemoryBuffer, episode_id: &str) -> MemoryBuffer {
    let batch = record.per_agent.iter().filter_map(|(id, s)| {
        let (action, reward) = (s.action.clone()?, s.reward?);
        Some(MemoryEntry {
            episode_id: episode_id.to_string(),
            step: record.step,
            agent_id: id.clone(),
            state_digest: s.state_digest.clone(),
            action,
            reward,
            critique: s.critique.clone(),
        })
    });
    memory.appended(batch)
}

/// Runs one step for every agent. `agents` must be sorted by agent id.
/// Returns the record and the memory for the next step; policies are updated
/// from the same batch after the broadcast. On error no agent state changes
/// except rng positions.
pub fn run_step(
    ctx: &StepContext<'_>,
    step_index: usize,
    agents: &mut [AgentRuntime],
    memory: &MemoryBuffer,
) -> Result<(StepRecord, MemoryBuffer), SwarmError> {
    if agents.iter().all(|a| a.state.done) {
        return Err(SwarmError::AllDone);
    }
    let acted: Vec<Result<Pending, SwarmError>> = if ctx.parallel {
        agents
            .par_iter_mut()
            .map(|a| act_one(ctx, step_index, a, memory))
            .collect()
    } else {
        agents
            .iter_mut()
            .map(|a| act_one(ctx, step_index, a, memory))
            .collect()
    };

    // Nothing is committed unless every agent's step succeeded, so a failed
    // step leaves no partial rewards behind.
    let acted: Vec<Pending> = acted.into_iter().collect::<Result<_, _>>()?;
    let mut per_agent = BTreeMap::new();
    for (agent, pending) in agents.iter_mut().zip(acted) {
        if let Some((next, obs)) = pending.next {
            agent.cumulative_reward += pending.record.reward.map(|r| r.value).unwrap_or(0.0);
            agent.steps_taken += 1;
            agent.success |= obs.last_result == ActionResult::GoalReached;
            agent.state = next;
            agent.observation = obs;
        }
        per_agent.insert(agent.config.agent_id.clone(), pending.record);
    }
    let record = StepRecord {
        step: step_index,
        per_agent,
    };
    let next_memory = broadcast_memory(&record, memory, ctx.episode_id);

    let transitions: Vec<Transition> = record
        .per_agent
        .values()
        .filter_map(|s| {
            Some(Transition {
                state_digest: s.state_digest.clone(),
                action: s.action.clone()?,
                reward: s.reward?.value,
            })
        })
        .collect();
    for agent in agents.iter_mut() {
        agent.policy = update_policy(
            &agent.policy,
            &transitions,
            ctx.params.learning_rate,
            ctx.params.kl_scale,
        )
        .map_err(|source| SwarmError::Agent {
            agent_id: agent.config.agent_id.clone(),
            source,
        })?;
    }
    Ok((record, next_memory))
}

/// Highest cumulative reward; ties go to the lowest agent id.
pub fn select_best<'a, I>(outcomes: I) -> Option<SelectionResult>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut best: Option<(&str, f64)> = None;
    for (id, reward) in outcomes {
        best = match best {
            None => Some((id, reward)),
            Some((bid, br)) => {
                let better = reward > br || (reward == br && id < bid);
                if better {
                    Some((id, reward))
                } else {
                    Some((bid, br))
                }
            }
        };
    }
    best.map(|(winner, _)| SelectionResult {
        winner: winner.to_string(),
        criterion: "max cumulative reward".into(),
        tie_break: "lowest agent id".into(),
    })
}

/// Plain-language rendering of the goal predicate.
pub fn goal_text(spec: &WorldSpec) -> String {
    let parts: Vec<String> = spec
        .goal
        .atoms
        .iter()
        .map(|atom| match atom {
            GoalAtom::AtRoom(r) => format!(
                "be in the {}",
                spec.room(r).map(|x| x.name.as_str()).unwrap_or(r)
            ),
            GoalAtom::Holds(i) => format!(
                "hold the {}",
                spec.item(i).map(|x| x.name.as_str()).unwrap_or(i)
            ),
            GoalAtom::ContainerOpen(c) => format!(
                "have the {} open",
                spec.container(c).map(|x| x.name.as_str()).unwrap_or(c)
            ),
        })
        .collect();
    format!("You must {}.", parts.join(" and "))
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOptions {
    pub episode_id: String,
    pub parallel: bool,
}

/// Plays one episode to completion or `max_steps`.
///
/// Configuration problems are returned as errors. A failure during play ends
/// the episode early; the partial result carries the message in `error`.
pub fn run_episode(
    config: &SwarmConfig,
    spec: &WorldSpec,
    critic: Option<&RewardModel>,
    external: Option<&dyn ExternalPlayer>,
    options: &EpisodeOptions,
) -> Result<EpisodeResult, SwarmError> {
    let warnings = config.validate()?;
    if config.mode.has_critic() != critic.is_some() {
        return Err(SwarmError::ConfigInvalid(format!(
            "mode {} {} a critic",
            config.mode.name(),
            if config.mode.has_critic() {
                "requires"
            } else {
                "must not be given"
            }
        )));
    }
    if let Some(c) = critic {
        if c.world_id != spec.world_id {
            return Err(SwarmError::ConfigInvalid(format!(
                "critic is for world {}, not {}",
                c.world_id, spec.world_id
            )));
        }
    }

    let mut configs = config.agents.clone();
    configs.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    let mut agents = Vec::with_capacity(configs.len());
    for c in configs {
        let id = c.agent_id.clone();
        agents.push(
            AgentRuntime::new(c, spec, config.seed)
                .map_err(|e| SwarmError::ConfigInvalid(format!("agent {id}: {e}")))?,
        );
    }

    let goal = goal_text(spec);
    let ctx = StepContext {
        spec,
        critic,
        params: &config.params,
        episode_id: &options.episode_id,
        goal_text: &goal,
        external,
        parallel: options.parallel,
    };
    let mut memory = MemoryBuffer::new(config.memory_window);
    let mut records = Vec::new();
    let mut error = None;
    for t in 0..config.max_steps {
        if agents.iter().all(|a| a.state.done) {
            break;
        }
        match run_step(&ctx, t, &mut agents, &memory) {
            Ok((record, next)) => {
                records.push(record);
                memory = next;
            }
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }

    let per_agent: BTreeMap<String, AgentOutcome> = agents
        .iter()
        .map(|a| {
            (
                a.config.agent_id.clone(),
                AgentOutcome {
                    cumulative_reward: a.cumulative_reward,
                    success: a.success,
                    steps_taken: a.steps_taken,
                },
            )
        })
        .collect();
    let selection = select_best(
        per_agent
            .iter()
            .map(|(id, o)| (id.as_str(), o.cumulative_reward)),
    )
    .expect("at least one agent");
    Ok(EpisodeResult {
        episode_id: options.episode_id.clone(),
        mode: config.mode,
        per_agent,
        step_records: records,
        selection,
        warnings,
        error,
    })
}
