use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use swarmplay::agents::{AgentConfig, AgentParams};
use swarmplay::critic::{build_reward_model, RewardConfig, RewardModel};
use swarmplay::digest::hash64;
use swarmplay::fixtures;
use swarmplay::gateway::{CassetteMode, GatewayConfig};
use swarmplay::swarm::{SwarmConfig, SwarmMode};
use swarmplay::trace::{build_outline, parse_trace, synthetic_trace, ExpertTrace, OutlineOptions};
use swarmplay::world::search::{shortest_solution, SearchOutcome};
use swarmplay::world::{
    generate_world, load_world, Action, GenerationError, ProcgenParams, WorldSpec, SEARCH_BUDGET,
};

use crate::HarnessError;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Where episode worlds come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldSource {
    /// A world shipped with the library, with its expert trace.
    Bundled { name: String },
    /// A world file relative to the manifest.
    Path { path: PathBuf },
    /// One generated world used for every episode.
    Procgen { params: ProcgenParams },
    /// A different generated world per episode index. World `i` uses
    /// `template.seed ^ hash64("world:{i}")`; every condition sees the same
    /// world for the same index.
    ProcgenSeries { template: ProcgenParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmTemplate {
    pub agents: Vec<AgentConfig>,
    pub max_steps: usize,
    #[serde(default)]
    pub memory_window: Option<usize>,
    #[serde(default)]
    pub params: AgentParams,
    /// Agent used by the single-agent conditions; defaults to the middle of
    /// the agents sorted by id.
    #[serde(default)]
    pub solo_agent: Option<String>,
}

impl SwarmTemplate {
    pub fn solo_agent(&self) -> Result<&AgentConfig, HarnessError> {
        if self.agents.is_empty() {
            return Err(HarnessError::Config("swarm template has no agents".into()));
        }
        match &self.solo_agent {
            Some(id) => self
                .agents
                .iter()
                .find(|a| &a.agent_id == id)
                .ok_or_else(|| HarnessError::Config(format!("solo_agent {id} is not an agent"))),
            None => {
                let mut sorted: Vec<&AgentConfig> = self.agents.iter().collect();
                sorted.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
                Ok(sorted[sorted.len() / 2])
            }
        }
    }

    pub fn config_for(&self, mode: SwarmMode, seed: u64) -> Result<SwarmConfig, HarnessError> {
        let agents = if mode.single_agent() {
            vec![self.solo_agent()?.clone()]
        } else {
            self.agents.clone()
        };
        Ok(SwarmConfig {
            agents,
            max_steps: self.max_steps,
            memory_window: self.memory_window,
            seed,
            mode,
            params: self.params,
        })
    }
}

/// How a plan for the error table is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanSource {
    /// A fixed action list.
    Actions { actions: Vec<Action> },
    /// The actions one agent plays alone, without a critic, for `max_steps`.
    Rollout {
        agent: AgentConfig,
        seed: u64,
        max_steps: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanScenario {
    pub name: String,
    pub world: WorldSource,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Policy label → plan.
    pub plans: BTreeMap<String, PlanSource>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteSpec {
    pub mode: CassetteMode,
    pub path: PathBuf,
}

fn default_episodes() -> usize {
    100
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub manifest_id: String,
    pub world: WorldSource,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    pub conditions: Vec<SwarmMode>,
    #[serde(default = "default_episodes")]
    pub episodes_per_condition: usize,
    pub base_seed: u64,
    pub swarm: SwarmTemplate,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub plan_scenarios: Vec<PlanScenario>,
    #[serde(default)]
    pub gateway: Option<GatewayConfig>,
    #[serde(default)]
    pub cassette: Option<CassetteSpec>,
    /// Run episodes of a condition concurrently. Ignored when a gateway is
    /// configured, so that cassette order stays reproducible.
    #[serde(default = "default_true")]
    pub parallel: bool,
    /// Filled in when the run starts.
    #[serde(default)]
    pub prompt_template_hash: Option<String>,
    #[serde(default)]
    pub tool_version: Option<String>,
}

fn default_format_version() -> u32 {
    MANIFEST_FORMAT_VERSION
}

/// Episode seed: base XOR hash64("{condition}:{episode}").
pub fn episode_seed(base_seed: u64, condition: SwarmMode, episode: usize) -> u64 {
    base_seed ^ hash64(&format!("{}:{episode}", condition.name()))
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let m: RunManifest =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("manifest: {e}")))?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported manifest format_version {}",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        RunManifest::parse(&text)
    }

    /// Static checks: conditions, seeds, referenced files and agent setup.
    pub fn validate(&self, base_dir: &Path) -> Result<(), HarnessError> {
        if self.conditions.is_empty() {
            return Err(HarnessError::Config("no conditions".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.conditions {
            if !seen.insert(*c) {
                return Err(HarnessError::Config(format!("condition {} repeated", c.name())));
            }
            let cfg = self.swarm.config_for(*c, 0)?;
            cfg.validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let mut seeds = std::collections::BTreeSet::new();
        for c in &self.conditions {
            for e in 0..self.episodes_per_condition {
                if !seeds.insert(episode_seed(self.base_seed, *c, e)) {
                    return Err(HarnessError::Config(format!(
                        "derived seed collision at {}:{e}",
                        c.name()
                    )));
                }
            }
        }
        let mut files: Vec<&Path> = Vec::new();
        if let WorldSource::Path { path } = &self.world {
            files.push(path);
        }
        if let Some(t) = &self.trace {
            files.push(t);
        }
        for s in &self.plan_scenarios {
            if let WorldSource::Path { path } = &s.world {
                files.push(path);
            }
            if let Some(t) = &s.trace {
                files.push(t);
            }
        }
        if let Some(c) = &self.cassette {
            if c.mode == CassetteMode::Replay {
                files.push(&c.path);
            }
        }
        for f in files {
            let full = base_dir.join(f);
            if !full.is_file() {
                return Err(HarnessError::Config(format!("missing file {}", full.display())));
            }
        }
        Ok(())
    }
}

/// A world with the expert trace its critic is built from.
#[derive(Debug, Clone)]
pub struct ResolvedWorld {
    pub spec: WorldSpec,
    pub trace: ExpertTrace,
}

impl ResolvedWorld {
    pub fn critic(&self, reward: RewardConfig) -> Result<RewardModel, HarnessError> {
        let outline = build_outline(&self.trace, &self.spec, OutlineOptions::default())
            .map_err(|e| HarnessError::Runtime(format!("{}: {e}", self.spec.world_id)))?;
        build_reward_model(&outline, reward).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// The certificate if present, else a shortest solution by search.
fn certificate_trace(spec: &WorldSpec) -> Result<ExpertTrace, HarnessError> {
    let actions = match &spec.certificate {
        Some(c) => c.clone(),
        None => match shortest_solution(spec, SEARCH_BUDGET) {
            SearchOutcome::Solved(a) => a,
            other => {
                return Err(HarnessError::Runtime(format!(
                    "{}: no expert trace and search gave {other:?}",
                    spec.world_id
                )))
            }
        },
    };
    synthetic_trace(spec, &format!("{}_certificate", spec.world_id), &actions)
        .map_err(|e| HarnessError::Runtime(e.to_string()))
}

fn read(base_dir: &Path, path: &Path) -> Result<String, HarnessError> {
    let full = base_dir.join(path);
    std::fs::read_to_string(&full).map_err(|e| HarnessError::Config(format!("{}: {e}", full.display())))
}

/// World seed for episode `index` of a procgen series.
pub fn series_world_seed(template_seed: u64, index: usize) -> u64 {
    template_seed ^ hash64(&format!("world:{index}"))
}

fn generate(params: &ProcgenParams) -> Result<WorldSpec, HarnessError> {
    generate_world(params).map_err(|e| match e {
        GenerationError::InvalidParams(m) => HarnessError::Config(m),
        other => HarnessError::Runtime(other.to_string()),
    })
}

impl WorldSource {
    /// World and trace for episode `index`. `trace` overrides the default
    /// trace (bundled trace, or the world's solution).
    pub fn resolve(
        &self,
        base_dir: &Path,
        trace: Option<&Path>,
        index: usize,
    ) -> Result<ResolvedWorld, HarnessError> {
        let spec = match self {
            WorldSource::Bundled { name } => fixtures::bundled(name)
                .ok_or_else(|| HarnessError::Config(format!("no bundled world {name:?}")))?
                .load_world(),
            WorldSource::Path { path } => load_world(&read(base_dir, path)?)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?,
            WorldSource::Procgen { params } => generate(params)?,
            WorldSource::ProcgenSeries { template } => {
                let mut params = template.clone();
                params.seed = series_world_seed(template.seed, index);
                generate(&params)?
            }
        };
        let trace = match (trace, self) {
            (Some(p), _) => parse_trace(&read(base_dir, p)?)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?,
            (None, WorldSource::Bundled { name }) => {
                fixtures::bundled(name).expect("checked above").load_trace()
            }
            (None, _) => certificate_trace(&spec)?,
        };
        Ok(ResolvedWorld { spec, trace })
    }

    /// Whether every episode plays the same world.
    pub fn is_fixed(&self) -> bool {
        !matches!(self, WorldSource::ProcgenSeries { .. })
    }
}
