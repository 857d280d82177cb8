use std::path::Path;

use rayon::prelude::*;

use swarmplay::agents::{template_hash, AgentBackend, ExternalPlayer};
use swarmplay::critic::{count_plan_errors, RewardModel};
use swarmplay::gateway::Gateway;
use swarmplay::swarm::{run_episode, EpisodeOptions, EpisodeResult, SwarmConfig, SwarmMode};
use swarmplay::world::{parse_command, Action};

use crate::manifest::{episode_seed, PlanScenario, PlanSource, ResolvedWorld, RunManifest};
use crate::report::{report_from_log, verify_log, Report};
use crate::runlog::{LogEvent, LogSink, RunLog};
use crate::HarnessError;

/// Episodes run concurrently per batch when parallelism is on.
const BATCH: usize = 32;

/// The manifest as recorded in the log: template hash and tool version filled in.
pub fn snapshot(manifest: &RunManifest) -> RunManifest {
    let mut m = manifest.clone();
    m.prompt_template_hash = Some(template_hash());
    m.tool_version = Some(env!("CARGO_PKG_VERSION").to_string());
    m
}

struct Played {
    episode: usize,
    seed: u64,
    world_id: String,
    outcome: Result<EpisodeResult, HarnessError>,
}

fn play(
    manifest: &RunManifest,
    base_dir: &Path,
    fixed: Option<&(ResolvedWorld, RewardModel)>,
    mode: SwarmMode,
    episode: usize,
    external: Option<&dyn ExternalPlayer>,
    agent_parallel: bool,
) -> Played {
    let seed = episode_seed(manifest.base_seed, mode, episode);
    let owned;
    let (world, critic) = match fixed {
        Some((w, c)) => (w, c),
        None => {
            let resolved = manifest
                .world
                .resolve(base_dir, manifest.trace.as_deref(), episode)
                .and_then(|w| {
                    let c = w.critic(manifest.reward)?;
                    Ok((w, c))
                });
            match resolved {
                Ok(pair) => {
                    owned = pair;
                    (&owned.0, &owned.1)
                }
                Err(e) => {
                    return Played {
                        episode,
                        seed,
                        world_id: String::new(),
                        outcome: Err(e),
                    }
                }
            }
        }
    };
    let outcome = manifest
        .swarm
        .config_for(mode, seed)
        .and_then(|cfg: SwarmConfig| {
            run_episode(
                &cfg,
                &world.spec,
                mode.has_critic().then_some(critic),
                external,
                &EpisodeOptions {
                    episode_id: format!("{}:{episode}", mode.name()),
                    parallel: agent_parallel,
                },
            )
            .map_err(|e| HarnessError::Config(e.to_string()))
        });
    Played {
        episode,
        seed,
        world_id: world.spec.world_id.clone(),
        outcome,
    }
}

fn write_episode(
    sink: &mut LogSink,
    mode: SwarmMode,
    played: Played,
) -> Result<Option<String>, HarnessError> {
    let result = match played.outcome {
        Ok(r) => r,
        Err(e) => return Ok(Some(format!("episode {}: {e}", played.episode))),
    };
    sink.write(&LogEvent::EpisodeStart {
        condition: mode,
        episode: played.episode,
        seed: played.seed,
        world_id: played.world_id,
        agents: result.per_agent.keys().cloned().collect(),
    })?;
    let success = result.winner_success();
    for record in result.step_records {
        sink.write(&LogEvent::Step {
            condition: mode,
            episode: played.episode,
            record,
        })?;
    }
    let error = result.error.clone();
    sink.write(&LogEvent::EpisodeEnd {
        condition: mode,
        episode: played.episode,
        per_agent: result.per_agent,
        selection: result.selection,
        success,
        error: error.clone(),
    })?;
    Ok(error.map(|e| format!("episode {}: {e}", played.episode)))
}

fn plan_actions(
    source: &PlanSource,
    world: &ResolvedWorld,
    external: Option<&dyn ExternalPlayer>,
) -> Result<Vec<Action>, HarnessError> {
    match source {
        PlanSource::Actions { actions } => Ok(actions.clone()),
        PlanSource::Rollout {
            agent,
            seed,
            max_steps,
        } => {
            let cfg = SwarmConfig {
                agents: vec![agent.clone()],
                max_steps: *max_steps,
                memory_window: None,
                seed: *seed,
                mode: SwarmMode::Solo,
                params: Default::default(),
            };
            let r = run_episode(&cfg, &world.spec, None, external, &EpisodeOptions::default())
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok(r.step_records
                .iter()
                .filter_map(|s| s.per_agent.values().next()?.action.clone())
                .collect())
        }
    }
}

fn run_scenario(
    sink: &mut LogSink,
    scenario: &PlanScenario,
    base_dir: &Path,
    external: Option<&dyn ExternalPlayer>,
) -> Result<(), HarnessError> {
    let world = scenario
        .world
        .resolve(base_dir, scenario.trace.as_deref(), 0)?;
    let ground_truth: Vec<Action> = world
        .trace
        .events
        .iter()
        .map(|e| parse_command(&e.action_text))
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Config(format!("{}: {e}", scenario.name)))?;
    for (policy, source) in &scenario.plans {
        let plan = plan_actions(source, &world, external)?;
        let report = count_plan_errors(&plan, &world.spec, &ground_truth)
            .map_err(|e| HarnessError::Runtime(format!("{}: {e}", scenario.name)))?;
        sink.write(&LogEvent::PlanErrors {
            scenario: scenario.name.clone(),
            n_actions: ground_truth.len(),
            policy: policy.clone(),
            report,
        })?;
    }
    Ok(())
}

fn needs_gateway(manifest: &RunManifest) -> bool {
    let external = |a: &swarmplay::agents::AgentConfig| matches!(a.backend, AgentBackend::External { .. });
    manifest.swarm.agents.iter().any(external)
        || manifest.plan_scenarios.iter().any(|s| {
            s.plans.values().any(|p| match p {
                PlanSource::Rollout { agent, .. } => external(agent),
                PlanSource::Actions { .. } => false,
            })
        })
}

/// Runs every condition and plan scenario, writing the log to `log_path`.
/// The report is computed from the written log.
pub fn run_experiment(
    manifest: &RunManifest,
    base_dir: &Path,
    log_path: &Path,
    gateway: Option<&Gateway>,
) -> Result<(RunLog, Report), HarnessError> {
    manifest.validate(base_dir)?;
    if needs_gateway(manifest) && gateway.is_none() {
        return Err(HarnessError::Config(
            "external agents are configured but no gateway is available".into(),
        ));
    }
    let external: Option<&dyn ExternalPlayer> = gateway.map(|g| g as &dyn ExternalPlayer);
    let snap = snapshot(manifest);
    let mut sink = LogSink::create(log_path, &snap)?;

    let fixed = if manifest.world.is_fixed() {
        let w = manifest
            .world
            .resolve(base_dir, manifest.trace.as_deref(), 0)?;
        let c = w.critic(manifest.reward)?;
        Some((w, c))
    } else {
        None
    };
    let episodes_parallel = manifest.parallel && gateway.is_none();

    for &mode in &manifest.conditions {
        let mut next = 0;
        'condition: while next < manifest.episodes_per_condition {
            let end = if episodes_parallel {
                (next + BATCH).min(manifest.episodes_per_condition)
            } else {
                next + 1
            };
            let batch: Vec<Played> = if episodes_parallel {
                (next..end)
                    .into_par_iter()
                    .map(|e| play(manifest, base_dir, fixed.as_ref(), mode, e, external, false))
                    .collect()
            } else {
                (next..end)
                    .map(|e| play(manifest, base_dir, fixed.as_ref(), mode, e, external, true))
                    .collect()
            };
            for played in batch {
                if let Some(reason) = write_episode(&mut sink, mode, played)? {
                    sink.write(&LogEvent::ConditionIncomplete {
                        condition: mode,
                        reason,
                    })?;
                    sink.flush()?;
                    break 'condition;
                }
            }
            sink.flush()?;
            next = end;
        }
    }

    let mut scenarios: Vec<&PlanScenario> = manifest.plan_scenarios.iter().collect();
    scenarios.sort_by(|a, b| a.name.cmp(&b.name));
    for s in scenarios {
        run_scenario(&mut sink, s, base_dir, external)?;
    }
    sink.flush()?;
    drop(sink);

    let log = RunLog::load(log_path)?;
    verify_log(&log)?;
    let report = report_from_log(&log)?;
    Ok((log, report))
}

/// Rebuilds the report from a log alone, after re-checking its arithmetic.
pub fn replay(log_path: &Path) -> Result<Report, HarnessError> {
    let log = RunLog::load(log_path)?;
    verify_log(&log)?;
    report_from_log(&log)
}
