use std::sync::Arc;

use proptest::prelude::*;

use swarmplay::agents::{AgentBackend, AgentConfig, AgentParams, MemoryBuffer};
use swarmplay::critic::{build_reward_model, RewardConfig, RewardModel};
use swarmplay::digest::canonical_json;
use swarmplay::fixtures;
use swarmplay::gateway::{BackendConfig, Gateway, RecommendationStub};
use swarmplay::swarm::{
    broadcast_memory, goal_text, run_episode, run_step, select_best, AgentRuntime,
    EpisodeOptions, StepContext, SwarmConfig, SwarmError, SwarmMode,
};
use swarmplay::trace::{build_outline, OutlineOptions};
use swarmplay::world::{parse_command, Action, WorldSpec};

fn zork() -> (WorldSpec, RewardModel) {
    let spec = fixtures::mini_zork();
    let outline =
        build_outline(&fixtures::mini_zork_trace(), &spec, OutlineOptions::default()).unwrap();
    let model = build_reward_model(&outline, RewardConfig::default()).unwrap();
    (spec, model)
}

fn ladder(n: usize) -> Vec<AgentConfig> {
    (0..n)
        .map(|i| AgentConfig::value_softmax(&format!("agent_{i}"), 0.2 + 0.3 * i as f64))
        .collect()
}

fn swarm(agents: Vec<AgentConfig>, seed: u64) -> SwarmConfig {
    SwarmConfig {
        agents,
        max_steps: 30,
        memory_window: None,
        seed,
        mode: SwarmMode::SwarmCritic,
        params: AgentParams::default(),
    }
}

fn runtimes(spec: &WorldSpec, configs: &[AgentConfig], seed: u64) -> Vec<AgentRuntime> {
    configs
        .iter()
        .map(|c| AgentRuntime::new(c.clone(), spec, seed).unwrap())
        .collect()
}

fn ctx<'a>(
    spec: &'a WorldSpec,
    critic: &'a RewardModel,
    params: &'a AgentParams,
    goal: &'a str,
    parallel: bool,
) -> StepContext<'a> {
    StepContext {
        spec,
        critic: Some(critic),
        params,
        episode_id: "ep",
        goal_text: goal,
        external: None,
        parallel,
    }
}

#[test]
fn first_step_of_three_agents_fills_three_slots() {
    let (spec, model) = zork();
    let params = AgentParams::default();
    let goal = goal_text(&spec);
    let mut agents = runtimes(&spec, &ladder(3), 9);
    let (record, memory) = run_step(
        &ctx(&spec, &model, &params, &goal, false),
        0,
        &mut agents,
        &MemoryBuffer::new(None),
    )
    .unwrap();
    assert_eq!(memory.len(), 3);
    let ids: Vec<&str> = record.per_agent.keys().map(String::as_str).collect();
    assert_eq!(ids, vec!["agent_0", "agent_1", "agent_2"]);
}

#[test]
fn finished_agents_report_done_without_acting() {
    let (spec, model) = zork();
    let params = AgentParams::default();
    let goal = goal_text(&spec);
    let expert = fixtures::mini_zork_trace()
        .events
        .iter()
        .map(|e| parse_command(&e.action_text).unwrap())
        .collect::<Vec<_>>();
    let scripted = AgentConfig {
        agent_id: "a_expert".into(),
        temperature: 0.0,
        backend: AgentBackend::Scripted {
            actions: expert.clone(),
        },
        role_label: "expert".into(),
    };
    let mut configs = vec![scripted];
    configs.extend(ladder(1));
    let mut agents = runtimes(&spec, &configs, 1);
    let mut memory = MemoryBuffer::new(None);
    for t in 0..expert.len() {
        let (_, m) = run_step(&ctx(&spec, &model, &params, &goal, false), t, &mut agents, &memory)
            .unwrap();
        memory = m;
    }
    assert!(agents[0].state.done);
    let before = memory.len();
    let (record, memory) = run_step(
        &ctx(&spec, &model, &params, &goal, false),
        expert.len(),
        &mut agents,
        &memory,
    )
    .unwrap();
    let done = &record.per_agent["a_expert"];
    assert!(done.done && done.action.is_none() && done.reward.is_none());
    assert_eq!(memory.len(), before + 1);
}

#[test]
fn broadcast_respects_window_and_keeps_rewards_exact() {
    let (spec, model) = zork();
    let params = AgentParams::default();
    let goal = goal_text(&spec);
    let mut agents = runtimes(&spec, &ladder(3), 4);
    let (record, full) = run_step(
        &ctx(&spec, &model, &params, &goal, false),
        0,
        &mut agents,
        &MemoryBuffer::new(None),
    )
    .unwrap();
    let windowed = broadcast_memory(&record, &MemoryBuffer::new(Some(2)), "ep");
    let kept: Vec<&str> = windowed.iter().map(|e| e.agent_id.as_str()).collect();
    assert_eq!(kept, vec!["agent_1", "agent_2"]);
    for e in full.iter() {
        let r = record.per_agent[&e.agent_id].reward.unwrap();
        assert_eq!(e.reward.value.to_bits(), r.value.to_bits());
    }
}

#[test]
fn parallel_and_serial_steps_agree() {
    let (spec, model) = zork();
    let params = AgentParams::default();
    let goal = goal_text(&spec);
    for seed in 0..20 {
        let configs = ladder(5);
        let mut serial = runtimes(&spec, &configs, seed);
        let mut parallel = runtimes(&spec, &configs, seed);
        let (mut ms, mut mp) = (MemoryBuffer::new(None), MemoryBuffer::new(None));
        for t in 0..10 {
            if serial.iter().all(|a| a.state.done) {
                break;
            }
            let (rs, ns) =
                run_step(&ctx(&spec, &model, &params, &goal, false), t, &mut serial, &ms).unwrap();
            let (rp, np) =
                run_step(&ctx(&spec, &model, &params, &goal, true), t, &mut parallel, &mp).unwrap();
            assert_eq!(rs, rp);
            ms = ns;
            mp = np;
        }
    }
}

#[test]
fn proposals_ignore_same_step_outcomes() {
    // Two critics that disagree wildly on reward values. Step-t proposals must
    // match because they only see memory from before t; later steps may differ.
    let (spec, model) = zork();
    let loud = build_reward_model(
        &build_outline(&fixtures::mini_zork_trace(), &spec, OutlineOptions::default()).unwrap(),
        RewardConfig {
            r_on_path: Some(500.0),
            r_off_path: Some(-900.0),
            r_goal: Some(1000.0),
            shaping_enabled: Some(false),
        },
    )
    .unwrap();
    let params = AgentParams::default();
    let goal = goal_text(&spec);
    let configs = ladder(4);
    let mut a = runtimes(&spec, &configs, 77);
    let mut b = runtimes(&spec, &configs, 77);
    let empty = MemoryBuffer::new(None);
    let (ra, _) = run_step(&ctx(&spec, &model, &params, &goal, false), 0, &mut a, &empty).unwrap();
    let (rb, _) = run_step(&ctx(&spec, &loud, &params, &goal, false), 0, &mut b, &empty).unwrap();
    for (id, sa) in &ra.per_agent {
        let sb = &rb.per_agent[id];
        assert_eq!(sa.action, sb.action);
        assert_eq!(sa.distribution, sb.distribution);
        assert_ne!(sa.reward, sb.reward);
    }
}

#[test]
fn episodes_are_byte_identical_across_execution_modes() {
    let (spec, model) = zork();
    let cfg = swarm(ladder(5), 2024);
    let serial = run_episode(
        &cfg,
        &spec,
        Some(&model),
        None,
        &EpisodeOptions {
            episode_id: "x".into(),
            parallel: false,
        },
    )
    .unwrap();
    let parallel = run_episode(
        &cfg,
        &spec,
        Some(&model),
        None,
        &EpisodeOptions {
            episode_id: "x".into(),
            parallel: true,
        },
    )
    .unwrap();
    assert_eq!(
        canonical_json(&serial).unwrap(),
        canonical_json(&parallel).unwrap()
    );
}

#[test]
fn single_agent_swarm_matches_solo_critic() {
    let (spec, model) = zork();
    let agents = ladder(1);
    let mut solo = swarm(agents.clone(), 5);
    solo.mode = SwarmMode::SoloCritic;
    let opts = EpisodeOptions {
        episode_id: "e".into(),
        parallel: false,
    };
    let a = run_episode(&solo, &spec, Some(&model), None, &opts).unwrap();
    let b = run_episode(&swarm(agents, 5), &spec, Some(&model), None, &opts).unwrap();
    assert_eq!(a.step_records, b.step_records);
    assert_eq!(a.per_agent, b.per_agent);
    assert_eq!(a.selection, b.selection);
}

#[test]
fn scripted_expert_wins_the_swarm() {
    let (spec, model) = zork();
    let expert: Vec<Action> = fixtures::mini_zork_trace()
        .events
        .iter()
        .map(|e| parse_command(&e.action_text).unwrap())
        .collect();
    let mut agents = ladder(4);
    agents.push(AgentConfig {
        agent_id: "agent_9".into(),
        temperature: 0.0,
        backend: AgentBackend::Scripted { actions: expert },
        role_label: "expert".into(),
    });
    let r = run_episode(
        &swarm(agents, 3),
        &spec,
        Some(&model),
        None,
        &EpisodeOptions::default(),
    )
    .unwrap();
    assert_eq!(r.selection.winner, "agent_9");
    assert!(r.per_agent["agent_9"].success);
    assert_eq!(r.per_agent["agent_9"].steps_taken, 8);
}

#[test]
fn critic_presence_must_match_mode() {
    let (spec, model) = zork();
    let mut cfg = swarm(ladder(1), 0);
    cfg.mode = SwarmMode::Solo;
    let err = run_episode(&cfg, &spec, Some(&model), None, &EpisodeOptions::default());
    assert!(matches!(err, Err(SwarmError::ConfigInvalid(_))));
    cfg.mode = SwarmMode::SwarmCritic;
    let err = run_episode(&cfg, &spec, None, None, &EpisodeOptions::default());
    assert!(matches!(err, Err(SwarmError::ConfigInvalid(_))));
    cfg.mode = SwarmMode::SoloCritic;
    cfg.agents = ladder(2);
    let err = run_episode(&cfg, &spec, Some(&model), None, &EpisodeOptions::default());
    assert!(matches!(err, Err(SwarmError::ConfigInvalid(_))));
}

#[test]
fn duplicate_temperatures_warn() {
    let mut agents = ladder(2);
    agents[1].temperature = agents[0].temperature;
    let warnings = swarm(agents, 0).validate().unwrap();
    assert_eq!(warnings.len(), 1);
    let mut agents = ladder(2);
    agents[1].agent_id = agents[0].agent_id.clone();
    assert!(swarm(agents, 0).validate().is_err());
}

#[test]
fn unscored_rewards_in_solo_mode() {
    let (spec, _) = zork();
    let mut cfg = swarm(ladder(1), 8);
    cfg.mode = SwarmMode::Solo;
    let r = run_episode(&cfg, &spec, None, None, &EpisodeOptions::default()).unwrap();
    assert_eq!(r.per_agent["agent_0"].cumulative_reward, 0.0);
    assert!(r.step_records.iter().all(|s| s.per_agent["agent_0"].critique.is_none()));
}

#[test]
fn cumulative_reward_is_the_sum_of_step_rewards() {
    let (spec, model) = zork();
    let r = run_episode(&swarm(ladder(5), 31), &spec, Some(&model), None, &EpisodeOptions::default())
        .unwrap();
    for (id, outcome) in &r.per_agent {
        let sum: f64 = r
            .step_records
            .iter()
            .filter_map(|s| s.per_agent[id].reward.map(|x| x.value))
            .sum();
        assert_eq!(sum, outcome.cumulative_reward);
        if outcome.success {
            assert!(outcome.steps_taken <= 30);
        }
    }
}

/// Answers "look" until `fail_at` replies have been given, then errors.
struct BreaksLater {
    fail_at: usize,
    calls: std::sync::atomic::AtomicUsize,
}

impl swarmplay::agents::ExternalPlayer for BreaksLater {
    fn reply(
        &self,
        _backend_id: &str,
        _prompt: &swarmplay::agents::Prompt,
        _temperature: f64,
    ) -> Result<String, swarmplay::gateway::GatewayError> {
        let n = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        if n < self.fail_at {
            Ok("look".into())
        } else {
            Err(swarmplay::gateway::GatewayError::Timeout { attempts: 1 })
        }
    }
}

#[test]
fn failed_step_leaves_no_partial_rewards() {
    let (spec, critic) = zork();
    let mut agents = ladder(2);
    agents.push(AgentConfig {
        agent_id: "agent_z".into(),
        temperature: 0.0,
        backend: AgentBackend::External {
            backend_id: "flaky".into(),
        },
        role_label: String::new(),
    });
    let player = BreaksLater {
        fail_at: 3,
        calls: Default::default(),
    };
    let r = run_episode(&swarm(agents, 4), &spec, Some(&critic), Some(&player), &EpisodeOptions::default())
        .unwrap();
    assert!(r.error.is_some());
    assert_eq!(r.step_records.len(), 3);
    for (id, outcome) in &r.per_agent {
        let sum: f64 = r
            .step_records
            .iter()
            .filter_map(|s| s.per_agent[id].reward.map(|x| x.value))
            .sum();
        assert_eq!(sum, outcome.cumulative_reward, "{id}");
        assert_eq!(outcome.steps_taken, 3, "{id}");
    }
}

#[test]
fn critique_following_external_agent_walks_the_outline() {
    let (spec, model) = zork();
    let mut gw = Gateway::new();
    gw.add_backend(BackendConfig::recommendation_stub("coach"), Arc::new(RecommendationStub))
        .unwrap();
    let agent = AgentConfig {
        agent_id: "follower".into(),
        temperature: 0.0,
        backend: AgentBackend::External {
            backend_id: "coach".into(),
        },
        role_label: "follower".into(),
    };
    let mut cfg = swarm(vec![agent], 0);
    cfg.mode = SwarmMode::SoloCritic;
    let r = run_episode(&cfg, &spec, Some(&model), Some(&gw), &EpisodeOptions::default()).unwrap();
    assert!(r.per_agent["follower"].success);
    assert_eq!(r.per_agent["follower"].steps_taken, model.terminal_progress);
}

#[test]
fn selection_examples() {
    assert_eq!(select_best([("a", 5.0), ("b", 7.0)]).unwrap().winner, "b");
    assert_eq!(select_best([("a", 5.0), ("b", 5.0)]).unwrap().winner, "a");
    assert_eq!(select_best([("b", 5.0), ("a", 5.0)]).unwrap().winner, "a");
    assert!(select_best(std::iter::empty::<(&str, f64)>()).is_none());
}

proptest! {
    #[test]
    fn selection_ignores_input_order(
        rewards in prop::collection::vec(-3i32..3, 1..8),
        rotation in 0usize..8,
    ) {
        let ids: Vec<String> = (0..rewards.len()).map(|i| format!("agent_{i}")).collect();
        let pairs: Vec<(&str, f64)> = ids.iter().map(String::as_str).zip(rewards.iter().map(|r| *r as f64)).collect();
        let mut rotated = pairs.clone();
        rotated.rotate_left(rotation % pairs.len());
        rotated.reverse();
        let a = select_best(pairs.clone()).unwrap();
        let b = select_best(rotated).unwrap();
        prop_assert_eq!(&a, &b);
        let best = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let first_best = pairs.iter().find(|p| p.1 == best).unwrap().0;
        prop_assert_eq!(a.winner.as_str(), first_best);
    }
}
