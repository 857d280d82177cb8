use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swarmplay::agents::{
    action_scores, attention_weights, entropy, format_prompt, propose_action,
    softmax_distribution, update_policy, AgentConfig, AgentError, AgentParams, MemoryBuffer,
    MemoryEntry, PolicyState, PromptContext, ProposalInput, Transition,
};
use swarmplay::critic::{RewardSignal, SignalKind};
use swarmplay::fixtures;
use swarmplay::world::{legal_actions, observe, parse_command, reset, state_digest, Action, ActionResult};

fn act(text: &str) -> Action {
    parse_command(text).unwrap()
}

fn signal(value: f64) -> RewardSignal {
    RewardSignal {
        value,
        kind: if value >= 0.0 {
            SignalKind::OnPath
        } else {
            SignalKind::OffPath
        },
        potential_delta: 0.0,
    }
}

fn entry(step: usize, digest: &str, action: &str, reward: f64) -> MemoryEntry {
    MemoryEntry {
        episode_id: "e".into(),
        step,
        agent_id: format!("agent_{step}"),
        state_digest: digest.into(),
        action: act(action),
        reward: signal(reward),
        critique: None,
    }
}

fn buffer(entries: Vec<MemoryEntry>) -> MemoryBuffer {
    MemoryBuffer::new(None).appended(entries)
}

#[test]
fn attention_of_empty_memory_is_empty() {
    assert!(attention_weights(&MemoryBuffer::new(None), "d").is_empty());
}

#[test]
fn attention_doubles_matching_digest() {
    let m = buffer(vec![entry(0, "here", "look", 1.0), entry(1, "elsewhere", "look", 1.0)]);
    let w = attention_weights(&m, "here");
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn window_evicts_oldest() {
    let mut m = MemoryBuffer::new(Some(2));
    for i in 0..3 {
        m.push(entry(i, "d", "look", i as f64));
    }
    let steps: Vec<usize> = m.iter().map(|e| e.step).collect();
    assert_eq!(steps, vec![1, 2]);
}

proptest! {
    #[test]
    fn attention_is_a_distribution(
        rewards in prop::collection::vec(-20.0f64..20.0, 0..30),
        matches in prop::collection::vec(any::<bool>(), 30),
    ) {
        let entries = rewards
            .iter()
            .enumerate()
            .map(|(i, r)| entry(i, if matches[i] { "x" } else { "y" }, "look", *r))
            .collect();
        let w = attention_weights(&buffer(entries), "x");
        prop_assert_eq!(w.len(), rewards.len());
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        if !w.is_empty() {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

struct Scene {
    spec: swarmplay::world::WorldSpec,
    obs: swarmplay::world::Observation,
    digest: String,
    legal: Vec<Action>,
}

fn start_scene() -> Scene {
    let spec = fixtures::mini_zork();
    let state = reset(&spec).unwrap();
    Scene {
        obs: observe(&state, &spec, ActionResult::Ok),
        digest: state_digest(&state),
        legal: legal_actions(&state, &spec),
        spec,
    }
}

fn input<'a>(
    scene: &'a Scene,
    memory: &'a MemoryBuffer,
    policy: &'a PolicyState,
) -> ProposalInput<'a> {
    ProposalInput {
        step: 0,
        observation: &scene.obs,
        digest: &scene.digest,
        legal: &scene.legal,
        memory,
        critique: None,
        policy,
        goal_text: "win",
    }
}

#[test]
fn zero_temperature_takes_first_of_tied_actions() {
    let scene = start_scene();
    let (m, p) = (MemoryBuffer::new(None), PolicyState::default());
    let config = AgentConfig::value_softmax("a", 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prop = propose_action(&config, &input(&scene, &m, &p), &AgentParams::default(), &mut rng, None)
        .unwrap();
    assert_eq!(prop.chosen, scene.legal[0]);
    assert_eq!(prop.distribution[&scene.legal[0].canonical_text()], 1.0);
}

#[test]
fn unit_temperature_with_equal_scores_is_uniform() {
    let scene = start_scene();
    let (m, p) = (MemoryBuffer::new(None), PolicyState::default());
    let config = AgentConfig::value_softmax("a", 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prop = propose_action(&config, &input(&scene, &m, &p), &AgentParams::default(), &mut rng, None)
        .unwrap();
    let n = scene.legal.len() as f64;
    for p in prop.distribution.values() {
        assert!((p - 1.0 / n).abs() < 1e-12);
    }
}

#[test]
fn punished_memory_lowers_probability_by_hand_computed_amount() {
    let scene = start_scene();
    let policy = PolicyState::default();
    let target = scene.legal[0].clone();
    let m = buffer(vec![entry(0, &scene.digest, &target.canonical_text(), -1.0)]);
    let config = AgentConfig::value_softmax("a", 1.0);
    let params = AgentParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let prop = propose_action(&config, &input(&scene, &m, &policy), &params, &mut rng, None).unwrap();

    // single entry: attention weight 1, bonus = -0.5 on the target only
    let n = scene.legal.len() as f64;
    let expected = (-0.5f64).exp() / ((-0.5f64).exp() + (n - 1.0));
    let got = prop.distribution[&target.canonical_text()];
    assert!((got - expected).abs() < 1e-12);
    assert!(got < 1.0 / n);
}

#[test]
fn proposals_need_legal_actions() {
    let scene = start_scene();
    let (m, p) = (MemoryBuffer::new(None), PolicyState::default());
    let mut empty = input(&scene, &m, &p);
    empty.legal = &[];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = propose_action(
        &AgentConfig::value_softmax("a", 1.0),
        &empty,
        &AgentParams::default(),
        &mut rng,
        None,
    );
    assert_eq!(err.unwrap_err(), AgentError::NoLegalActions);
}

#[test]
fn scripted_agent_plays_script_even_when_illegal_then_looks() {
    let scene = start_scene();
    let (m, p) = (MemoryBuffer::new(None), PolicyState::default());
    let lamp = act("take lamp");
    assert!(!scene.legal.contains(&lamp));
    let config = AgentConfig {
        agent_id: "s".into(),
        temperature: 0.0,
        backend: swarmplay::agents::AgentBackend::Scripted {
            actions: vec![lamp.clone()],
        },
        role_label: String::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut i = input(&scene, &m, &p);
    let first = propose_action(&config, &i, &AgentParams::default(), &mut rng, None).unwrap();
    assert_eq!(first.chosen, lamp);
    i.step = 5;
    let later = propose_action(&config, &i, &AgentParams::default(), &mut rng, None).unwrap();
    assert_eq!(later.chosen, Action::Look);
}

#[test]
fn every_backend_consumes_exactly_one_draw() {
    use rand::RngCore;
    let scene = start_scene();
    let (m, p) = (MemoryBuffer::new(None), PolicyState::default());
    for config in [
        AgentConfig::value_softmax("a", 0.7),
        AgentConfig {
            agent_id: "s".into(),
            temperature: 0.0,
            backend: swarmplay::agents::AgentBackend::Scripted { actions: vec![] },
            role_label: String::new(),
        },
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut reference = ChaCha8Rng::seed_from_u64(11);
        propose_action(&config, &input(&scene, &m, &p), &AgentParams::default(), &mut rng, None)
            .unwrap();
        let _: f64 = rand::Rng::random(&mut reference);
        assert_eq!(rng.next_u64(), reference.next_u64());
    }
}

fn rewards_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 2..8)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(scores in rewards_strategy(), t in 0.0f64..5.0) {
        let p = softmax_distribution(&scores, t);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn entropy_grows_with_temperature(scores in rewards_strategy(), t1 in 0.0f64..4.0, dt in 0.0f64..4.0) {
        let low = entropy(&softmax_distribution(&scores, t1));
        let high = entropy(&softmax_distribution(&scores, t1 + dt));
        prop_assert!(high >= low - 1e-9, "{low} > {high}");
    }

    #[test]
    fn proposals_are_valid_and_reproducible(seed in any::<u64>(), t in 0.0f64..3.0, r in -3.0f64..3.0) {
        let scene = start_scene();
        let m = buffer(vec![entry(0, &scene.digest, &scene.legal[1].canonical_text(), r)]);
        let p = PolicyState::default();
        let config = AgentConfig::value_softmax("a", t);
        let params = AgentParams::default();
        let one = propose_action(&config, &input(&scene, &m, &p), &params, &mut ChaCha8Rng::seed_from_u64(seed), None).unwrap();
        let two = propose_action(&config, &input(&scene, &m, &p), &params, &mut ChaCha8Rng::seed_from_u64(seed), None).unwrap();
        prop_assert_eq!(&one, &two);
        prop_assert!((one.distribution.values().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(one.distribution[&one.chosen.canonical_text()] > 0.0);
    }

    #[test]
    fn memory_sign_moves_probability(r in 0.01f64..10.0, which in 0usize..4, t in 0.1f64..3.0) {
        let scene = start_scene();
        let target = scene.legal[which % scene.legal.len()].clone();
        let p = PolicyState::default();
        let config = AgentConfig::value_softmax("a", t);
        let params = AgentParams::default();
        let base_mem = MemoryBuffer::new(None);
        let baseline = propose_action(&config, &input(&scene, &base_mem, &p), &params, &mut ChaCha8Rng::seed_from_u64(1), None).unwrap();
        let key = target.canonical_text();
        for (sign, cmp) in [(-1.0, std::cmp::Ordering::Less), (1.0, std::cmp::Ordering::Greater)] {
            let m = buffer(vec![entry(0, &scene.digest, &key, sign * r)]);
            let with = propose_action(&config, &input(&scene, &m, &p), &params, &mut ChaCha8Rng::seed_from_u64(1), None).unwrap();
            prop_assert_eq!(with.distribution[&key].partial_cmp(&baseline.distribution[&key]), Some(cmp));
        }
    }
}

#[test]
fn scores_add_critique_bonus_only_when_enabled() {
    let scene = start_scene();
    let spec = &scene.spec;
    let outline = swarmplay::trace::build_outline(
        &fixtures::mini_zork_trace(),
        spec,
        Default::default(),
    )
    .unwrap();
    let model = swarmplay::critic::build_reward_model(&outline, Default::default()).unwrap();
    let critique = model.critique(&scene.digest, &scene.legal);
    let (m, p) = (MemoryBuffer::new(None), PolicyState::default());
    let mut i = input(&scene, &m, &p);
    i.critique = Some(&critique);
    assert!(action_scores(&i, &AgentParams::default()).iter().all(|s| *s == 0.0));
    let params = AgentParams {
        critique_bonus: 1.0,
        ..Default::default()
    };
    let scores = action_scores(&i, &params);
    let rec = scene
        .legal
        .iter()
        .position(|a| Some(a) == critique.recommended_action.as_ref())
        .unwrap();
    assert_eq!(scores[rec], 1.0);
}

fn transition(digest: &str, action: &str, reward: f64) -> Transition {
    Transition {
        state_digest: digest.into(),
        action: act(action),
        reward,
    }
}

#[test]
fn empty_update_is_identity() {
    let mut p = PolicyState::default();
    p.values
        .entry("d".into())
        .or_default()
        .insert("look".into(), 0.3);
    assert_eq!(update_policy(&p, &[], 0.5, 1.0).unwrap(), p);
}

#[test]
fn full_step_with_flat_weights_lands_on_reward() {
    let p = update_policy(
        &PolicyState::default(),
        &[transition("d", "look", 2.5)],
        1.0,
        f64::INFINITY,
    )
    .unwrap();
    assert_eq!(p.value("d", &Action::Look), 2.5);
}

#[test]
fn update_rejects_bad_rates() {
    let p = PolicyState::default();
    assert!(update_policy(&p, &[], 0.0, 1.0).is_err());
    assert!(update_policy(&p, &[], 1.5, 1.0).is_err());
    assert!(update_policy(&p, &[], 0.5, 0.0).is_err());
}

#[test]
fn untouched_keys_are_unchanged() {
    let mut p = PolicyState::default();
    p.values.entry("other".into()).or_default().insert("look".into(), 7.0);
    let q = update_policy(&p, &[transition("d", "look", 1.0)], 0.5, 1.0).unwrap();
    assert_eq!(q.value("other", &Action::Look), 7.0);
}

#[test]
fn repeated_updates_follow_scalar_iteration() {
    // one key, batch of three rewards; the fixed point is the weighted mean
    let batch = [
        transition("d", "look", 1.0),
        transition("d", "look", -1.0),
        transition("d", "look", 3.0),
    ];
    let (lr, kl) = (0.3, 2.0);
    let raw: Vec<f64> = batch.iter().map(|t| (t.reward / kl).exp()).collect();
    let z: f64 = raw.iter().sum();
    let target: f64 = batch.iter().zip(&raw).map(|(t, w)| t.reward * w / z).sum();

    let mut policy = PolicyState::default();
    let mut oracle = 0.0f64;
    let mut last_gap = f64::INFINITY;
    for _ in 0..60 {
        policy = update_policy(&policy, &batch, lr, kl).unwrap();
        oracle += lr * (target - oracle);
        let v = policy.value("d", &Action::Look);
        assert!((v - oracle).abs() < 1e-12);
        let gap = (target - v).abs();
        assert!(gap <= last_gap);
        last_gap = gap;
    }
    assert!(last_gap < 1e-6);
}

fn prompt_for(memory: &MemoryBuffer) -> swarmplay::agents::Prompt {
    let scene = start_scene();
    let ctx = PromptContext {
        agent_id: "agent_0".into(),
        role_label: "scout".into(),
        goal_text: "Reach the cellar.".into(),
    };
    format_prompt(&ctx, &scene.obs, &scene.digest, &scene.legal, memory, None)
}

#[test]
fn prompt_is_byte_stable_and_lists_legal_actions_in_order() {
    let m = MemoryBuffer::new(None);
    let a = prompt_for(&m);
    assert_eq!(a, prompt_for(&m));
    let scene = start_scene();
    let block: Vec<&str> = a
        .user
        .split("Legal actions:\n")
        .nth(1)
        .unwrap()
        .lines()
        .take(scene.legal.len())
        .collect();
    let expected: Vec<String> = scene.legal.iter().map(|x| x.display_text()).collect();
    assert_eq!(block, expected);
    assert!(a.user.contains("Terms:\n"));
    assert!(a.user.find("Context:").unwrap() < a.user.find("Goal:").unwrap());
}

#[test]
fn prompt_memory_follows_attention_order() {
    let scene = start_scene();
    let m = buffer(vec![
        entry(0, "elsewhere", "look", 0.5),
        entry(1, &scene.digest, "go north", 0.5),
        entry(2, "elsewhere", "inventory", 3.0),
        entry(3, "elsewhere", "go south", -2.0),
    ]);
    let prompt = prompt_for(&m);
    let shown: Vec<usize> = prompt
        .user
        .split("Memory:\n")
        .nth(1)
        .unwrap()
        .lines()
        .take_while(|l| l.starts_with("step "))
        .map(|l| l[5..].split(' ').next().unwrap().parse().unwrap())
        .collect();
    let w = attention_weights(&m, &scene.digest);
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|a, b| w[*b].partial_cmp(&w[*a]).unwrap());
    assert_eq!(shown, order);
    assert_eq!(shown, vec![2, 1, 0, 3]);
}
