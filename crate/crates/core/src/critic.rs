//! The critic: a reward model distilled from a step outline.
//!
//! Scoring is potential-based. Φ(digest) is the outline progress index of
//! the digest, `terminal_progress` once the goal is reached, and −1 for any
//! digest off the outline. With shaping enabled each signal carries
//! Φ(post) − Φ(pre), so shaping sums over a trajectory telescope to
//! Φ(final) − Φ(initial).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::canonical_json;
use crate::trace::{build_outline, synthetic_trace, OutlineOptions, StepOutline, TraceError};
use crate::world::{
    atom_count, reset, state_digest, step, Action, ActionResult, WorldSpec,
};

pub const REWARD_MODEL_FORMAT_VERSION: u32 = 1;

/// Reward scalars; omitted values take the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub r_on_path: Option<f64>,
    pub r_off_path: Option<f64>,
    pub r_goal: Option<f64>,
    pub shaping_enabled: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub recommended_action: Action,
    pub progress_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub world_id: String,
    pub outline_hash: String,
    pub outline_index: BTreeMap<String, IndexEntry>,
    pub terminal_progress: usize,
    pub r_on_path: f64,
    pub r_off_path: f64,
    pub r_goal: f64,
    pub shaping_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    OnPath,
    OffPath,
    Goal,
    Illegal,
    /// No critic was present; the value is always 0.
    Unscored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    pub value: f64,
    pub kind: SignalKind,
    pub potential_delta: f64,
}

impl RewardSignal {
    pub const UNSCORED: RewardSignal = RewardSignal {
        value: 0.0,
        kind: SignalKind::Unscored,
        potential_delta: 0.0,
    };
}

/// "Possible actions / Recommended action" feedback shown before acting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Critique {
    pub possible_actions: Vec<Action>,
    pub recommended_action: Option<Action>,
    pub rationale: String,
}

impl Critique {
    /// Plain-text rendering:
    ///
    /// ```text
    /// Possible actions:
    /// Go north
    /// Open mailbox
    /// Recommended action:
    /// Open the mailbox.
    /// ```
    pub fn render(&self) -> String {
        let mut out = String::from("Possible actions:\n");
        for a in &self.possible_actions {
            out.push_str(&a.display_text());
            out.push('\n');
        }
        if let Some(rec) = &self.recommended_action {
            out.push_str("Recommended action:\n");
            out.push_str(&recommendation_sentence(rec));
            out.push('\n');
        }
        out
    }
}

fn recommendation_sentence(action: &Action) -> String {
    match action {
        Action::Open(o) => format!("Open the {}.", o.replace('_', " ")),
        Action::Take(o) => format!("Take the {}.", o.replace('_', " ")),
        Action::Drop(o) => format!("Drop the {}.", o.replace('_', " ")),
        other => format!("{}.", other.display_text()),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriticError {
    #[error("invalid reward configuration: {0}")]
    InvalidConfig(String),
    #[error("ground truth does not replay to the goal: {0}")]
    InvalidGroundTruth(TraceError),
    #[error("reward model is stale: {0}")]
    StaleModel(String),
    #[error("malformed reward model document: {0}")]
    Malformed(String),
}

impl RewardModel {
    fn check_invariants(&self) -> Result<(), CriticError> {
        let finite = [self.r_on_path, self.r_off_path, self.r_goal]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CriticError::InvalidConfig("reward scalars must be finite".into()));
        }
        if !(self.r_on_path > 0.0 && self.r_off_path < 0.0) {
            return Err(CriticError::InvalidConfig(
                "need r_on_path > 0 > r_off_path".into(),
            ));
        }
        if self.r_goal <= self.r_on_path {
            return Err(CriticError::InvalidConfig("need r_goal > r_on_path".into()));
        }
        if self.outline_index.is_empty() {
            return Err(CriticError::InvalidConfig("outline is empty".into()));
        }
        Ok(())
    }

    /// Φ of a digest; goal states sit at `terminal_progress`.
    pub fn potential(&self, digest: &str, goal_reached: bool) -> f64 {
        if goal_reached {
            return self.terminal_progress as f64;
        }
        self.outline_index
            .get(digest)
            .map(|e| e.progress_index as f64)
            .unwrap_or(-1.0)
    }

    pub fn recommended(&self, digest: &str) -> Option<&Action> {
        self.outline_index.get(digest).map(|e| &e.recommended_action)
    }

    /// Scores one transition.
    pub fn score(
        &self,
        pre_digest: &str,
        action: &Action,
        post_digest: &str,
        goal_reached: bool,
        was_legal: bool,
    ) -> RewardSignal {
        if !was_legal {
            return RewardSignal {
                value: self.r_off_path,
                kind: SignalKind::Illegal,
                potential_delta: 0.0,
            };
        }
        let potential_delta = if self.shaping_enabled {
            self.potential(post_digest, goal_reached) - self.potential(pre_digest, false)
        } else {
            0.0
        };
        let (base, kind) = if goal_reached {
            (self.r_goal, SignalKind::Goal)
        } else if self.recommended(pre_digest) == Some(action) {
            (self.r_on_path, SignalKind::OnPath)
        } else {
            (self.r_off_path, SignalKind::OffPath)
        };
        RewardSignal {
            value: base + potential_delta,
            kind,
            potential_delta,
        }
    }

    /// Possible/recommended feedback for the state with `digest`.
    pub fn critique(&self, digest: &str, legal: &[Action]) -> Critique {
        let entry = self.outline_index.get(digest);
        let recommended_action = entry
            .map(|e| &e.recommended_action)
            .filter(|a| legal.contains(a))
            .cloned();
        let rationale = match (entry, &recommended_action) {
            (Some(e), Some(_)) => format!(
                "Step {} of {} on the expert pathway.",
                e.progress_index + 1,
                self.terminal_progress
            ),
            (Some(e), None) => format!(
                "Step {} of {} on the expert pathway, but the expert move is not available here.",
                e.progress_index + 1,
                self.terminal_progress
            ),
            (None, _) => "Off the expert pathway; no recommendation.".to_string(),
        };
        Critique {
            possible_actions: legal.to_vec(),
            recommended_action,
            rationale,
        }
    }

    /// Canonical document with format version, world id and outline hash.
    pub fn to_canonical(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            format_version: u32,
            #[serde(flatten)]
            model: &'a RewardModel,
        }
        canonical_json(&Doc {
            format_version: REWARD_MODEL_FORMAT_VERSION,
            model: self,
        })
        .expect("reward models always serialize")
    }

    /// Loads a model, rejecting it unless it was built from `outline`.
    pub fn from_canonical(text: &str, outline: &StepOutline) -> Result<RewardModel, CriticError> {
        #[derive(Deserialize)]
        struct Doc {
            format_version: u32,
            #[serde(flatten)]
            model: RewardModel,
        }
        let doc: Doc =
            serde_json::from_str(text).map_err(|e| CriticError::Malformed(e.to_string()))?;
        if doc.format_version != REWARD_MODEL_FORMAT_VERSION {
            return Err(CriticError::Malformed(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let model = doc.model;
        if model.world_id != outline.world_id {
            return Err(CriticError::StaleModel(format!(
                "model is for world {:?}, outline for {:?}",
                model.world_id, outline.world_id
            )));
        }
        if model.outline_hash != outline.hash() {
            return Err(CriticError::StaleModel("outline hash mismatch".into()));
        }
        model.check_invariants()?;
        Ok(model)
    }
}

/// Indexes every outline step by digest and applies reward scalars.
pub fn build_reward_model(
    outline: &StepOutline,
    config: RewardConfig,
) -> Result<RewardModel, CriticError> {
    let outline_index = outline
        .steps
        .iter()
        .map(|s| {
            (
                s.state_digest.clone(),
                IndexEntry {
                    recommended_action: s.recommended_action.clone(),
                    progress_index: s.progress_index,
                },
            )
        })
        .collect();
    let model = RewardModel {
        world_id: outline.world_id.clone(),
        outline_hash: outline.hash(),
        outline_index,
        terminal_progress: outline.terminal_progress,
        r_on_path: config.r_on_path.unwrap_or(1.0),
        r_off_path: config.r_off_path.unwrap_or(-1.0),
        r_goal: config.r_goal.unwrap_or(10.0),
        shaping_enabled: config.shaping_enabled.unwrap_or(true),
    };
    model.check_invariants()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub illegal_action: usize,
    pub precondition_violation: usize,
    pub irrelevant_action: usize,
    pub missing_step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanErrorReport {
    pub counts: ErrorCounts,
    pub total: usize,
    pub too_noisy: bool,
    pub ground_truth_length: usize,
}

impl PlanErrorReport {
    /// Total with a trailing "+" when the plan is too noisy to count reliably.
    pub fn rendered_total(&self) -> String {
        if self.too_noisy {
            format!("{}+", self.total)
        } else {
            self.total.to_string()
        }
    }
}

impl fmt::Display for PlanErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered_total())
    }
}

/// Counts the errors in `plan` against a ground-truth action list.
///
/// * illegal: steps that come back Blocked or UnknownObject
/// * precondition: object actions on something not present (NothingHappens)
/// * irrelevant: successful steps that satisfy no new goal atom and leave Φ
///   unchanged, plus anything issued after the goal was reached
/// * missing: ground-truth actions absent from the plan (multiset difference)
///
/// `too_noisy` is set once irrelevant actions reach the ground-truth length.
pub fn count_plan_errors(
    plan: &[Action],
    spec: &WorldSpec,
    ground_truth: &[Action],
) -> Result<PlanErrorReport, CriticError> {
    let trace = synthetic_trace(spec, "ground_truth", ground_truth)
        .map_err(CriticError::InvalidGroundTruth)?;
    let outline = build_outline(&trace, spec, OutlineOptions::default())
        .map_err(CriticError::InvalidGroundTruth)?;
    let model = build_reward_model(&outline, RewardConfig::default())?;

    let mut counts = ErrorCounts::default();
    let mut state = reset(spec).map_err(|e| CriticError::InvalidGroundTruth(e.into()))?;
    for action in plan {
        if state.done {
            counts.irrelevant_action += 1;
            continue;
        }
        let (next, obs) = step(&state, action, spec).expect("state is live");
        match obs.last_result {
            ActionResult::Blocked | ActionResult::UnknownObject => counts.illegal_action += 1,
            ActionResult::NothingHappens => counts.precondition_violation += 1,
            ActionResult::Ok => {
                let progressed = atom_count(&next, spec) > atom_count(&state, spec);
                let pre = model.potential(&state_digest(&state), false);
                let post = model.potential(&state_digest(&next), false);
                if !progressed && pre == post {
                    counts.irrelevant_action += 1;
                }
            }
            ActionResult::GoalReached => {}
        }
        state = next;
    }

    let mut remaining: HashMap<&Action, usize> = HashMap::new();
    for a in plan {
        *remaining.entry(a).or_default() += 1;
    }
    for a in ground_truth {
        match remaining.get_mut(a) {
            Some(n) if *n > 0 => *n -= 1,
            _ => counts.missing_step += 1,
        }
    }

    let total = counts.illegal_action
        + counts.precondition_violation
        + counts.irrelevant_action
        + counts.missing_step;
    Ok(PlanErrorReport {
        counts,
        total,
        too_noisy: counts.irrelevant_action >= ground_truth.len(),
        ground_truth_length: ground_truth.len(),
    })
}
