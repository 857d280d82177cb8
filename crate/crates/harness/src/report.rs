use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use swarmplay::critic::{PlanErrorReport, SignalKind};
use swarmplay::digest::canonical_json;
use swarmplay::swarm::SwarmMode;

use crate::runlog::{LogEvent, RunLog};
use crate::HarnessError;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: SwarmMode,
    pub episodes: usize,
    pub successes: usize,
    /// Percent of episodes whose selected agent reached the goal.
    pub success_rate: f64,
    /// Over successful episodes only; absent when there were none.
    pub mean_steps_to_success: Option<f64>,
    /// Selected agent's cumulative reward, averaged over episodes.
    pub mean_cumulative_reward: Option<f64>,
    pub win_counts: BTreeMap<String, usize>,
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanErrorRow {
    pub scenario: String,
    pub n_actions: usize,
    pub policies: BTreeMap<String, PlanErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub manifest_id: String,
    pub conditions: Vec<ConditionSummary>,
    pub plan_errors: Vec<PlanErrorRow>,
}

impl Report {
    pub fn to_canonical(&self) -> String {
        canonical_json(self).expect("reports serialize")
    }

    pub fn condition(&self, mode: SwarmMode) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == mode)
    }
}

#[derive(Default)]
struct Tally {
    episodes: usize,
    successes: usize,
    steps_sum: f64,
    reward_sum: f64,
    wins: BTreeMap<String, usize>,
    incomplete: bool,
}

/// Aggregates a run log. The run itself reports through this function too,
/// so a replayed log yields the same report.
pub fn report_from_log(log: &RunLog) -> Result<Report, HarnessError> {
    let mut tallies: BTreeMap<SwarmMode, Tally> = log
        .manifest
        .conditions
        .iter()
        .map(|c| (*c, Tally::default()))
        .collect();
    let mut rows: BTreeMap<String, PlanErrorRow> = BTreeMap::new();

    for event in &log.events {
        match event {
            LogEvent::EpisodeEnd {
                condition,
                per_agent,
                selection,
                success,
                error,
                ..
            } => {
                let t = tallies.get_mut(condition).ok_or_else(|| {
                    HarnessError::Runtime(format!("condition {} not in manifest", condition.name()))
                })?;
                let winner = per_agent.get(&selection.winner).ok_or_else(|| {
                    HarnessError::Runtime(format!("winner {} has no outcome", selection.winner))
                })?;
                t.episodes += 1;
                t.reward_sum += winner.cumulative_reward;
                *t.wins.entry(selection.winner.clone()).or_default() += 1;
                if *success {
                    t.successes += 1;
                    t.steps_sum += winner.steps_taken as f64;
                }
                if error.is_some() {
                    t.incomplete = true;
                }
            }
            LogEvent::ConditionIncomplete { condition, .. } => {
                if let Some(t) = tallies.get_mut(condition) {
                    t.incomplete = true;
                }
            }
            LogEvent::PlanErrors {
                scenario,
                n_actions,
                policy,
                report,
            } => {
                rows.entry(scenario.clone())
                    .or_insert_with(|| PlanErrorRow {
                        scenario: scenario.clone(),
                        n_actions: *n_actions,
                        policies: BTreeMap::new(),
                    })
                    .policies
                    .insert(policy.clone(), report.clone());
            }
            _ => {}
        }
    }

    let conditions = log
        .manifest
        .conditions
        .iter()
        .map(|c| {
            let t = &tallies[c];
            let n = t.episodes;
            ConditionSummary {
                condition: *c,
                episodes: n,
                successes: t.successes,
                success_rate: if n == 0 {
                    0.0
                } else {
                    100.0 * t.successes as f64 / n as f64
                },
                mean_steps_to_success: (t.successes > 0)
                    .then(|| t.steps_sum / t.successes as f64),
                mean_cumulative_reward: (n > 0).then(|| t.reward_sum / n as f64),
                win_counts: t.wins.clone(),
                incomplete: t.incomplete || n < log.manifest.episodes_per_condition,
            }
        })
        .collect();

    Ok(Report {
        format_version: REPORT_FORMAT_VERSION,
        manifest_id: log.manifest.manifest_id.clone(),
        conditions,
        plan_errors: rows.into_values().collect(),
    })
}

/// Re-checks reward arithmetic from the logged steps: each agent's
/// cumulative reward must equal the sum of its step rewards, and each step's
/// value must decompose as base + potential delta.
pub fn verify_log(log: &RunLog) -> Result<(), HarnessError> {
    let cfg = log.manifest.reward;
    let (on, off, goal) = (
        cfg.r_on_path.unwrap_or(1.0),
        cfg.r_off_path.unwrap_or(-1.0),
        cfg.r_goal.unwrap_or(10.0),
    );
    let mut sums: BTreeMap<(SwarmMode, usize, String), f64> = BTreeMap::new();
    for event in &log.events {
        match event {
            LogEvent::Step {
                condition,
                episode,
                record,
            } => {
                for (id, s) in &record.per_agent {
                    if let Some(r) = s.reward {
                        let base = match r.kind {
                            SignalKind::OnPath => on,
                            SignalKind::OffPath | SignalKind::Illegal => off,
                            SignalKind::Goal => goal,
                            SignalKind::Unscored => 0.0,
                        };
                        if (r.value - r.potential_delta - base).abs() > 1e-9 {
                            return Err(HarnessError::Runtime(format!(
                                "{}:{episode} step {} agent {id}: reward {} is not {base} + {}",
                                condition.name(),
                                record.step,
                                r.value,
                                r.potential_delta
                            )));
                        }
                        *sums.entry((*condition, *episode, id.clone())).or_default() += r.value;
                    }
                }
            }
            LogEvent::EpisodeEnd {
                condition,
                episode,
                per_agent,
                ..
            } => {
                for (id, outcome) in per_agent {
                    let sum = sums
                        .remove(&(*condition, *episode, id.clone()))
                        .unwrap_or(0.0);
                    if sum != outcome.cumulative_reward {
                        return Err(HarnessError::Runtime(format!(
                            "{}:{episode} agent {id}: steps sum to {sum}, episode says {}",
                            condition.name(),
                            outcome.cumulative_reward
                        )));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}
