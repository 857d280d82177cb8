//! Expert playthrough transcripts and the step outline distilled from them.
//!
//! A trace file is line-delimited JSON: a header line carrying
//! `format_version`, `trace_id`, `world_id` and `source`, then one event per
//! line. Every expert action is expected to succeed, and the last one to
//! reach the goal; replay records each place where that does not happen.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{canonical_line, full_hash};
use crate::world::{
    observe, parse_command, reset, state_digest, step, Action, ActionResult, StepError, WorldSpec,
};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    HumanPlay,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: usize,
    pub observation_text: String,
    pub action_text: String,
    #[serde(default)]
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertTrace {
    pub trace_id: String,
    pub world_id: String,
    pub source: TraceSource,
    pub events: Vec<TraceEvent>,
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    format_version: u32,
    trace_id: String,
    world_id: String,
    source: TraceSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineStep {
    pub state_digest: String,
    pub recommended_action: Action,
    pub progress_index: usize,
}

/// Ordered digest → recommended-action pathway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutline {
    pub world_id: String,
    pub steps: Vec<OutlineStep>,
    pub terminal_progress: usize,
}

impl StepOutline {
    pub fn canonical_text(&self) -> String {
        canonical_line(self).expect("outlines always serialize")
    }

    /// Fingerprint embedded in serialized reward models.
    pub fn hash(&self) -> String {
        full_hash(self.canonical_text().as_bytes())
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.recommended_action.clone()).collect()
    }
}

/// What replay observed at a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayOutcome {
    Stepped(ActionResult),
    Unparseable(String),
    AfterFinish,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: usize,
    pub expected_result: ActionResult,
    pub actual_result: ReplayOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub divergences: Vec<Divergence>,
    pub goal_reached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Stop at the first divergence.
    Strict,
    /// Record every divergence and keep going.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutlineOptions {
    /// Collapse revisited states, keeping the last occurrence.
    pub collapse_loops: bool,
}

impl Default for OutlineOptions {
    fn default() -> Self {
        Self {
            collapse_loops: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("malformed trace record on line {line}: {reason}")]
    MalformedEvent { line: usize, reason: String },
    #[error("trace has no events")]
    EmptyTrace,
    #[error("trace is for world {trace_world:?} but {spec_world:?} was supplied")]
    UnknownWorld {
        trace_world: String,
        spec_world: String,
    },
    #[error(transparent)]
    World(#[from] StepError),
    #[error("trace does not replay cleanly to the goal ({} divergences)", .0.divergences.len())]
    TraceInvalid(ReplayReport),
    #[error("state at step {step} revisits an earlier state and loop collapsing is off")]
    RevisitedState { step: usize },
}

fn malformed(line: usize, reason: impl ToString) -> TraceError {
    TraceError::MalformedEvent {
        line,
        reason: reason.to_string(),
    }
}

/// Parses a trace document. Blank lines are ignored; line numbers in errors are 1-based.
pub fn parse_trace(document: &str) -> Result<ExpertTrace, TraceError> {
    let mut lines = document
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let Some((header_line, header_text)) = lines.next() else {
        return Err(TraceError::EmptyTrace);
    };
    let header: TraceHeader =
        serde_json::from_str(header_text).map_err(|e| malformed(header_line, e))?;
    if header.format_version != TRACE_FORMAT_VERSION {
        return Err(malformed(
            header_line,
            format!("unsupported format_version {}", header.format_version),
        ));
    }

    let mut events = Vec::new();
    for (line, text) in lines {
        let event: TraceEvent = serde_json::from_str(text).map_err(|e| malformed(line, e))?;
        if event.step != events.len() {
            return Err(malformed(
                line,
                format!("expected step {}, found {}", events.len(), event.step),
            ));
        }
        if event.action_text.trim().is_empty() {
            return Err(malformed(line, "empty action_text"));
        }
        events.push(event);
    }
    if events.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    Ok(ExpertTrace {
        trace_id: header.trace_id,
        world_id: header.world_id,
        source: header.source,
        events,
    })
}

/// Serializes a trace in the line-delimited format [`parse_trace`] reads.
pub fn serialize_trace(trace: &ExpertTrace) -> String {
    let header = TraceHeader {
        format_version: TRACE_FORMAT_VERSION,
        trace_id: trace.trace_id.clone(),
        world_id: trace.world_id.clone(),
        source: trace.source,
    };
    let mut out = canonical_line(&header).expect("header serializes");
    out.push('\n');
    for event in &trace.events {
        out.push_str(&canonical_line(event).expect("event serializes"));
        out.push('\n');
    }
    out
}

/// Builds a synthetic trace by replaying `actions`, recording the
/// observation shown before each one.
pub fn synthetic_trace(
    spec: &WorldSpec,
    trace_id: &str,
    actions: &[Action],
) -> Result<ExpertTrace, TraceError> {
    let mut state = reset(spec)?;
    let mut obs = observe(&state, spec, ActionResult::Ok);
    let mut events = Vec::with_capacity(actions.len());
    for (i, action) in actions.iter().enumerate() {
        events.push(TraceEvent {
            step: i,
            observation_text: obs.description_text.clone(),
            action_text: action.canonical_text(),
            annotation: None,
        });
        (state, obs) = step(&state, action, spec)?;
    }
    if events.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    Ok(ExpertTrace {
        trace_id: trace_id.to_string(),
        world_id: spec.world_id.clone(),
        source: TraceSource::Synthetic,
        events,
    })
}

/// Replays every event through the parser and the world.
pub fn validate_trace(
    trace: &ExpertTrace,
    spec: &WorldSpec,
    mode: ReplayMode,
) -> Result<ReplayReport, TraceError> {
    if trace.world_id != spec.world_id {
        return Err(TraceError::UnknownWorld {
            trace_world: trace.world_id.clone(),
            spec_world: spec.world_id.clone(),
        });
    }
    let mut state = reset(spec)?;
    let mut divergences = Vec::new();
    let last = trace.events.len().saturating_sub(1);

    for (i, event) in trace.events.iter().enumerate() {
        let expected = if i == last {
            ActionResult::GoalReached
        } else {
            ActionResult::Ok
        };
        let actual = match parse_command(&event.action_text) {
            Err(e) => ReplayOutcome::Unparseable(e.to_string()),
            Ok(_) if state.done => ReplayOutcome::AfterFinish,
            Ok(action) => {
                let (next, obs) = step(&state, &action, spec)?;
                state = next;
                ReplayOutcome::Stepped(obs.last_result)
            }
        };
        if actual != ReplayOutcome::Stepped(expected) {
            divergences.push(Divergence {
                step: event.step,
                expected_result: expected,
                actual_result: actual,
            });
            if mode == ReplayMode::Strict {
                return Ok(ReplayReport {
                    divergences,
                    goal_reached: false,
                });
            }
        }
    }
    Ok(ReplayReport {
        divergences,
        goal_reached: state.done,
    })
}

/// Distills a clean trace into a loop-free outline.
pub fn build_outline(
    trace: &ExpertTrace,
    spec: &WorldSpec,
    options: OutlineOptions,
) -> Result<StepOutline, TraceError> {
    let report = validate_trace(trace, spec, ReplayMode::Strict)?;
    if !report.goal_reached || !report.divergences.is_empty() {
        return Err(TraceError::TraceInvalid(report));
    }

    let mut state = reset(spec)?;
    let mut walk: Vec<(String, Action)> = Vec::with_capacity(trace.events.len());
    for event in &trace.events {
        let action = parse_command(&event.action_text).expect("validated above");
        walk.push((state_digest(&state), action.clone()));
        state = step(&state, &action, spec)?.0;
    }

    let mut last_seen: HashMap<&str, usize> = HashMap::new();
    for (i, (digest, _)) in walk.iter().enumerate() {
        if last_seen.insert(digest, i).is_some() && !options.collapse_loops {
            return Err(TraceError::RevisitedState { step: i });
        }
    }

    let mut kept = Vec::new();
    let mut i = 0;
    while i < walk.len() {
        let j = last_seen[walk[i].0.as_str()];
        kept.push(j);
        i = j + 1;
    }

    let steps: Vec<OutlineStep> = kept
        .into_iter()
        .enumerate()
        .map(|(progress_index, j)| OutlineStep {
            state_digest: walk[j].0.clone(),
            recommended_action: walk[j].1.clone(),
            progress_index,
        })
        .collect();
    Ok(StepOutline {
        world_id: spec.world_id.clone(),
        terminal_progress: steps.len(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const MAILBOX_OPENING: &str = r#"{"format_version":1,"trace_id":"t","world_id":"mini_zork","source":"human_play"}
{"step":0,"observation_text":"West of House.","action_text":"Open the mailbox."}
{"step":1,"observation_text":"The mailbox is open.","action_text":"Take the leaflet"}
{"step":2,"observation_text":"West of House.","action_text":"Go north","annotation":"towards the house"}
"#;

    fn events(actions: &[&str]) -> Vec<TraceEvent> {
        actions
            .iter()
            .enumerate()
            .map(|(step, a)| TraceEvent {
                step,
                observation_text: String::new(),
                action_text: a.to_string(),
                annotation: None,
            })
            .collect()
    }

    fn zork_trace(actions: &[&str]) -> ExpertTrace {
        ExpertTrace {
            trace_id: "test".into(),
            world_id: "mini_zork".into(),
            source: TraceSource::HumanPlay,
            events: events(actions),
        }
    }

    #[test]
    fn parses_three_line_transcript() {
        let trace = parse_trace(MAILBOX_OPENING).unwrap();
        assert_eq!(trace.events.len(), 3);
        assert_eq!(trace.events[0].action_text, "Open the mailbox.");
        assert_eq!(trace.events[2].annotation.as_deref(), Some("towards the house"));
        assert_eq!(trace.source, TraceSource::HumanPlay);
    }

    #[test]
    fn empty_documents_are_rejected() {
        assert_eq!(parse_trace(""), Err(TraceError::EmptyTrace));
        assert_eq!(parse_trace("\n  \n"), Err(TraceError::EmptyTrace));
        let header_only = MAILBOX_OPENING.lines().next().unwrap();
        assert_eq!(parse_trace(header_only), Err(TraceError::EmptyTrace));
    }

    #[test]
    fn malformed_records_carry_line_numbers() {
        let bad = MAILBOX_OPENING.replace(r#""step":1"#, r#""step":5"#);
        assert!(matches!(
            parse_trace(&bad),
            Err(TraceError::MalformedEvent { line: 3, .. })
        ));
        let garbage = format!("{}not json\n", MAILBOX_OPENING);
        assert!(matches!(
            parse_trace(&garbage),
            Err(TraceError::MalformedEvent { line: 5, .. })
        ));
        let blank_action = MAILBOX_OPENING.replace("Go north", " ");
        assert!(matches!(
            parse_trace(&blank_action),
            Err(TraceError::MalformedEvent { line: 4, .. })
        ));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let trace = parse_trace(MAILBOX_OPENING).unwrap();
        let again = parse_trace(&serialize_trace(&trace)).unwrap();
        assert_eq!(trace, again);
        assert_eq!(serialize_trace(&trace), serialize_trace(&again));
    }

    #[test]
    fn bundled_trace_replays_cleanly() {
        let report = validate_trace(
            &fixtures::mini_zork_trace(),
            &fixtures::mini_zork(),
            ReplayMode::Strict,
        )
        .unwrap();
        assert!(report.divergences.is_empty());
        assert!(report.goal_reached);
    }

    #[test]
    fn swapped_action_diverges_at_that_step() {
        let spec = fixtures::mini_zork();
        let mut trace = fixtures::mini_zork_trace();
        // "take the leaflet" before the mailbox is opened
        trace.events.swap(0, 1);
        trace.events[0].step = 0;
        trace.events[1].step = 1;
        let report = validate_trace(&trace, &spec, ReplayMode::Lenient).unwrap();
        assert!(!report.divergences.is_empty());
        assert_eq!(report.divergences[0].step, 0);
        assert_eq!(
            report.divergences[0].actual_result,
            ReplayOutcome::Stepped(ActionResult::NothingHappens)
        );
    }

    #[test]
    fn strict_mode_stops_at_first_divergence() {
        let spec = fixtures::mini_zork();
        let trace = zork_trace(&["go east", "open mailbox", "xyzzy"]);
        let strict = validate_trace(&trace, &spec, ReplayMode::Strict).unwrap();
        assert_eq!(strict.divergences.len(), 1);
        assert!(!strict.goal_reached);
        let lenient = validate_trace(&trace, &spec, ReplayMode::Lenient).unwrap();
        assert_eq!(lenient.divergences.len(), 2);
        assert!(matches!(
            lenient.divergences[1].actual_result,
            ReplayOutcome::Unparseable(_)
        ));
    }

    #[test]
    fn mismatched_world_is_rejected() {
        let err = validate_trace(
            &fixtures::mini_zork_trace(),
            &fixtures::six_room(),
            ReplayMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, TraceError::UnknownWorld { .. }));
    }

    #[test]
    fn outline_starts_with_open_mailbox() {
        let spec = fixtures::mini_zork();
        let outline =
            build_outline(&fixtures::mini_zork_trace(), &spec, OutlineOptions::default()).unwrap();
        let start = reset(&spec).unwrap();
        assert_eq!(
            outline.steps[0],
            OutlineStep {
                state_digest: state_digest(&start),
                recommended_action: Action::Open("mailbox".into()),
                progress_index: 0,
            }
        );
        assert_eq!(outline.terminal_progress, 8);
        // loop-free trace: one step per event
        assert_eq!(outline.steps.len(), fixtures::mini_zork_trace().events.len());
    }

    #[test]
    fn revisits_collapse_to_last_occurrence() {
        let spec = fixtures::mini_zork();
        let trace = zork_trace(&[
            "go north",
            "go south",
            "open mailbox",
            "take leaflet",
            "go north",
            "go east",
            "go west",
            "go west",
            "take lamp",
            "go south",
        ]);
        let outline = build_outline(&trace, &spec, OutlineOptions::default()).unwrap();
        assert_eq!(outline.steps.len(), 8);
        assert_eq!(outline.steps[0].recommended_action, Action::Open("mailbox".into()));
        for (i, s) in outline.steps.iter().enumerate() {
            assert_eq!(s.progress_index, i);
        }
        let strict = build_outline(
            &trace,
            &spec,
            OutlineOptions {
                collapse_loops: false,
            },
        );
        assert_eq!(strict, Err(TraceError::RevisitedState { step: 2 }));
    }

    #[test]
    fn invalid_trace_cannot_be_outlined() {
        let spec = fixtures::mini_zork();
        let trace = zork_trace(&["open mailbox", "take leaflet"]);
        assert!(matches!(
            build_outline(&trace, &spec, OutlineOptions::default()),
            Err(TraceError::TraceInvalid(_))
        ));
    }

    #[test]
    fn outline_bytes_are_deterministic() {
        let spec = fixtures::mini_zork();
        let a = build_outline(&fixtures::mini_zork_trace(), &spec, OutlineOptions::default())
            .unwrap();
        let b = build_outline(&fixtures::mini_zork_trace(), &spec, OutlineOptions::default())
            .unwrap();
        assert_eq!(a.canonical_text(), b.canonical_text());
    }

    #[test]
    fn synthetic_trace_from_actions_validates() {
        let spec = fixtures::six_room();
        let outline =
            build_outline(&fixtures::six_room_trace(), &spec, OutlineOptions::default()).unwrap();
        let trace = synthetic_trace(&spec, "synthetic", &outline.actions()).unwrap();
        assert_eq!(trace.source, TraceSource::Synthetic);
        let report = validate_trace(&trace, &spec, ReplayMode::Strict).unwrap();
        assert!(report.goal_reached && report.divergences.is_empty());
    }
}
