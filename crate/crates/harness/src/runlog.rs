use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use swarmplay::critic::PlanErrorReport;
use swarmplay::digest::canonical_line;
use swarmplay::swarm::{AgentOutcome, SelectionResult, StepRecord, SwarmMode};

use crate::manifest::RunManifest;
use crate::HarnessError;

pub const RUN_LOG_FORMAT_VERSION: u32 = 1;

/// One line of a run log. Every record names its condition and episode so a
/// line can be read on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Manifest {
        format_version: u32,
        manifest: RunManifest,
    },
    EpisodeStart {
        condition: SwarmMode,
        episode: usize,
        seed: u64,
        world_id: String,
        agents: Vec<String>,
    },
    Step {
        condition: SwarmMode,
        episode: usize,
        record: StepRecord,
    },
    EpisodeEnd {
        condition: SwarmMode,
        episode: usize,
        per_agent: BTreeMap<String, AgentOutcome>,
        selection: SelectionResult,
        success: bool,
        #[serde(default)]
        error: Option<String>,
    },
    ConditionIncomplete {
        condition: SwarmMode,
        reason: String,
    },
    PlanErrors {
        scenario: String,
        n_actions: usize,
        policy: String,
        report: PlanErrorReport,
    },
}

impl LogEvent {
    pub fn to_line(&self) -> String {
        canonical_line(self).expect("log events serialize")
    }
}

/// A parsed run log: the manifest snapshot and the events after it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub manifest: RunManifest,
    pub events: Vec<LogEvent>,
}

impl RunLog {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut manifest = None;
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: LogEvent = serde_json::from_str(line)
                .map_err(|e| HarnessError::Runtime(format!("run log line {}: {e}", i + 1)))?;
            match (event, manifest.is_none()) {
                (
                    LogEvent::Manifest {
                        format_version,
                        manifest: m,
                    },
                    true,
                ) => {
                    if format_version != RUN_LOG_FORMAT_VERSION {
                        return Err(HarnessError::Runtime(format!(
                            "unsupported run log format_version {format_version}"
                        )));
                    }
                    manifest = Some(m);
                }
                (_, true) => {
                    return Err(HarnessError::Runtime(
                        "run log must start with a manifest record".into(),
                    ))
                }
                (LogEvent::Manifest { .. }, false) => {
                    return Err(HarnessError::Runtime(format!(
                        "run log line {}: second manifest record",
                        i + 1
                    )))
                }
                (e, false) => events.push(e),
            }
        }
        let manifest =
            manifest.ok_or_else(|| HarnessError::Runtime("run log is empty".into()))?;
        Ok(RunLog { manifest, events })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        RunLog::parse(&text)
    }
}

/// Append-only writer. Callers hand it events already in
/// (condition, episode, step) order.
pub struct LogSink {
    out: BufWriter<File>,
}

impl LogSink {
    pub fn create(path: &Path, manifest: &RunManifest) -> Result<Self, HarnessError> {
        let file = File::create(path)
            .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
        let mut sink = LogSink {
            out: BufWriter::new(file),
        };
        sink.write(&LogEvent::Manifest {
            format_version: RUN_LOG_FORMAT_VERSION,
            manifest: manifest.clone(),
        })?;
        sink.flush()?;
        Ok(sink)
    }

    pub fn write(&mut self, event: &LogEvent) -> Result<(), HarnessError> {
        writeln!(self.out, "{}", event.to_line()).map_err(|e| HarnessError::Runtime(e.to_string()))
    }

    pub fn flush(&mut self) -> Result<(), HarnessError> {
        self.out
            .flush()
            .map_err(|e| HarnessError::Runtime(e.to_string()))
    }
}
