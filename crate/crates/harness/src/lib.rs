//! Experiment harness: manifests, run logs, replay and report tables.

pub mod experiment;
pub mod manifest;
pub mod report;
pub mod runlog;
pub mod tables;

use std::path::Path;

use thiserror::Error;

use swarmplay::gateway::Gateway;

pub use experiment::{replay, run_experiment, snapshot};
pub use manifest::{episode_seed, RunManifest, WorldSource};
pub use report::{report_from_log, Report};
pub use runlog::{LogEvent, RunLog};
pub use tables::{emit_tables, TableFormat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

/// Builds the gateway a manifest asks for, resolving cassette and stub paths
/// against `base_dir`. Returns `None` when no backends are configured.
pub fn gateway_for(manifest: &RunManifest, base_dir: &Path) -> Result<Option<Gateway>, HarnessError> {
    let Some(config) = &manifest.gateway else {
        return Ok(None);
    };
    let mut config = config.clone();
    for b in &mut config.backends {
        if let Some(p) = b.endpoint.strip_prefix("stub:script:") {
            b.endpoint = format!("stub:script:{}", base_dir.join(p).display());
        }
    }
    let gw = Gateway::from_config(&config).map_err(|e| HarnessError::Config(e.to_string()))?;
    let gw = match &manifest.cassette {
        Some(c) => gw
            .with_cassette(c.mode, Some(&base_dir.join(&c.path)))
            .map_err(|e| HarnessError::Config(e.to_string()))?,
        None => gw,
    };
    Ok(Some(gw))
}
