use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::digest::canonical_line;

/// One recorded exchange. Only the prompt digest is kept, never the prompt
/// or any credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub prompt_digest: String,
    pub reply: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CassetteMode {
    Live,
    Record,
    Replay,
}

/// Where replies come from: the network, the network with recording, or a
/// cassette file.
#[derive(Debug)]
pub enum ExchangeSource {
    Live,
    Record(CassetteWriter),
    Replay(Cassette),
}

#[derive(Debug)]
pub struct CassetteWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl CassetteWriter {
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Ok(CassetteWriter {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one whole line under the lock, so concurrent writers never
    /// interleave partial records.
    pub fn append(&self, record: &CassetteRecord) -> Result<(), GatewayError> {
        let mut line = canonical_line(record).map_err(|e| GatewayError::Io(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().expect("cassette lock poisoned");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| GatewayError::Io(e.to_string()))
    }
}

/// Recorded replies, served first-in first-out per prompt digest.
#[derive(Debug, Default)]
pub struct Cassette {
    queues: Mutex<BTreeMap<String, VecDeque<CassetteRecord>>>,
}

impl Cassette {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut queues: BTreeMap<String, VecDeque<CassetteRecord>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CassetteRecord =
                serde_json::from_str(line).map_err(|e| GatewayError::CassetteCorrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            queues
                .entry(record.prompt_digest.clone())
                .or_default()
                .push_back(record);
        }
        Ok(Cassette {
            queues: Mutex::new(queues),
        })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Cassette::parse(&text)
    }

    pub fn take(&self, digest: &str) -> Result<CassetteRecord, GatewayError> {
        let mut queues = self.queues.lock().expect("cassette lock poisoned");
        queues
            .get_mut(digest)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| GatewayError::CassetteMiss(digest.to_string()))
    }

    pub fn remaining(&self) -> usize {
        let queues = self.queues.lock().expect("cassette lock poisoned");
        queues.values().map(VecDeque::len).sum()
    }
}

/// Opens the exchange source for `mode`. Replay requires the cassette to exist.
pub fn record_replay(mode: CassetteMode, path: Option<&Path>) -> Result<ExchangeSource, GatewayError> {
    match (mode, path) {
        (CassetteMode::Live, _) => Ok(ExchangeSource::Live),
        (CassetteMode::Record, Some(p)) => Ok(ExchangeSource::Record(CassetteWriter::create(p)?)),
        (CassetteMode::Replay, Some(p)) => Ok(ExchangeSource::Replay(Cassette::load(p)?)),
        (m, None) => Err(GatewayError::InvalidConfig(format!(
            "cassette mode {m:?} needs a cassette path"
        ))),
    }
}
