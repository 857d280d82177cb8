use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::critic::{Critique, RewardSignal};
use crate::world::Action;

/// One recorded outcome. Entries are never mutated after they are pushed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub episode_id: String,
    pub step: usize,
    pub agent_id: String,
    pub state_digest: String,
    pub action: Action,
    pub reward: RewardSignal,
    pub critique: Option<Critique>,
}

/// Insertion-ordered entries, oldest evicted first once `window` is exceeded.
/// `window: None` keeps everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryBuffer {
    entries: VecDeque<MemoryEntry>,
    window: Option<usize>,
}

impl MemoryBuffer {
    pub fn new(window: Option<usize>) -> Self {
        MemoryBuffer {
            entries: VecDeque::new(),
            window,
        }
    }

    pub fn window(&self) -> Option<usize> {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&MemoryEntry> {
        self.entries.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    pub fn push(&mut self, entry: MemoryEntry) {
        self.entries.push_back(entry);
        if let Some(w) = self.window {
            while self.entries.len() > w {
                self.entries.pop_front();
            }
        }
    }

    /// Returns a new buffer with `batch` appended in order.
    pub fn appended<I: IntoIterator<Item = MemoryEntry>>(&self, batch: I) -> MemoryBuffer {
        let mut out = self.clone();
        for e in batch {
            out.push(e);
        }
        out
    }
}

/// Attention over memory: weight_i ∝ exp(reward_i) × (2 if the entry was
/// recorded at `current_digest`, else 1), normalized to sum to 1.
///
/// The returned vector is indexed like the buffer. Computed in log space so
/// large rewards cannot overflow.
pub fn attention_weights(memory: &MemoryBuffer, current_digest: &str) -> Vec<f64> {
    if memory.is_empty() {
        return Vec::new();
    }
    let logits: Vec<f64> = memory
        .iter()
        .map(|e| {
            let boost = if e.state_digest == current_digest {
                std::f64::consts::LN_2
            } else {
                0.0
            };
            e.reward.value + boost
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / z).collect()
}
