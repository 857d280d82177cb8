use serde::{Deserialize, Serialize};

use super::memory::{attention_weights, MemoryBuffer};
use crate::critic::Critique;
use crate::digest::short_hash;
use crate::world::{Action, Direction, Observation};

/// Bumped whenever the wording or block order below changes.
pub const PROMPT_TEMPLATE_VERSION: u32 = 1;

/// How many memory entries the prompt shows.
pub const MEMORY_LINES: usize = 10;

const INSTRUCTIONS: &str = "You are playing a text adventure game. Each turn you see where you \
are, the actions that are possible right now, what you and the other players tried before, \
and the rewards or punishments those attempts received. Reply with exactly one action, \
copied from the list of legal actions.";

const TERMS: [&str; 6] = [
    "go <direction>",
    "open <object>",
    "take <object>",
    "drop <object>",
    "look",
    "inventory",
];

/// Who the prompt is addressed to and what they are trying to achieve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub agent_id: String,
    pub role_label: String,
    pub goal_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// Both messages joined, which is what cassettes and stubs key on.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    pub fn digest(&self) -> String {
        short_hash(self.text().as_bytes())
    }
}

/// Fingerprint of the fixed template text, recorded in run manifests.
pub fn template_hash() -> String {
    let mut skeleton = format!("v{PROMPT_TEMPLATE_VERSION}\n{INSTRUCTIONS}\n");
    for t in TERMS {
        skeleton.push_str(t);
        skeleton.push('\n');
    }
    skeleton.push_str("Context|Goal|Legal actions|Memory|Critique|Terms");
    short_hash(skeleton.as_bytes())
}

/// Renders the prompt. Output depends only on the arguments, so equal inputs
/// give equal bytes.
pub fn format_prompt(
    context: &PromptContext,
    observation: &Observation,
    current_digest: &str,
    legal: &[Action],
    memory: &MemoryBuffer,
    critique: Option<&Critique>,
) -> Prompt {
    let system = format!(
        "{INSTRUCTIONS}\nYou are {} and play the role of the {}.",
        context.agent_id, context.role_label
    );

    let mut user = String::new();
    user.push_str("Context:\n");
    user.push_str(&observation.description_text);
    user.push('\n');
    user.push_str(&format!(
        "Last result: {}\n",
        serde_json::to_value(observation.last_result)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    ));

    user.push_str("\nGoal:\n");
    user.push_str(&context.goal_text);
    user.push('\n');

    user.push_str("\nLegal actions:\n");
    for a in legal {
        user.push_str(&a.display_text());
        user.push('\n');
    }

    user.push_str("\nMemory:\n");
    let weights = attention_weights(memory, current_digest);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // descending weight, older entries first on ties
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    if order.is_empty() {
        user.push_str("(nothing yet)\n");
    }
    for &i in order.iter().take(MEMORY_LINES) {
        let e = memory.get(i).expect("index from weights");
        let here = if e.state_digest == current_digest {
            " [here]"
        } else {
            ""
        };
        user.push_str(&format!(
            "step {} {}: {} -> {:+.2}{here}\n",
            e.step,
            e.agent_id,
            e.action.canonical_text(),
            e.reward.value
        ));
    }

    if let Some(c) = critique {
        user.push_str("\nCritique:\n");
        user.push_str(&c.render());
    }

    user.push_str("\nTerms:\n");
    for t in TERMS {
        user.push_str(t);
        user.push('\n');
    }
    let dirs: Vec<&str> = Direction::ALL.iter().map(|d| d.name()).collect();
    user.push_str(&format!("directions: {}\n", dirs.join(", ")));

    Prompt { system, user }
}
