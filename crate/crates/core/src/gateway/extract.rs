use thiserror::Error;

use crate::world::{parse_command, Action};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("reply matches no legal action")]
    NoMatch,
    #[error("reply matches several legal actions: {0:?}")]
    Ambiguous(Vec<String>),
}

const ARTICLES: [&str; 3] = ["the", "a", "an"];

/// Lowercase, punctuation and underscores to spaces, articles dropped,
/// whitespace collapsed. Returned as tokens.
fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !ARTICLES.contains(w))
        .map(str::to_string)
        .collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Maps a free-text reply onto exactly one legal action, or refuses.
///
/// Tried in order: exact match after normalization; the reply read as a
/// command; legal actions whose text appears in the reply; legal actions whose
/// text contains the reply. A stage with several hits is an error, never a guess.
pub fn extract_action(reply: &str, legal: &[Action]) -> Result<Action, ExtractionError> {
    let words = normalize(reply);
    if words.is_empty() {
        return Err(ExtractionError::NoMatch);
    }
    let candidates: Vec<(Vec<String>, &Action)> = legal
        .iter()
        .map(|a| (normalize(&a.canonical_text()), a))
        .collect();

    if let Some((_, a)) = candidates.iter().find(|(c, _)| *c == words) {
        return Ok((*a).clone());
    }
    if let Ok(parsed) = parse_command(reply) {
        if legal.contains(&parsed) {
            return Ok(parsed);
        }
    }

    let pick = |hits: Vec<&Action>| -> Option<Result<Action, ExtractionError>> {
        let mut texts: Vec<String> = hits.iter().map(|a| a.canonical_text()).collect();
        texts.dedup();
        match hits.len() {
            0 => None,
            1 => Some(Ok(hits[0].clone())),
            _ => Some(Err(ExtractionError::Ambiguous(texts))),
        }
    };

    let inside_reply: Vec<&Action> = candidates
        .iter()
        .filter(|(c, _)| contains_run(&words, c))
        .map(|(_, a)| *a)
        .collect();
    if let Some(r) = pick(inside_reply) {
        return r;
    }
    let around_reply: Vec<&Action> = candidates
        .iter()
        .filter(|(c, _)| contains_run(c, &words))
        .map(|(_, a)| *a)
        .collect();
    pick(around_reply).unwrap_or(Err(ExtractionError::NoMatch))
}
