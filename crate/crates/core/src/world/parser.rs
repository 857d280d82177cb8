//! Verb-noun command parser.
//!
//! Input is lowercased and split on anything that is not alphanumeric or
//! `_`; articles are dropped. The remaining noun words are joined with `_`
//! so "open the trophy case" addresses the object id `trophy_case`.

use thiserror::Error;

use super::action::{Action, Direction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty command")]
    Empty,
    #[error("unknown verb: {0:?}")]
    UnknownVerb(String),
    #[error("unknown object: {0:?}")]
    UnknownObject(String),
}

const ARTICLES: [&str; 3] = ["the", "a", "an"];

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty() && !ARTICLES.contains(t))
        .map(str::to_string)
        .collect()
}

fn noun(words: &[String]) -> Result<String, ParseError> {
    if words.is_empty() {
        return Err(ParseError::UnknownObject(String::new()));
    }
    Ok(words.join("_"))
}

fn direction(words: &[String]) -> Result<Direction, ParseError> {
    match words {
        [one] => Direction::from_word(one).ok_or_else(|| ParseError::UnknownObject(one.clone())),
        [] => Err(ParseError::UnknownObject(String::new())),
        more => Err(ParseError::UnknownObject(more.join(" "))),
    }
}

fn no_object(words: &[String], allowed: &[&str]) -> Result<(), ParseError> {
    match words {
        [] => Ok(()),
        [one] if allowed.contains(&one.as_str()) => Ok(()),
        more => Err(ParseError::UnknownObject(more.join(" "))),
    }
}

/// Parses free-form player text into an [`Action`].
pub fn parse_command(text: &str) -> Result<Action, ParseError> {
    let tokens = tokenize(text);
    let Some((verb, rest)) = tokens.split_first() else {
        return Err(ParseError::Empty);
    };

    if let Some(d) = Direction::from_word(verb) {
        no_object(rest, &[])?;
        return Ok(Action::Move(d));
    }

    match verb.as_str() {
        "go" | "walk" | "move" | "head" | "run" => direction(rest).map(Action::Move),
        "open" => noun(rest).map(Action::Open),
        "take" | "get" | "grab" => noun(rest).map(Action::Take),
        "pick" => match rest.split_first() {
            Some((up, obj)) if up == "up" => noun(obj).map(Action::Take),
            _ => noun(rest).map(Action::Take),
        },
        "drop" | "discard" => noun(rest).map(Action::Drop),
        "put" => match rest.split_first() {
            Some((down, obj)) if down == "down" => noun(obj).map(Action::Drop),
            _ => noun(rest).map(Action::Drop),
        },
        "look" | "l" => no_object(rest, &["around"]).map(|_| Action::Look),
        "inventory" | "inv" | "i" => no_object(rest, &[]).map(|_| Action::Inventory),
        other => Err(ParseError::UnknownVerb(other.to_string())),
    }
}
