use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::parser::parse_command;

/// Compass directions, declared in legal-action order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::South => "south",
            Direction::East => "east",
            Direction::West => "west",
        }
    }

    pub fn from_word(word: &str) -> Option<Direction> {
        match word {
            "north" | "n" => Some(Direction::North),
            "south" | "s" => Some(Direction::South),
            "east" | "e" => Some(Direction::East),
            "west" | "w" => Some(Direction::West),
            _ => None,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A player command. Object references are world ids (lowercase, `_`
/// separated); the parser maps multi-word nouns onto them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Move(Direction),
    Open(String),
    Take(String),
    Drop(String),
    Look,
    Inventory,
}

impl Action {
    /// Normalized lowercase command text. Parses back to `self`.
    pub fn canonical_text(&self) -> String {
        match self {
            Action::Move(d) => format!("go {d}"),
            Action::Open(o) => format!("open {o}"),
            Action::Take(o) => format!("take {o}"),
            Action::Drop(o) => format!("drop {o}"),
            Action::Look => "look".to_string(),
            Action::Inventory => "inventory".to_string(),
        }
    }

    /// Object id for Open/Take/Drop.
    pub fn object(&self) -> Option<&str> {
        match self {
            Action::Open(o) | Action::Take(o) | Action::Drop(o) => Some(o),
            _ => None,
        }
    }

    /// Sentence-style rendering used in critiques: "Open mailbox", "Go north".
    pub fn display_text(&self) -> String {
        let text = self.canonical_text().replace('_', " ");
        let mut chars = text.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => text,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical_text())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_command(&text).map_err(serde::de::Error::custom)
    }
}
