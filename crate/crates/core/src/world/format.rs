use thiserror::Error;

use super::spec::{SpecError, WorldSpec};
use crate::digest::canonical_json;

pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed world document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] SpecError),
}

/// Parses and fully validates a world document.
pub fn load_world(text: &str) -> Result<WorldSpec, FormatError> {
    let spec: WorldSpec = serde_json::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

/// Canonical (sorted-key) serialization.
pub fn save_world(spec: &WorldSpec) -> String {
    canonical_json(spec).expect("world specs always serialize")
}
