//! The JSON parameter document shared by the model and the economy.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::costs::EconParams;
use crate::seirah::{InitialCounts, SeirahParams};

/// Shipped default: Ile-de-France epidemiological and economic constants.
pub const DEFAULT_PARAMS_JSON: &str = include_str!("../params/table1.json");

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing parameter document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] crate::seirah::ModelError),
    #[error(transparent)]
    Econ(#[from] crate::costs::CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    #[serde(flatten)]
    pub model: SeirahParams,
    pub init: InitialCounts,
    pub econ: EconParams,
}

impl Default for ParameterSet {
    fn default() -> Self {
        ParameterSet {
            model: SeirahParams::table1(),
            init: InitialCounts::default(),
            econ: EconParams::default(),
        }
    }
}

impl ParameterSet {
    pub fn from_json(text: &str) -> Result<Self, ParamsError> {
        let set: ParameterSet = serde_json::from_str(text)?;
        set.model.validate()?;
        set.econ.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ParamsError> {
        let text = std::fs::read_to_string(path).map_err(|source| ParamsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the canonical (compact) JSON encoding.
    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

/// Hex SHA-256 of a value's compact JSON encoding.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let canonical = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(&canonical))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_builtin_defaults() {
        let set = ParameterSet::from_json(DEFAULT_PARAMS_JSON).unwrap();
        assert_eq!(set, ParameterSet::default());
        assert_eq!(set.digest(), ParameterSet::default().digest());
        assert_eq!(set.digest().len(), 64);
    }

    #[test]
    fn rejects_invalid_documents() {
        let bad = DEFAULT_PARAMS_JSON.replace("\"r\": 0.043", "\"r\": 1.5");
        assert!(ParameterSet::from_json(&bad).is_err());
        assert!(ParameterSet::from_json("{}").is_err());
    }
}
