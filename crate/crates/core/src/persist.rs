//! Versioned parameter files shared by reward models and policy checkpoints.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "social-rl.params";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed parameter file: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: expected {expected} v{VERSION}, found {found}")]
    Mismatch {
        path: String,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterFile<T> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub payload: T,
}

impl<T: Serialize + DeserializeOwned> ParameterFile<T> {
    pub fn new(kind: &str, feature_dim: usize, hidden_dim: usize, payload: T) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            feature_dim,
            hidden_dim,
            payload,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameter files always serialize")
    }

    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        std::fs::write(path, self.to_json()).map_err(|source| PersistError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path, kind: &str) -> Result<Self, PersistError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
            path: p.clone(),
            source,
        })?;
        Self::from_json(&text, kind).map_err(|e| match e {
            PersistError::Malformed { message, .. } => PersistError::Malformed { path: p, message },
            PersistError::Mismatch { expected, found, .. } => PersistError::Mismatch {
                path: p,
                expected,
                found,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str, kind: &str) -> Result<Self, PersistError> {
        let file: Self = serde_json::from_str(text).map_err(|e| PersistError::Malformed {
            path: String::new(),
            message: e.to_string(),
        })?;
        if file.format != FORMAT || file.version != VERSION || file.kind != kind {
            return Err(PersistError::Mismatch {
                path: String::new(),
                expected: format!("{FORMAT}/{kind}"),
                found: format!("{}/{} v{}", file.format, file.kind, file.version),
            });
        }
        Ok(file)
    }
}
