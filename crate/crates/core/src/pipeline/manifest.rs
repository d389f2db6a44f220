//! Artifact manifests: which inputs, config and seed produced which files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MANIFEST_FORMAT: &str = "social-rl.manifest";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// File name for artifacts in the output directory, full path otherwise.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a serializable config fragment.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

pub fn manifest_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join(format!("{stage}.manifest.json"))
}

impl Manifest {
    pub fn new(stage: &str, seed: u64, config_hash: String, inputs: Vec<FileDigest>) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            stage: stage.into(),
            tool_version: TOOL_VERSION.into(),
            seed,
            config_hash,
            inputs,
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Artifact(format!("{}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT {
            return Err(PipelineError::Artifact(format!("{}: not a manifest", path.display())));
        }
        Ok(m)
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), PipelineError> {
        let path = manifest_path(out_dir, &self.stage);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }

    /// Records the current hash of each output file.
    pub fn record_outputs(&mut self, out_dir: &Path, names: &[&str]) -> Result<(), PipelineError> {
        self.outputs = names
            .iter()
            .map(|n| {
                Ok(FileDigest {
                    path: n.to_string(),
                    sha256: file_sha256(&out_dir.join(n))?,
                })
            })
            .collect::<Result<_, PipelineError>>()?;
        Ok(())
    }

    /// Same stage, seed, config, tool version and inputs, and every output
    /// still on disk unchanged.
    pub fn is_up_to_date(&self, previous: &Manifest, out_dir: &Path) -> bool {
        previous.stage == self.stage
            && previous.tool_version == self.tool_version
            && previous.seed == self.seed
            && previous.config_hash == self.config_hash
            && previous.inputs == self.inputs
            && !previous.outputs.is_empty()
            && previous
                .outputs
                .iter()
                .all(|o| file_sha256(&out_dir.join(&o.path)).is_ok_and(|h| h == o.sha256))
    }
}

/// Digest of an upstream artifact, checked against the manifest that
/// produced it. A missing producer manifest or a hash mismatch means the
/// file was not written by this pipeline or was changed afterwards.
pub fn verified_artifact(out_dir: &Path, name: &str, producer: &str) -> Result<FileDigest, PipelineError> {
    let path = out_dir.join(name);
    if !path.exists() {
        return Err(PipelineError::Artifact(format!(
            "{} is missing; run `{producer}` first",
            path.display()
        )));
    }
    let mpath = manifest_path(out_dir, producer);
    if !mpath.exists() {
        return Err(PipelineError::Artifact(format!(
            "{} has no manifest from `{producer}`",
            path.display()
        )));
    }
    let manifest = Manifest::load(&mpath)?;
    let expected = manifest
        .outputs
        .iter()
        .find(|o| o.path == name)
        .ok_or_else(|| PipelineError::Artifact(format!("`{producer}` manifest does not list {name}")))?;
    let actual = file_sha256(&path)?;
    if actual != expected.sha256 {
        return Err(PipelineError::Artifact(format!(
            "{} was modified after `{producer}` wrote it (sha256 {actual}, manifest {})",
            path.display(),
            expected.sha256
        )));
    }
    Ok(FileDigest {
        path: name.to_string(),
        sha256: actual,
    })
}

/// Digest of a file outside the output directory (config inputs).
pub fn external_input(path: &Path) -> Result<FileDigest, PipelineError> {
    Ok(FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: file_sha256(path)?,
    })
}
