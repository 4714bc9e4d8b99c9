//! Artifact files under the stage output directory and the manifest that
//! chains them back to raw inputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub stage: String,
    pub sha256: String,
    pub seed: u64,
    /// Input path (artifact-relative, or as written in the config for raw
    /// inputs) to its hash at the time the artifact was written.
    pub inputs: BTreeMap<String, String>,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

impl Manifest {
    pub fn load(stage_out: &Path) -> Result<Manifest, CliError> {
        let path = stage_out.join(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let raw = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, stage_out: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        write_atomic(&stage_out.join(MANIFEST), json.as_bytes())
    }

    /// Follows input edges from `artifact` and returns every raw input it
    /// depends on, i.e. inputs that are not themselves artifacts.
    pub fn raw_inputs(&self, artifact: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![artifact.to_string()];
        let mut seen = std::collections::BTreeSet::new();
        while let Some(a) = stack.pop() {
            if !seen.insert(a.clone()) {
                continue;
            }
            match self.artifacts.get(&a) {
                Some(rec) => stack.extend(rec.inputs.keys().cloned()),
                None => out.push(a),
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

/// Collects the outputs of one stage and records them in the manifest.
pub struct StageWriter<'a> {
    stage_out: &'a Path,
    stage: &'static str,
    seed: u64,
    params: serde_json::Value,
    inputs: BTreeMap<String, String>,
    written: Vec<(String, String)>,
}

impl<'a> StageWriter<'a> {
    pub fn new(stage_out: &'a Path, stage: &'static str, seed: u64, params: serde_json::Value) -> Self {
        StageWriter { stage_out, stage, seed, params, inputs: BTreeMap::new(), written: Vec::new() }
    }

    /// Records an input under `key` with the hash of the file at `path`.
    pub fn input(&mut self, key: impl Into<String>, path: &Path) -> Result<(), CliError> {
        let hash = sha256_file(path)?;
        self.inputs.insert(key.into(), hash);
        Ok(())
    }

    /// Resolves an upstream artifact, failing with its path when absent.
    pub fn artifact_input(&mut self, rel: &str) -> Result<PathBuf, CliError> {
        let path = require(self.stage_out, rel)?;
        self.input(rel, &path)?;
        Ok(path)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.stage_out.join(rel);
        write_atomic(&path, bytes)?;
        self.written.push((rel.to_string(), sha256_bytes(bytes)));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut json = serde_json::to_string_pretty(value).expect("artifact serializes");
        json.push('\n');
        self.write(rel, json.as_bytes())
    }

    pub fn finish(self) -> Result<Vec<String>, CliError> {
        let mut manifest = Manifest::load(self.stage_out)?;
        let mut names = Vec::new();
        for (rel, sha256) in self.written {
            manifest.artifacts.insert(
                rel.clone(),
                ArtifactRecord {
                    stage: self.stage.to_string(),
                    sha256,
                    seed: self.seed,
                    inputs: self.inputs.clone(),
                    params: self.params.clone(),
                },
            );
            names.push(rel);
        }
        manifest.save(self.stage_out)?;
        Ok(names)
    }
}

pub fn require(stage_out: &Path, rel: &str) -> Result<PathBuf, CliError> {
    let path = stage_out.join(rel);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact(path))
    }
}
