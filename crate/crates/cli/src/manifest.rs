//! Hash-linked pipeline manifest: every stage records the content hashes of
//! its inputs and outputs, and a stage refuses to run on mismatched
//! upstream hashes unless forced. No timestamps anywhere, so identical
//! inputs and parameters reproduce identical bytes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug)]
pub enum StageError {
    /// Upstream artifact absent or its stage never recorded: exit 2.
    MissingArtifact { stage: String, artifact: String },
    /// Artifact bytes disagree with the manifest: exit 3.
    HashMismatch { stage: String, artifact: String },
    /// Everything else: exit 1.
    Domain { stage: String, source: anyhow::Error },
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::MissingArtifact { .. } => 2,
            StageError::HashMismatch { .. } => 3,
            StageError::Domain { .. } => 1,
        }
    }

    pub fn stage(&self) -> &str {
        match self {
            StageError::MissingArtifact { stage, .. } => stage,
            StageError::HashMismatch { stage, .. } => stage,
            StageError::Domain { stage, .. } => stage,
        }
    }

    pub fn message(&self) -> String {
        match self {
            StageError::MissingArtifact { artifact, .. } => {
                format!("missing upstream artifact {artifact}; run the producing stage first")
            }
            StageError::HashMismatch { artifact, .. } => {
                format!("artifact {artifact} does not match the manifest hash; rerun upstream or pass --force")
            }
            StageError::Domain { source, .. } => format!("{source:#}"),
        }
    }
}

pub fn domain_err(stage: &str, source: impl Into<anyhow::Error>) -> StageError {
    StageError::Domain {
        stage: stage.to_string(),
        source: source.into(),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub params: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub corpus_hash: Option<String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl PipelineManifest {
    pub fn load(workdir: &Path) -> anyhow::Result<Self> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, workdir: &Path) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        atomic_write(&workdir.join(MANIFEST_FILE), &bytes)?;
        Ok(())
    }

    pub fn recorded_output(&self, stage: &str, artifact: &str) -> Option<&str> {
        self.stages
            .get(stage)
            .and_then(|s| s.outputs.get(artifact))
            .map(|s| s.as_str())
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Write to a sibling temp file, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Run a writer against a temp path, then rename its output into place.
pub fn atomic_file<E: Into<anyhow::Error>>(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), E>,
) -> anyhow::Result<()> {
    let tmp = tmp_path(path);
    write(&tmp).map_err(Into::into)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// One stage process at a time per working directory.
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self, StageError> {
        let path = workdir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StageError::Domain {
                stage: "lock".to_string(),
                source: anyhow::anyhow!(
                    "workdir is locked by another stage ({} exists)",
                    path.display()
                ),
            }),
            Err(e) => Err(domain_err("lock", e)),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
