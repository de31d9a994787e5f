//! Append-only run store: line-delimited JSON record files under per-run
//! directories, indexed by a manifest.
//!
//! Re-running with an identical config appends a new run; nothing is ever
//! overwritten. Record files carry no timestamps or run ids, so identical
//! inputs produce byte-identical files — timestamps live only in the
//! manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::TaskName;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: String,
    pub kind: String,
    pub config_hash: String,
    pub backend: String,
    pub task: Option<TaskName>,
    pub created_unix: u64,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run store I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("unknown run id: {0}")]
    UnknownRun(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<RunStore, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("runs")).map_err(io_err(&root))?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn manifest(&self) -> Result<Vec<RunEntry>, StoreError> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&raw).map_err(|e| StoreError::Corrupt {
            path,
            reason: e.to_string(),
        })
    }

    fn write_manifest(&self, entries: &[RunEntry]) -> Result<(), StoreError> {
        let path = self.manifest_path();
        let json = serde_json::to_string_pretty(entries).expect("manifest serializes");
        fs::write(&path, json).map_err(io_err(&path))
    }

    /// Starts a new run directory; the manifest entry is committed by
    /// [`RunWriter::finish`].
    pub fn begin_run(
        &self,
        kind: &str,
        config_hash: &str,
        backend: &str,
        task: Option<TaskName>,
    ) -> Result<RunWriter, StoreError> {
        let manifest = self.manifest()?;
        let prefix = format!("{kind}-{}", &config_hash[..config_hash.len().min(8)]);
        let seq = manifest
            .iter()
            .filter(|e| e.run_id.starts_with(&prefix))
            .count();
        let run_id = format!("{prefix}-{seq:03}");
        let dir = self.root.join("runs").join(&run_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(RunWriter {
            store: self.clone(),
            dir,
            entry: RunEntry {
                run_id,
                kind: kind.to_string(),
                config_hash: config_hash.to_string(),
                backend: backend.to_string(),
                task,
                created_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            },
        })
    }

    pub fn run_dir(&self, run_id: &str) -> Result<PathBuf, StoreError> {
        let dir = self.root.join("runs").join(run_id);
        if !dir.exists() {
            return Err(StoreError::UnknownRun(run_id.to_string()));
        }
        Ok(dir)
    }

    /// Latest run of `kind` (optionally restricted to a backend/task),
    /// by manifest order.
    pub fn latest_run(
        &self,
        kind: &str,
        backend: Option<&str>,
        task: Option<TaskName>,
    ) -> Result<Option<RunEntry>, StoreError> {
        Ok(self
            .manifest()?
            .into_iter()
            .filter(|e| e.kind == kind)
            .filter(|e| backend.map_or(true, |b| e.backend == b))
            .filter(|e| task.map_or(true, |t| e.task == Some(t)))
            .next_back())
    }

    pub fn read_jsonl<T: DeserializeOwned>(
        &self,
        run_id: &str,
        name: &str,
    ) -> Result<Vec<T>, StoreError> {
        let path = self.run_dir(run_id)?.join(name);
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        raw.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn read_json<T: DeserializeOwned>(
        &self,
        run_id: &str,
        name: &str,
    ) -> Result<T, StoreError> {
        let path = self.run_dir(run_id)?.join(name);
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&raw).map_err(|e| StoreError::Corrupt {
            path,
            reason: e.to_string(),
        })
    }
}

/// Writes record files into one run directory and commits the manifest entry
/// on `finish`.
pub struct RunWriter {
    store: RunStore,
    dir: PathBuf,
    entry: RunEntry,
}

impl RunWriter {
    pub fn run_id(&self) -> &str {
        &self.entry.run_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<(), StoreError> {
        let path = self.dir.join(name);
        let mut out = Vec::new();
        for item in items {
            serde_json::to_writer(&mut out, item).expect("records serialize");
            out.push(b'\n');
        }
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(&out).map_err(io_err(&path))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), StoreError> {
        let path = self.dir.join(name);
        let json = serde_json::to_string_pretty(value).expect("value serializes");
        fs::write(&path, json).map_err(io_err(&path))
    }

    /// Commits the manifest entry and returns it.
    pub fn finish(self) -> Result<RunEntry, StoreError> {
        let mut manifest = self.store.manifest()?;
        manifest.push(self.entry.clone());
        self.store.write_manifest(&manifest)?;
        Ok(self.entry)
    }
}
