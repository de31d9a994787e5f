//! Disk cache of captured t0 activations, keyed by
//! `(backend, task, instance_id, layer)`, so probe sweeps never re-run
//! forward passes.
//!
//! One JSONL file per `(backend, task)` pair; records are kept sorted by
//! `(instance_id, layer)` so rewriting the file is byte-deterministic.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::ActivationVector;
use crate::types::TaskName;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    instance_id: String,
    layer: usize,
    position: usize,
    values: Vec<f64>,
}

/// In-memory view of one `(backend, task)` cache file.
#[derive(Debug)]
pub struct ActivationCache {
    path: PathBuf,
    entries: BTreeMap<(String, usize), ActivationVector>,
    dirty: bool,
}

impl ActivationCache {
    /// Opens (or initializes) the cache for `(backend, task)` under `root`.
    pub fn open(root: &Path, backend_name: &str, task: TaskName) -> io::Result<ActivationCache> {
        let dir = root.join(backend_name);
        let path = dir.join(format!("{task}.jsonl"));
        let mut entries = BTreeMap::new();
        if path.exists() {
            let raw = fs::read_to_string(&path)?;
            for line in raw.lines().filter(|l| !l.trim().is_empty()) {
                let rec: CacheRecord = serde_json::from_str(line)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                entries.insert(
                    (rec.instance_id.clone(), rec.layer),
                    ActivationVector {
                        layer: rec.layer,
                        position: rec.position,
                        values: rec.values,
                    },
                );
            }
        }
        Ok(ActivationCache {
            path,
            entries,
            dirty: false,
        })
    }

    pub fn get(&self, instance_id: &str, layer: usize) -> Option<&ActivationVector> {
        self.entries.get(&(instance_id.to_string(), layer))
    }

    pub fn contains(&self, instance_id: &str, layer: usize) -> bool {
        self.entries.contains_key(&(instance_id.to_string(), layer))
    }

    pub fn insert(&mut self, instance_id: &str, activation: ActivationVector) {
        self.entries
            .insert((instance_id.to_string(), activation.layer), activation);
        self.dirty = true;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the cache back to disk when modified. Records are emitted in
    /// `(instance_id, layer)` order.
    pub fn flush(&mut self) -> io::Result<()> {
        if !self.dirty {
            return Ok(());
        }
        if let Some(parent) = self.path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut out = Vec::new();
        for ((instance_id, layer), activation) in &self.entries {
            let rec = CacheRecord {
                instance_id: instance_id.clone(),
                layer: *layer,
                position: activation.position,
                values: activation.values.clone(),
            };
            serde_json::to_writer(&mut out, &rec).map_err(io::Error::other)?;
            out.push(b'\n');
        }
        let mut file = fs::File::create(&self.path)?;
        file.write_all(&out)?;
        self.dirty = false;
        Ok(())
    }
}

impl Drop for ActivationCache {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let act = ActivationVector {
            layer: 2,
            position: 17,
            values: vec![0.25, -1.5, 3.0],
        };
        {
            let mut cache =
                ActivationCache::open(dir.path(), "planted", TaskName::Anachronisms).unwrap();
            cache.insert("a-0", act.clone());
            cache.flush().unwrap();
        }
        let cache = ActivationCache::open(dir.path(), "planted", TaskName::Anachronisms).unwrap();
        assert_eq!(cache.get("a-0", 2), Some(&act));
        assert!(!cache.contains("a-0", 3));
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache =
            ActivationCache::open(dir.path(), "planted", TaskName::SportsUnderstanding).unwrap();
        for i in (0..10).rev() {
            cache.insert(
                &format!("s-{i}"),
                ActivationVector {
                    layer: i % 3,
                    position: 1,
                    values: vec![i as f64 / 3.0],
                },
            );
        }
        cache.flush().unwrap();
        let path = dir
            .path()
            .join("planted")
            .join("sports_understanding.jsonl");
        let first = fs::read(&path).unwrap();

        let mut cache =
            ActivationCache::open(dir.path(), "planted", TaskName::SportsUnderstanding).unwrap();
        cache.insert(
            "s-0",
            ActivationVector {
                layer: 0,
                position: 1,
                values: vec![0.0],
            },
        );
        cache.flush().unwrap();
        let second = fs::read(&path).unwrap();
        assert_eq!(first, second);
    }
}
