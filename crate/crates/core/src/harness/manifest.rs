use super::HarnessError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    /// Hash of the stage configuration and every upstream artifact.
    pub key: String,
    /// Configuration the stage ran with.
    pub params: serde_json::Value,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: Vec<StageEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Self>, HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageEntry> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Insert or replace `entry`, dropping every stage recorded after it.
    pub fn record(&mut self, entry: StageEntry) {
        if let Some(i) = self.stages.iter().position(|s| s.name == entry.name) {
            self.stages.truncate(i);
        }
        self.stages.push(entry);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash a directory tree: sorted relative paths with their file hashes.
pub fn hash_dir(dir: &Path) -> Result<String, HarnessError> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let digest = hash_file(&dir.join(&rel))?;
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(digest.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("inside root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

/// Hash of a file or directory artifact.
pub fn hash_artifact(path: &Path) -> Result<String, HarnessError> {
    if path.is_dir() {
        hash_dir(path)
    } else {
        hash_file(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_hash_tracks_content_and_names() {
        let d = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(d.path().join("a/b")).unwrap();
        std::fs::write(d.path().join("a/b/x.txt"), "one").unwrap();
        std::fs::write(d.path().join("a/y.txt"), "two").unwrap();
        let h1 = hash_dir(&d.path().join("a")).unwrap();
        assert_eq!(h1, hash_dir(&d.path().join("a")).unwrap());
        std::fs::write(d.path().join("a/y.txt"), "three").unwrap();
        let h2 = hash_dir(&d.path().join("a")).unwrap();
        assert_ne!(h1, h2);
        std::fs::rename(d.path().join("a/y.txt"), d.path().join("a/z.txt")).unwrap();
        assert_ne!(h2, hash_dir(&d.path().join("a")).unwrap());
    }

    #[test]
    fn record_truncates_downstream() {
        let mut m = Manifest::default();
        for n in ["a", "b", "c"] {
            m.record(StageEntry {
                name: n.into(),
                key: n.into(),
                params: serde_json::Value::Null,
                artifacts: vec![],
            });
        }
        m.record(StageEntry {
            name: "b".into(),
            key: "new".into(),
            params: serde_json::Value::Null,
            artifacts: vec![],
        });
        let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(m.stage("b").unwrap().key, "new");
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
