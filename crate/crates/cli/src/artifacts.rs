//! In-memory artifact staging and the run manifest.
//!
//! A stage renders every output into memory first; nothing touches the
//! output directory unless the whole stage succeeds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<(), String> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| e.to_string())?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Renders CSV through a writer callback.
    pub fn add_csv(
        &mut self,
        name: impl Into<String>,
        render: impl FnOnce(&mut Vec<u8>) -> lda_core::Result<()>,
    ) -> Result<(), String> {
        let mut buf = Vec::new();
        render(&mut buf).map_err(|e| e.to_string())?;
        self.add(name, buf);
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    config: &'a serde_json::Value,
    config_sha256: String,
    input_sha256: Option<String>,
    artifacts: Vec<ManifestEntry>,
}

/// Writes all artifacts plus `manifest.json`. On a write failure the files
/// already written by this call are removed again.
pub fn commit(
    out_dir: &Path,
    stage: &str,
    config: &serde_json::Value,
    input_sha256: Option<String>,
    artifacts: Artifacts,
) -> Result<PathBuf, String> {
    fs::create_dir_all(out_dir).map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
    let canonical = serde_json::to_vec(config).map_err(|e| e.to_string())?;
    let mut entries = Vec::new();
    let mut written: Vec<PathBuf> = Vec::new();
    let manifest_path = out_dir.join("manifest.json");
    let result = (|| {
        for (name, bytes) in &artifacts.files {
            let path = out_dir.join(name);
            fs::write(&path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            written.push(path);
            entries.push(ManifestEntry { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        }
        let manifest = Manifest {
            stage,
            config,
            config_sha256: sha256_hex(&canonical),
            input_sha256,
            artifacts: entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| e.to_string())?;
        bytes.push(b'\n');
        fs::write(&manifest_path, bytes).map_err(|e| format!("cannot write manifest: {e}"))?;
        Ok(())
    })();
    if let Err(e) = result {
        for p in written {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(manifest_path)
}
