//! Artifact directory with all-or-nothing semantics: files go to a staging
//! directory next to the target and are moved into place only after the
//! manifest is written. A dropped, unfinished bundle leaves nothing behind.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::RunError;
use crate::formats::{sha256_hex, Manifest, ManifestEntry};

pub const MANIFEST: &str = "manifest.json";

pub struct ArtifactDir {
    target: PathBuf,
    staging: PathBuf,
    files: Vec<ManifestEntry>,
    finished: bool,
}

impl ArtifactDir {
    pub fn create(target: &Path) -> Result<Self, RunError> {
        if target.exists() && !replaceable(target)? {
            return Err(RunError::OutputOccupied(target.to_path_buf()));
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| RunError::io(&parent, e))?;
        let name = target.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| RunError::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| RunError::io(&staging, e))?;
        Ok(Self { target: target.to_path_buf(), staging, files: Vec::new(), finished: false })
    }

    /// Writes `rel` (forward slashes) and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.staging.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(ManifestEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, rel: &str, value: &T) -> Result<(), RunError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    /// Writes the manifest and moves the bundle to its target.
    pub fn finish(mut self, scenario: &str, command: &str, seed: Option<u64>) -> Result<Manifest, RunError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest { scenario: scenario.into(), command: command.into(), seed, files: self.files.clone() };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        let path = self.staging.join(MANIFEST);
        fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| RunError::io(&self.target, e))?;
        }
        fs::rename(&self.staging, &self.target).map_err(|e| RunError::io(&self.target, e))?;
        self.finished = true;
        Ok(manifest)
    }
}

impl Drop for ArtifactDir {
    fn drop(&mut self) {
        if !self.finished {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// An existing directory may be replaced if it is empty or holds a previous bundle.
fn replaceable(dir: &Path) -> Result<bool, RunError> {
    if !dir.is_dir() {
        return Ok(false);
    }
    let mut entries = fs::read_dir(dir).map_err(|e| RunError::io(dir, e))?;
    Ok(entries.next().is_none() || dir.join(MANIFEST).is_file())
}
