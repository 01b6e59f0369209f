//! Manifest of tensor files: `{model_name, tensors: [{name, shape, file, sha256}]}`.
//! `file` is resolved relative to the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dfq_core::codec::Tensor;
use dfq_core::format;

use crate::error::{CliError, Result};
use crate::output::{write_atomic, write_json};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_name: String,
    pub tensors: Vec<ManifestEntry>,
}

/// A parsed manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<LoadedManifest> {
        let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| CliError::bad_input(path, e))?;
        let mut names = HashSet::new();
        for t in &manifest.tensors {
            if !names.insert(t.name.as_str()) {
                return Err(CliError::bad_input(path, format!("duplicate tensor name {:?}", t.name)));
            }
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedManifest { manifest, base_dir })
    }
}

impl LoadedManifest {
    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.file)
    }

    /// Read one tensor, checking its hash, name and shape against the entry.
    pub fn load_tensor(&self, entry: &ManifestEntry) -> Result<Tensor> {
        let path = self.path_of(entry);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let digest = sha256_hex(&bytes);
        if !digest.eq_ignore_ascii_case(&entry.sha256) {
            return Err(CliError::bad_input(
                &path,
                format!("sha256 {digest} does not match manifest {}", entry.sha256),
            ));
        }
        let tensor = format::tensor_from_bytes(&bytes).map_err(|e| CliError::bad_input(&path, e))?;
        if tensor.name != entry.name || tensor.shape != entry.shape {
            return Err(CliError::bad_input(
                &path,
                format!(
                    "file holds {:?} {:?}, manifest says {:?} {:?}",
                    tensor.name, tensor.shape, entry.name, entry.shape
                ),
            ));
        }
        Ok(tensor)
    }
}

/// Make a tensor name safe to use as a file stem.
pub fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

/// Write each tensor as a QTNS file in `dir` plus `dir/manifest.json`.
/// Entries are sorted by name. Returns the manifest path.
pub fn write_tensors(dir: &Path, model_name: &str, tensors: &[Tensor]) -> Result<PathBuf> {
    let mut sorted: Vec<&Tensor> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut used = HashSet::new();
    let mut entries = Vec::with_capacity(sorted.len());
    for (i, t) in sorted.into_iter().enumerate() {
        let mut stem = file_stem(&t.name);
        if !used.insert(stem.clone()) {
            stem = format!("{stem}-{i}");
            used.insert(stem.clone());
        }
        let file = format!("{stem}.qtns");
        let bytes = format::tensor_to_bytes(t)?;
        write_atomic(&dir.join(&file), &bytes)?;
        entries.push(ManifestEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            file,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        model_name: model_name.to_string(),
        tensors: entries,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}
