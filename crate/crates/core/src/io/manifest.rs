//! Dataset manifests: one JSON object per line, in item order.

use super::tensor_file::read_tensor_dims;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Tensor file paths of one image set, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFiles {
    pub direct: String,
    pub depth: String,
    pub normal: String,
    pub albedo: String,
    pub target: String,
}

impl ItemFiles {
    pub fn for_id(id: &str) -> Self {
        Self {
            direct: format!("{id}/direct.gitf"),
            depth: format!("{id}/depth.gitf"),
            normal: format!("{id}/normal.gitf"),
            albedo: format!("{id}/albedo.gitf"),
            target: format!("{id}/target.gitf"),
        }
    }

    /// `(name, path, channels)` of every file.
    pub fn entries(&self) -> [(&'static str, &str, usize); 5] {
        [
            ("direct", &self.direct, 3),
            ("depth", &self.depth, 1),
            ("normal", &self.normal, 3),
            ("albedo", &self.albedo, 3),
            ("target", &self.target, 3),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetItem {
    pub id: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub files: ItemFiles,
    /// SHA-256 of the scene distribution config.
    pub scene_digest: String,
    /// SHA-256 of the path tracer config.
    pub render_digest: String,
}

impl DatasetItem {
    pub fn path(&self, root: &Path, rel: &str) -> PathBuf {
        root.join(rel)
    }

    fn validate(&self, root: &Path) -> Result<()> {
        let item_err = |msg: String| Error::Item { id: self.id.clone(), msg };
        for (name, rel, channels) in self.files.entries() {
            let p = root.join(rel);
            if !p.is_file() {
                return Err(item_err(format!("missing {name} file {}", p.display())));
            }
            let dims = read_tensor_dims(&p).map_err(|e| item_err(e.to_string()))?;
            if dims != [channels, self.height, self.width] {
                return Err(item_err(format!(
                    "{name} has dims {dims:?}, expected {:?}",
                    [channels, self.height, self.width]
                )));
            }
        }
        Ok(())
    }
}

pub fn write_manifest(root: &Path, items: &[DatasetItem]) -> Result<()> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("items serialize"));
        s.push('\n');
    }
    super::write_atomic(&root.join(MANIFEST_NAME), s.as_bytes())
}

/// Parses the manifest without touching item files.
pub fn read_manifest(root: &Path) -> Result<Vec<DatasetItem>> {
    let path = root.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.clone(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Manifest items in order, after checking every file exists with the recorded resolution.
pub fn load_dataset(root: &Path) -> Result<Vec<DatasetItem>> {
    let items = read_manifest(root)?;
    for it in &items {
        it.validate(root)?;
    }
    Ok(items)
}
