//! On-disk formats: tensor files, dataset manifests, checkpoints and PNG previews.

pub mod checkpoint;
pub mod manifest;
pub mod preview;
pub mod tensor_file;

pub use checkpoint::{load_checkpoint, load_checkpoint_matching, save_checkpoint};
pub use manifest::{load_dataset, read_manifest, write_manifest, DatasetItem, ItemFiles, MANIFEST_NAME};
pub use preview::{srgb_bytes, write_png};
pub use tensor_file::{read_image, read_tensor, read_tensor_dims, write_image, write_tensor, TensorFile};

use crate::error::{Error, Result};
use std::path::Path;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
