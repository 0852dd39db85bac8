use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{SceneRecipe, TileCoord};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "cloudfuse-dataset";

/// Self-describing dataset index. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<SceneRecipe>,
    pub locations: Vec<LocationEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationEntry {
    pub id: String,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileCoord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub images: Vec<ImageEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

impl DatasetManifest {
    pub fn new(width: usize, height: usize, classes: usize) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: 1,
            width,
            height,
            classes,
            recipe: None,
            locations: Vec::new(),
        }
    }

    /// Load `manifest.json` from a dataset directory (or a direct file path).
    /// Returns the manifest and the directory its paths are relative to.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: file.clone(),
            detail: e.to_string(),
        })?;
        if manifest.format != FORMAT {
            return Err(Error::Format {
                path: file,
                detail: format!("unexpected format tag `{}`", manifest.format),
            });
        }
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let file = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&file, text).map_err(|e| Error::io(&file, e))?;
        Ok(file)
    }

    pub fn image_count(&self) -> usize {
        self.locations.iter().map(|l| l.images.len()).sum()
    }
}
