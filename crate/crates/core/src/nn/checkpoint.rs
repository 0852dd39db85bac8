//! Model checkpoints: an `FTZ` tensor file plus a JSON sidecar recording
//! architecture configs and parameter tags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_ftz, write_ftz, Tensor};

use super::{QualityConfig, QualityNet, SegConfig, SegNet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub entries: Vec<EntryInfo>,
    /// Tag name to the parameter names carrying it.
    pub tags: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg: Option<SegConfig>,
}

/// `foo.ftz` -> `foo.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    quality: Option<&QualityNet<T>>,
    seg: Option<&SegNet<T>>,
) -> Result<()> {
    let mut entries: Vec<(String, Tensor<T>)> = Vec::new();
    let mut tags: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let sets = quality
        .map(|q| &q.params)
        .into_iter()
        .chain(seg.map(|s| &s.params));
    for set in sets {
        for p in set.iter() {
            for t in &p.tags {
                tags.entry(t.clone()).or_default().push(p.name.clone());
            }
        }
        entries.extend(set.entries());
    }
    write_ftz(path, &entries)?;
    let manifest = CheckpointManifest {
        format: "FTZ".into(),
        version: crate::tensor::FTZ_VERSION,
        entries: entries
            .iter()
            .map(|(name, t)| EntryInfo {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        tags,
        quality: quality.map(|q| q.config().clone()),
        seg: seg.map(|s| s.config().clone()),
    };
    let side = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

fn read_sidecar(path: &Path) -> Result<Option<CheckpointManifest>> {
    let side = sidecar_path(path);
    match std::fs::read_to_string(&side) {
        Ok(text) => Ok(Some(serde_json::from_str(&text).map_err(|e| Error::Format {
            path: side,
            detail: e.to_string(),
        })?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(side, e)),
    }
}

/// Load the quality network from a checkpoint. The architecture comes from
/// the sidecar when present, otherwise the default configuration.
pub fn load_quality<T: Scalar>(path: &Path) -> Result<QualityNet<T>> {
    let entries = read_ftz::<T>(path)?;
    let config = read_sidecar(path)?
        .and_then(|m| m.quality)
        .unwrap_or_default();
    let mut net = QualityNet::new(config, 0)?;
    net.params.load_entries(&entries).map_err(|e| at(path, e))?;
    Ok(net)
}

pub fn load_seg<T: Scalar>(path: &Path) -> Result<SegNet<T>> {
    let entries = read_ftz::<T>(path)?;
    let config = read_sidecar(path)?.and_then(|m| m.seg).unwrap_or_default();
    let mut net = SegNet::new(config, 0)?;
    net.params.load_entries(&entries).map_err(|e| at(path, e))?;
    Ok(net)
}

fn at(path: &Path, e: Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_tags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ftz");
        let q = QualityNet::<f32>::new(QualityConfig::default(), 4).unwrap();
        let s = SegNet::<f32>::new(SegConfig { classes: 3, ..Default::default() }, 5).unwrap();
        save_checkpoint(&path, Some(&q), Some(&s)).unwrap();

        let q2: QualityNet<f32> = load_quality(&path).unwrap();
        let s2: SegNet<f32> = load_seg(&path).unwrap();
        assert_eq!(q2.params.entries(), q.params.entries());
        assert_eq!(s2.params.entries(), s.params.entries());
        assert_eq!(s2.config().classes, 3);

        let side: CheckpointManifest =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side.tags["head3"].len(), 6);
        assert!(side.entries.iter().any(|e| e.name == "quality.enc0.conv1.weight"));
    }

    #[test]
    fn missing_checkpoint_names_path() {
        let err = load_quality::<f32>(Path::new("/nonexistent/q.ftz")).unwrap_err();
        assert!(matches!(err, Error::NotFound(ref p) if p.ends_with("q.ftz")));
    }
}
