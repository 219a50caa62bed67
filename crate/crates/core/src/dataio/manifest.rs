//! Manifest JSON: which embedding file holds which (split, layer) of a task.
//!
//! ```json
//! {
//!   "task": {"name": "Tense", "level": "semantic", "n_classes": 2,
//!            "label_map": {"PAST": 0, "PRES": 1}},
//!   "dim": 768,
//!   "layers": [1, 2, 3],
//!   "entries": [{"split": "train", "layer": 1,
//!                "embedding_path": "train.layer01.prbe", "row_count": 100000}],
//!   "labels": {"train": "train.labels.tsv", "val": "val.labels.tsv",
//!              "test": "test.labels.tsv"}
//! }
//! ```
//!
//! Relative paths resolve against the manifest's own directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prbe::{self, read_embeddings};
use super::{read_labels, DatasetSplit, Split, TaskSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub layer: u16,
    pub embedding_path: PathBuf,
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: TaskSpec,
    pub dim: usize,
    pub layers: Vec<u16>,
    pub entries: Vec<ManifestEntry>,
    pub labels: BTreeMap<Split, PathBuf>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(
        task: TaskSpec,
        dim: usize,
        entries: Vec<ManifestEntry>,
        labels: BTreeMap<Split, PathBuf>,
        base_dir: impl Into<PathBuf>,
    ) -> Self {
        let mut layers: Vec<u16> = entries.iter().map(|e| e.layer).collect();
        layers.sort_unstable();
        layers.dedup();
        Self {
            task,
            dim,
            layers,
            entries,
            labels,
            base_dir: base_dir.into(),
        }
    }

    /// Reads a manifest without touching the files it references.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.task.validate()?;
        Ok(manifest)
    }

    /// Reads a manifest and checks every referenced file against it.
    pub fn open(path: &Path) -> Result<Self> {
        let manifest = Self::load(path)?;
        manifest.validate_files()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        prbe::write_atomic(path, text.as_bytes())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn entry(&self, split: Split, layer: u16) -> Result<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.split == split && e.layer == layer)
            .ok_or_else(|| Error::MissingEntry {
                split: split.to_string(),
                layer,
            })
    }

    pub fn has_layer(&self, layer: u16) -> bool {
        self.layers.contains(&layer)
    }

    /// Checks that every embedding file exists with a header matching its
    /// entry, and that every split with entries has a label file.
    pub fn validate_files(&self) -> Result<()> {
        for e in &self.entries {
            let path = self.resolve(&e.embedding_path);
            let h = prbe::read_header(&path)?;
            if h.n_rows != e.row_count {
                return Err(Error::Manifest(format!(
                    "{}: header has {} rows, manifest says {}",
                    path.display(),
                    h.n_rows,
                    e.row_count
                )));
            }
            if h.dim != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    got: h.dim,
                    context: "embedding header vs manifest",
                });
            }
            if h.layer != e.layer {
                return Err(Error::Manifest(format!(
                    "{}: header layer {} but manifest entry says {}",
                    path.display(),
                    h.layer,
                    e.layer
                )));
            }
            let labels = self
                .labels
                .get(&e.split)
                .ok_or_else(|| Error::Manifest(format!("no label file for split {}", e.split)))?;
            let labels = self.resolve(labels);
            if !labels.is_file() {
                return Err(Error::Manifest(format!(
                    "{} does not exist",
                    labels.display()
                )));
            }
        }
        Ok(())
    }
}

/// Loads one split of one layer, cross-checking embeddings, labels and
/// manifest.
pub fn load_dataset(manifest: &Manifest, layer: u16, split: Split) -> Result<DatasetSplit> {
    let entry = manifest.entry(split, layer)?;
    let embeddings = read_embeddings(&manifest.resolve(&entry.embedding_path))?;
    if embeddings.dim() != manifest.dim {
        return Err(Error::DimMismatch {
            expected: manifest.dim,
            got: embeddings.dim(),
            context: "embeddings vs manifest",
        });
    }
    if embeddings.layer() != layer {
        return Err(Error::Manifest(format!(
            "embedding file for layer {layer} declares layer {}",
            embeddings.layer()
        )));
    }
    if embeddings.n_rows() != entry.row_count {
        return Err(Error::RowMismatch {
            what: "embeddings",
            left: embeddings.n_rows(),
            other: "manifest",
            right: entry.row_count,
        });
    }
    let labels_path = manifest
        .labels
        .get(&split)
        .ok_or_else(|| Error::Manifest(format!("no label file for split {split}")))?;
    let labels = read_labels(&manifest.resolve(labels_path), &manifest.task)?;
    DatasetSplit::new(embeddings, labels)
}

/// Manifests keyed by task name.
#[derive(Debug, Clone, Default)]
pub struct ManifestSet {
    by_task: BTreeMap<String, Manifest>,
}

impl ManifestSet {
    pub fn new(manifests: impl IntoIterator<Item = Manifest>) -> Result<Self> {
        let mut by_task = BTreeMap::new();
        for m in manifests {
            let name = m.task.name.clone();
            if by_task.insert(name.clone(), m).is_some() {
                return Err(Error::Config(format!("two manifests for task {name}")));
            }
        }
        Ok(Self { by_task })
    }

    pub fn open_all(paths: &[PathBuf]) -> Result<Self> {
        Self::new(
            paths
                .iter()
                .map(|p| Manifest::open(p))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn get(&self, task: &str) -> Result<&Manifest> {
        self.by_task
            .get(task)
            .ok_or_else(|| Error::UnknownTask(task.to_string()))
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.by_task.keys().map(String::as_str)
    }

    pub fn load_dataset(&self, task: &str, layer: u16, split: Split) -> Result<DatasetSplit> {
        load_dataset(self.get(task)?, layer, split)
    }
}
