//! Embedding files, probing-task text, label sidecars and manifests.

pub mod ingest;
pub mod manifest;
pub mod prbe;
pub mod senteval;
pub mod task;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ingest::{embedding_file_name, ingest, spec_for};
pub use manifest::{load_dataset, Manifest, ManifestEntry, ManifestSet};
pub use prbe::{read_embeddings, write_embeddings, EmbeddingMatrix};
pub use senteval::parse_senteval;
pub use task::{Level, TaskSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class ids for the rows of an [`EmbeddingMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    class_ids: Vec<usize>,
}

impl LabelVector {
    pub fn new(class_ids: Vec<usize>, n_classes: usize) -> Result<Self> {
        if let Some(&bad) = class_ids.iter().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidLabel {
                label: bad,
                n_classes,
            });
        }
        Ok(Self { class_ids })
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.class_ids
    }
}

/// Embeddings and labels for one split, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub embeddings: EmbeddingMatrix,
    pub labels: LabelVector,
}

impl DatasetSplit {
    pub fn new(embeddings: EmbeddingMatrix, labels: LabelVector) -> Result<Self> {
        if embeddings.n_rows() != labels.len() {
            return Err(Error::RowMismatch {
                what: "embeddings",
                left: embeddings.n_rows(),
                other: "labels",
                right: labels.len(),
            });
        }
        Ok(Self { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }
}

/// Writes a label sidecar: one `<class_id>\t<label>` line per example.
pub fn write_labels(path: &Path, class_ids: &[usize], spec: &TaskSpec) -> Result<()> {
    let names = spec.labels();
    let mut text = String::with_capacity(class_ids.len() * 8);
    for &c in class_ids {
        let name = names.get(c).ok_or(Error::InvalidLabel {
            label: c,
            n_classes: spec.n_classes,
        })?;
        text.push_str(&format!("{c}\t{name}\n"));
    }
    prbe::write_atomic(path, text.as_bytes())
}

/// Reads a label sidecar, checking every id against `spec`.
pub fn read_labels(path: &Path, spec: &TaskSpec) -> Result<LabelVector> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        if line.is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `<class_id>\\t<label>`".into()))?;
        let id: usize = id
            .parse()
            .map_err(|_| err(format!("bad class id {id:?}")))?;
        match spec.class_of(label) {
            Some(c) if c == id => ids.push(id),
            Some(c) => return Err(err(format!("label {label:?} is class {c}, file says {id}"))),
            None => return Err(err(format!("label {label:?} not in task {}", spec.name))),
        }
    }
    LabelVector::new(ids, spec.n_classes)
}
