//! Turns a probing text file plus a directory of per-layer PRBE files into
//! label sidecars and a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::prbe::{read_header, DTYPE_F32};
use super::senteval::{check_balance, read_raw, RawExample};
use super::task::lookup;
use super::{write_labels, Level, Manifest, ManifestEntry, Split, TaskSpec};
use crate::error::{Error, Result};

/// Conventional embedding file name, e.g. `train.layer07.prbe`.
pub fn embedding_file_name(split: Split, layer: u16) -> String {
    format!("{split}.layer{layer:02}.prbe")
}

fn parse_embedding_file_name(name: &str) -> Option<(Split, u16)> {
    let stem = name.strip_suffix(".prbe")?;
    let (split, layer) = stem.split_once(".layer")?;
    let split = Split::ALL.into_iter().find(|s| s.as_str() == split)?;
    if layer.is_empty() || !layer.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((split, layer.parse().ok()?))
}

/// Spec for `name`: built-in tasks use their known vocabulary (or the
/// observed one when open); other tasks need a level and take their sorted
/// observed labels.
pub fn spec_for(name: &str, level: Option<Level>, examples: &[RawExample]) -> Result<TaskSpec> {
    let observed = examples.iter().map(|e| e.label.as_str());
    if lookup(name).is_ok() {
        return TaskSpec::builtin_with_labels(name, observed);
    }
    let level = level
        .ok_or_else(|| Error::UnknownTask(format!("{name} (pass a level for custom tasks)")))?;
    let mut labels: Vec<&str> = observed.collect();
    labels.sort_unstable();
    labels.dedup();
    TaskSpec::new(name, level, &labels)
}

/// Writes `{split}.labels.tsv` and `manifest.json` into `out_dir` and
/// returns the manifest path. Every layer found in `embedding_dir` must
/// have all three splits with row counts matching the text file.
pub fn ingest(
    task_file: &Path,
    spec: &TaskSpec,
    embedding_dir: &Path,
    out_dir: &Path,
) -> Result<PathBuf> {
    let examples = read_raw(task_file)?;
    let mut class_ids: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
    for ex in &examples {
        let id = spec.class_of(&ex.label).ok_or_else(|| {
            Error::Config(format!("label {:?} not in task {}", ex.label, spec.name))
        })?;
        class_ids.entry(ex.split).or_default().push(id);
    }
    for split in Split::ALL {
        let ids = class_ids.get(&split).ok_or_else(|| {
            Error::Manifest(format!("{}: no {split} examples", task_file.display()))
        })?;
        check_balance(&spec.name, split, ids, spec.n_classes);
    }

    let read_dir = fs::read_dir(embedding_dir).map_err(|e| Error::io(embedding_dir, e))?;
    let mut found: BTreeMap<(u16, Split), PathBuf> = BTreeMap::new();
    for item in read_dir {
        let item = item.map_err(|e| Error::io(embedding_dir, e))?;
        let name = item.file_name();
        if let Some(key) = name.to_str().and_then(parse_embedding_file_name) {
            found.insert((key.1, key.0), item.path());
        }
    }
    if found.is_empty() {
        return Err(Error::Manifest(format!(
            "no <split>.layerNN.prbe files in {}",
            embedding_dir.display()
        )));
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let same_dir = fs::canonicalize(embedding_dir).ok() == fs::canonicalize(out_dir).ok();
    let mut dim = None;
    let mut entries = Vec::new();
    let mut layers: Vec<u16> = found.keys().map(|k| k.0).collect();
    layers.dedup();
    for &layer in &layers {
        for split in Split::ALL {
            let path = found.get(&(layer, split)).ok_or(Error::MissingEntry {
                split: split.to_string(),
                layer,
            })?;
            let header = read_header(path)?;
            if header.dtype != DTYPE_F32 {
                return Err(Error::UnsupportedDtype(header.dtype));
            }
            if header.layer != layer {
                return Err(Error::Manifest(format!(
                    "{} holds layer {}",
                    path.display(),
                    header.layer
                )));
            }
            let expected = class_ids[&split].len();
            if header.n_rows != expected {
                return Err(Error::RowMismatch {
                    what: "embeddings",
                    left: header.n_rows,
                    other: "examples",
                    right: expected,
                });
            }
            match dim {
                None => dim = Some(header.dim),
                Some(d) if d != header.dim => {
                    return Err(Error::DimMismatch {
                        expected: d,
                        got: header.dim,
                        context: "embedding files",
                    })
                }
                _ => {}
            }
            let embedding_path = if same_dir {
                PathBuf::from(embedding_file_name(split, layer))
            } else {
                fs::canonicalize(path).map_err(|e| Error::io(path, e))?
            };
            entries.push(ManifestEntry {
                split,
                layer,
                embedding_path,
                row_count: header.n_rows,
            });
        }
    }

    let mut labels = BTreeMap::new();
    for (split, ids) in &class_ids {
        let name = format!("{split}.labels.tsv");
        write_labels(&out_dir.join(&name), ids, spec)?;
        labels.insert(*split, PathBuf::from(name));
    }
    let manifest = Manifest::new(
        spec.clone(),
        dim.expect("at least one file"),
        entries,
        labels,
        out_dir,
    );
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Manifest::open(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::prbe::write_embeddings;
    use crate::dataio::{EmbeddingMatrix, ManifestSet};

    fn fixture(dir: &Path, rows: [usize; 3], layers: &[u16]) -> PathBuf {
        let mut text = String::new();
        for (split, n) in ["tr", "va", "te"].iter().zip(rows) {
            for i in 0..n {
                let label = if i % 2 == 0 { "PAST" } else { "PRES" };
                text.push_str(&format!("{split}\t{label}\tsentence {i}\n"));
            }
        }
        let task = dir.join("tense.txt");
        fs::write(&task, text).unwrap();
        for &layer in layers {
            for (split, n) in Split::ALL.into_iter().zip(rows) {
                let values = (0..n * 3).map(|v| v as f32 + layer as f32).collect();
                let m = EmbeddingMatrix::new(n, 3, layer, values).unwrap();
                write_embeddings(&m, &dir.join(embedding_file_name(split, layer))).unwrap();
            }
        }
        task
    }

    #[test]
    fn names() {
        assert_eq!(embedding_file_name(Split::Val, 7), "val.layer07.prbe");
        assert_eq!(
            parse_embedding_file_name("test.layer12.prbe"),
            Some((Split::Test, 12))
        );
        assert_eq!(parse_embedding_file_name("test.layer.prbe"), None);
        assert_eq!(parse_embedding_file_name("dev.layer01.prbe"), None);
    }

    #[test]
    fn builds_a_loadable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let task = fixture(dir.path(), [6, 4, 4], &[1, 2]);
        let spec = TaskSpec::builtin("Tense").unwrap();
        let path = ingest(&task, &spec, dir.path(), dir.path()).unwrap();
        let set = ManifestSet::open_all(&[path]).unwrap();
        assert_eq!(set.get("Tense").unwrap().entries.len(), 6);
        let d = set.load_dataset("Tense", 2, Split::Val).unwrap();
        assert_eq!(d.labels.as_slice(), [0, 1, 0, 1]);
        assert_eq!(d.embeddings.row(0), [2.0, 3.0, 4.0]);
    }

    #[test]
    fn separate_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let task = fixture(dir.path(), [2, 2, 2], &[3]);
        let spec = TaskSpec::builtin("Tense").unwrap();
        let path = ingest(&task, &spec, dir.path(), &out).unwrap();
        let set = ManifestSet::open_all(&[path]).unwrap();
        assert_eq!(set.load_dataset("Tense", 3, Split::Test).unwrap().len(), 2);
    }

    #[test]
    fn row_count_must_match_text() {
        let dir = tempfile::tempdir().unwrap();
        let task = fixture(dir.path(), [6, 4, 4], &[1]);
        let m = EmbeddingMatrix::new(5, 3, 1, vec![0.0; 15]).unwrap();
        write_embeddings(&m, &dir.path().join("train.layer01.prbe")).unwrap();
        let spec = TaskSpec::builtin("Tense").unwrap();
        let err = ingest(&task, &spec, dir.path(), dir.path()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::RowMismatch {
                    left: 5,
                    right: 6,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn missing_split_file() {
        let dir = tempfile::tempdir().unwrap();
        let task = fixture(dir.path(), [2, 2, 2], &[1]);
        fs::remove_file(dir.path().join("val.layer01.prbe")).unwrap();
        let spec = TaskSpec::builtin("Tense").unwrap();
        assert!(matches!(
            ingest(&task, &spec, dir.path(), dir.path()),
            Err(Error::MissingEntry { layer: 1, .. })
        ));
    }

    #[test]
    fn custom_task_needs_level() {
        let ex = |label: &str| RawExample {
            split: Split::Train,
            label: label.into(),
            sentence: String::new(),
        };
        let examples = [ex("b"), ex("a"), ex("b")];
        assert!(spec_for("Mine", None, &examples).is_err());
        let spec = spec_for("Mine", Some(Level::Surface), &examples).unwrap();
        assert_eq!(spec.class_of("a"), Some(0));
        assert_eq!(spec_for("Tense", None, &[]).unwrap().n_classes, 2);
    }
}
