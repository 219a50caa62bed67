//! Seeded synthetic probing tasks for tests, demos and desk-scale checks.
//!
//! * [`xor`]: 2-d inputs labelled by the sign of `x1 * x2`. No linear
//!   separator exists, a residual MLP can learn it.
//! * [`linear`]: Gaussian inputs split by a random hyperplane with a margin.
//! * [`xor_blobs`]: four tight blobs at `(+-c, +-c)` with XOR labels; raw
//!   k-means cannot recover the classes.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataio::{
    embedding_file_name, read_labels, write_embeddings, write_labels, DatasetSplit,
    EmbeddingMatrix, LabelVector, Level, Manifest, ManifestEntry, Split, TaskSpec,
};
use crate::error::Result;
use crate::probe::rng::{derive_stream, rng_from_seed, ProbeRng};

/// Train/val/test splits of one synthetic task at one layer.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub train: DatasetSplit,
    pub val: DatasetSplit,
    pub test: DatasetSplit,
}

impl SyntheticTask {
    pub fn split(&self, split: Split) -> &DatasetSplit {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn binary_spec(name: &str) -> TaskSpec {
    TaskSpec::new(name, Level::Semantic, &["neg", "pos"]).expect("two distinct labels")
}

fn build(
    spec: TaskSpec,
    sizes: [usize; 3],
    layer: u16,
    seed: u64,
    mut sample: impl FnMut(&mut ProbeRng) -> (Vec<f32>, usize),
) -> SyntheticTask {
    let n_classes = spec.n_classes;
    let mut make = |n: usize, stream: u64| {
        let mut rng = rng_from_seed(derive_stream(seed, stream));
        let (rows, ids): (Vec<Vec<f32>>, Vec<usize>) = (0..n).map(|_| sample(&mut rng)).unzip();
        DatasetSplit::new(
            EmbeddingMatrix::from_rows(&rows, layer).expect("finite non-empty rows"),
            LabelVector::new(ids, n_classes).expect("ids in range"),
        )
        .expect("aligned rows")
    };
    let train = make(sizes[0], 0);
    let val = make(sizes[1], 1);
    let test = make(sizes[2], 2);
    SyntheticTask {
        spec,
        train,
        val,
        test,
    }
}

fn normal(rng: &mut ProbeRng) -> f64 {
    StandardNormal.sample(rng)
}

/// XOR task: `x ~ U(-1, 1)^2`, class 1 iff `x1 * x2 > 0`.
pub fn xor(n_train: usize, n_val: usize, n_test: usize, layer: u16, seed: u64) -> SyntheticTask {
    build(
        binary_spec("XOR"),
        [n_train, n_val, n_test],
        layer,
        seed,
        |rng| {
            let x1: f64 = rng.random_range(-1.0..1.0);
            let x2: f64 = rng.random_range(-1.0..1.0);
            (vec![x1 as f32, x2 as f32], (x1 * x2 > 0.0) as usize)
        },
    )
}

/// Linearly separable task in `dim` dimensions: class 1 iff `w . x > 0`,
/// with every point pushed 0.5 away from the hyperplane along `w`.
pub fn linear(
    n_train: usize,
    n_val: usize,
    n_test: usize,
    dim: usize,
    layer: u16,
    seed: u64,
) -> SyntheticTask {
    let mut rng = rng_from_seed(derive_stream(seed, 99));
    let w: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let w: Vec<f64> = w.iter().map(|v| v / norm).collect();
    build(
        binary_spec("Linear"),
        [n_train, n_val, n_test],
        layer,
        seed,
        move |rng| {
            let mut x: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
            let proj: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let class = (proj > 0.0) as usize;
            let push = if class == 1 { 0.5 } else { -0.5 };
            for (xi, wi) in x.iter_mut().zip(&w) {
                *xi += push * wi;
            }
            (x.iter().map(|&v| v as f32).collect(), class)
        },
    )
}

/// Four Gaussian blobs centred at `(+-center, +-center)` with standard
/// deviation `sigma`; class 1 for the same-sign quadrants.
pub fn xor_blobs(
    n_train: usize,
    n_val: usize,
    n_test: usize,
    center: f64,
    sigma: f64,
    layer: u16,
    seed: u64,
) -> SyntheticTask {
    build(
        binary_spec("XorBlobs"),
        [n_train, n_val, n_test],
        layer,
        seed,
        move |rng| {
            let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let x1 = sx * center + sigma * normal(rng);
            let x2 = sy * center + sigma * normal(rng);
            (vec![x1 as f32, x2 as f32], (sx * sy > 0.0) as usize)
        },
    )
}

/// Renames a synthetic task (e.g. to place several in one sweep).
pub fn renamed(mut task: SyntheticTask, name: &str, level: Level) -> SyntheticTask {
    task.spec.name = name.to_string();
    task.spec.level = level;
    task
}

/// Writes one task across several layers as PRBE files, label sidecars and
/// a manifest under `dir`; returns the manifest path. `make(layer)` builds
/// the data for each layer; labels must agree across layers.
pub fn write_fixture(
    dir: &Path,
    layers: &[u16],
    mut make: impl FnMut(u16) -> SyntheticTask,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let mut entries = Vec::new();
    let mut labels = BTreeMap::new();
    let mut spec = None;
    for &layer in layers {
        let task = make(layer);
        for split in Split::ALL {
            let data = task.split(split);
            let name = embedding_file_name(split, layer);
            write_embeddings(&data.embeddings, &dir.join(&name))?;
            entries.push(ManifestEntry {
                split,
                layer,
                embedding_path: name.into(),
                row_count: data.len(),
            });
            let label_name = format!("{split}.labels.tsv");
            let label_path = dir.join(&label_name);
            match labels.entry(split) {
                Entry::Occupied(_) => {
                    if read_labels(&label_path, &task.spec)? != data.labels {
                        return Err(crate::Error::Manifest(format!(
                            "layer {layer}: {split} labels differ from earlier layers"
                        )));
                    }
                }
                Entry::Vacant(slot) => {
                    write_labels(&label_path, data.labels.as_slice(), &task.spec)?;
                    slot.insert(PathBuf::from(label_name));
                }
            }
        }
        spec.get_or_insert((task.spec.clone(), task.train.dim()));
    }
    let (spec, dim) = spec.ok_or(crate::Error::Empty("no layers"))?;
    let manifest = Manifest::new(spec, dim, entries, labels, dir);
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = xor(100, 20, 30, 4, 7);
        let b = xor(100, 20, 30, 4, 7);
        assert_eq!(a.train, b.train);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (100, 20, 30));
        assert_eq!(a.train.embeddings.layer(), 4);
        assert_ne!(a.train, xor(100, 20, 30, 4, 8).train);
        // splits are distinct draws
        assert_ne!(a.val.embeddings.row(0), a.train.embeddings.row(0));
    }

    #[test]
    fn labels_follow_rules() {
        let t = xor(500, 1, 1, 1, 3);
        for (row, &y) in t.train.embeddings.rows().zip(t.train.labels.as_slice()) {
            assert_eq!(y, (row[0] * row[1] > 0.0) as usize);
        }
        let t = xor_blobs(500, 1, 1, 2.0, 0.2, 1, 3);
        for (row, &y) in t.train.embeddings.rows().zip(t.train.labels.as_slice()) {
            assert_eq!(y, (row[0] * row[1] > 0.0) as usize);
        }
    }

    #[test]
    fn fixture_round_trips_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), &[1, 2], |l| xor(20, 10, 10, l, 1)).unwrap();
        let m = Manifest::open(&path).unwrap();
        assert_eq!(m.layers, vec![1, 2]);
        let test = crate::dataio::load_dataset(&m, 2, Split::Test).unwrap();
        assert_eq!(test, xor(20, 10, 10, 2, 1).test);
    }
}
