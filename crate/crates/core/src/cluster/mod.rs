//! k-means on raw vs MLP-transformed representations, scored with NMI.
//!
//! Two ground-truth modes are registered:
//!
//! * `per_task`: one task's test split, truth = class labels, k = class count.
//! * `pooled_group`: the test splits of several tasks (e.g. one linguistic
//!   level) pooled together, truth = task identity, k = number of tasks.
//!
//! With the `mlp_transformed` representation each task's rows are mapped
//! through its own trained probe's block, `MLP(X) + X`.

pub mod kmeans;
pub mod nmi;

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, KMeansConfig, KMeansFit};
pub use nmi::nmi;

use crate::dataio::{DatasetSplit, EmbeddingMatrix, ManifestSet, Split};
use crate::error::{Error, Result};
use crate::probe::model::rows_to_array;
use crate::probe::ProbeParams;
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Raw,
    MlpTransformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Cluster count; `None` takes the mode's natural k.
    pub k: Option<usize>,
    pub max_iter: usize,
    pub n_init: usize,
    pub seed: u64,
    /// Registered ground-truth mode name.
    pub mode: String,
    pub layer: u16,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: None,
            max_iter: 300,
            n_init: 10,
            seed: 0,
            mode: "per_task".into(),
            layer: 12,
        }
    }
}

/// Result of one clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub nmi: f64,
}

/// One task's contribution to a clustering: its test split and, for the
/// transformed representation, its trained with-MLP probe.
#[derive(Debug, Clone)]
pub struct ClusterInput<'a> {
    pub task: &'a str,
    pub n_classes: usize,
    pub test: &'a DatasetSplit,
    pub params: Option<&'a ProbeParams>,
}

/// Points to cluster, their ground truth and the natural k.
#[derive(Debug, Clone)]
pub struct Labeled {
    pub points: Array2<f64>,
    pub truth: Vec<usize>,
    pub k: usize,
}

/// `MLP(X) + X`: the features the head sees in the with-MLP setting.
pub fn mlp_transform(params: &ProbeParams, x: &EmbeddingMatrix) -> Result<Array2<f64>> {
    if params.mlp.is_none() {
        return Err(Error::MissingCheckpoint("probe has no MLP block".into()));
    }
    params.features(rows_to_array(x, 0..x.n_rows()).view())
}

fn represent(input: &ClusterInput<'_>, repr: Representation) -> Result<Array2<f64>> {
    let x = &input.test.embeddings;
    match repr {
        Representation::Raw => Ok(rows_to_array(x, 0..x.n_rows())),
        Representation::MlpTransformed => {
            let params = input.params.ok_or_else(|| {
                Error::MissingCheckpoint(format!("no with-MLP probe for task {}", input.task))
            })?;
            mlp_transform(params, x)
        }
    }
}

/// How a group of tasks becomes a labelled point set.
pub trait ClusterMode: Named + Send + Sync {
    fn prepare(&self, inputs: &[ClusterInput<'_>], repr: Representation) -> Result<Labeled>;
}

pub struct PerTask;

impl Named for PerTask {
    fn name(&self) -> &'static str {
        "per_task"
    }
}

impl ClusterMode for PerTask {
    fn prepare(&self, inputs: &[ClusterInput<'_>], repr: Representation) -> Result<Labeled> {
        let [input] = inputs else {
            return Err(Error::Config(format!(
                "per_task clustering takes exactly one task, got {}",
                inputs.len()
            )));
        };
        Ok(Labeled {
            points: represent(input, repr)?,
            truth: input.test.labels.as_slice().to_vec(),
            k: input.n_classes,
        })
    }
}

pub struct PooledGroup;

impl Named for PooledGroup {
    fn name(&self) -> &'static str {
        "pooled_group"
    }
}

impl ClusterMode for PooledGroup {
    fn prepare(&self, inputs: &[ClusterInput<'_>], repr: Representation) -> Result<Labeled> {
        if inputs.len() < 2 {
            return Err(Error::Config(format!(
                "pooled_group clustering needs at least two tasks, got {}",
                inputs.len()
            )));
        }
        let parts = inputs
            .iter()
            .map(|i| represent(i, repr))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = parts.iter().find(|p| p.ncols() != parts[0].ncols()) {
            return Err(Error::DimMismatch {
                expected: parts[0].ncols(),
                got: bad.ncols(),
                context: "pooled task dimensionality",
            });
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let points = concatenate(Axis(0), &views).expect("equal column counts");
        let truth = inputs
            .iter()
            .enumerate()
            .flat_map(|(t, i)| std::iter::repeat_n(t, i.test.len()))
            .collect();
        Ok(Labeled {
            points,
            truth,
            k: inputs.len(),
        })
    }
}

pub fn mode_registry() -> Registry<dyn ClusterMode> {
    let mut r: Registry<dyn ClusterMode> = Registry::new("cluster mode");
    r.register(Box::new(PerTask))
        .register(Box::new(PooledGroup));
    r
}

/// Clusters `labeled` with k-means and scores the partition.
pub fn cluster_and_score(labeled: &Labeled, cfg: &KMeansConfig) -> Result<ClusterResult> {
    let fit = kmeans(labeled.points.view(), cfg)?;
    let score = nmi(&labeled.truth, &fit.assignments)?;
    Ok(ClusterResult {
        assignments: fit.assignments,
        centroids: fit.centroids,
        inertia: fit.inertia,
        nmi: score,
    })
}

/// A named set of tasks clustered together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub name: String,
    pub tasks: Vec<String>,
}

/// One row of the raw-vs-transformed comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub group: String,
    pub mode: String,
    pub layer: u16,
    pub nmi_without: f64,
    pub nmi_with: f64,
    pub delta: f64,
    pub k: usize,
    pub seed: u64,
}

/// Clusters the inputs twice with an identical k-means configuration, once
/// on raw embeddings and once on MLP-transformed ones.
pub fn compare_inputs(
    group: &str,
    inputs: &[ClusterInput<'_>],
    cfg: &ClusterConfig,
) -> Result<ClusterRow> {
    let registry = mode_registry();
    let mode = registry.get(&cfg.mode)?;
    let raw = mode.prepare(inputs, Representation::Raw)?;
    let transformed = mode.prepare(inputs, Representation::MlpTransformed)?;
    let k = match cfg.k {
        Some(k) if k != raw.k => {
            return Err(Error::Config(format!(
                "mode {} implies k = {}, config says {k}",
                cfg.mode, raw.k
            )))
        }
        _ => raw.k,
    };
    let km = KMeansConfig {
        k,
        max_iter: cfg.max_iter,
        n_init: cfg.n_init,
        seed: cfg.seed,
    };
    let without = cluster_and_score(&raw, &km)?;
    let with = cluster_and_score(&transformed, &km)?;
    Ok(ClusterRow {
        group: group.to_string(),
        mode: cfg.mode.clone(),
        layer: cfg.layer,
        nmi_without: without.nmi,
        nmi_with: with.nmi,
        delta: with.nmi - without.nmi,
        k,
        seed: cfg.seed,
    })
}

/// Loads each task's test split at `cfg.layer` and runs [`compare_inputs`].
/// `checkpoints` maps task name to its trained with-MLP probe.
pub fn cluster_eval(
    manifests: &ManifestSet,
    checkpoints: &BTreeMap<String, ProbeParams>,
    group: &ClusterGroup,
    cfg: &ClusterConfig,
) -> Result<ClusterRow> {
    let mut splits = Vec::with_capacity(group.tasks.len());
    for task in &group.tasks {
        let m = manifests.get(task)?;
        splits.push((
            task.as_str(),
            m.task.n_classes,
            manifests.load_dataset(task, cfg.layer, Split::Test)?,
        ));
    }
    let mut inputs = Vec::with_capacity(splits.len());
    for (task, n_classes, test) in &splits {
        let params = checkpoints
            .get(*task)
            .ok_or_else(|| Error::MissingCheckpoint(format!("task {task}, layer {}", cfg.layer)))?;
        inputs.push(ClusterInput {
            task,
            n_classes: *n_classes,
            test,
            params: Some(params),
        });
    }
    compare_inputs(&group.name, &inputs, cfg)
}
