//! The single JSON file that drives training, sweeps and clustering.
//!
//! ```json
//! {
//!   "manifests": ["data/SentLen/manifest.json"],
//!   "results_dir": "results",
//!   "train": { "batch_size": 64, "epochs": 4, "lr": 0.001, "eval_every": 200,
//!              "patience": 5, "seed": 0, "hidden": null, "activation": "relu" },
//!   "sweep": { "tasks": ["SentLen"], "layers": [1, 2, 3], "seeds": [0, 1, 2, 3, 4],
//!              "settings": ["without_mlp", "with_mlp"], "workers": null,
//!              "save_checkpoints": true },
//!   "cluster": { "k": null, "max_iter": 300, "n_init": 10, "seed": 0,
//!                "mode": "per_task", "layer": 12 },
//!   "cluster_groups": [{ "name": "surface", "tasks": ["SentLen"] }]
//! }
//! ```
//!
//! Every key is optional. Relative paths resolve against the directory
//! holding the config file. `train.with_mlp` is ignored by sweeps, which
//! run the settings listed in `sweep.settings`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterConfig, ClusterGroup};
use crate::dataio::ManifestSet;
use crate::error::{Error, Result};
use crate::harness::SweepSpec;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub manifests: Vec<PathBuf>,
    pub results_dir: PathBuf,
    pub train: TrainConfig,
    pub sweep: SweepSpec,
    pub cluster: ClusterConfig,
    pub cluster_groups: Vec<ClusterGroup>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            manifests: Vec::new(),
            results_dir: PathBuf::from("results"),
            train: TrainConfig::default(),
            sweep: SweepSpec::default(),
            cluster: ClusterConfig::default(),
            cluster_groups: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads `path` and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        for m in &mut self.manifests {
            *m = base.join(&*m);
        }
        self.results_dir = base.join(&self.results_dir);
    }

    /// Opens all manifests. When the sweep names no tasks, it takes every
    /// task found in the manifests.
    pub fn open_manifests(&mut self) -> Result<ManifestSet> {
        if self.manifests.is_empty() {
            return Err(Error::Config("config lists no manifests".into()));
        }
        let set = ManifestSet::open_all(&self.manifests)?;
        if self.sweep.tasks.is_empty() {
            self.sweep.tasks = set.tasks().map(String::from).collect();
        }
        Ok(set)
    }

    /// Hash of the effective configuration, for report metadata.
    pub fn hash(&self) -> Result<String> {
        Ok(crate::report::config_hash(&serde_json::to_vec(self)?))
    }
}
