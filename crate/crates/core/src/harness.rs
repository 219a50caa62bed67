//! Layer x seed x setting x task sweeps, their aggregates and per-layer
//! deltas between the two settings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::prbe::write_atomic;
use crate::dataio::{ManifestSet, Split};
use crate::error::{Error, Result};
use crate::probe::{save_checkpoint, Setting};
use crate::trainer::{train_probe, TrainConfig, TrainResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub tasks: Vec<String>,
    pub layers: Vec<u16>,
    pub seeds: Vec<u64>,
    pub settings: Vec<Setting>,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Also store the selected parameters next to each result.
    pub save_checkpoints: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            layers: (1..=12).collect(),
            seeds: (0..5).collect(),
            settings: Setting::BOTH.to_vec(),
            workers: None,
            save_checkpoints: true,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self, manifests: &ManifestSet) -> Result<()> {
        for (name, empty) in [
            ("tasks", self.tasks.is_empty()),
            ("layers", self.layers.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("settings", self.settings.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("sweep {name} must not be empty")));
            }
        }
        for task in &self.tasks {
            let m = manifests.get(task)?;
            for &layer in &self.layers {
                for split in Split::ALL {
                    m.entry(split, layer)?;
                }
            }
        }
        Ok(())
    }

    /// All cells in a fixed order: task, layer, setting, seed.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for task in &self.tasks {
            for &layer in &self.layers {
                for &setting in &self.settings {
                    for &seed in &self.seeds {
                        out.push(CellKey {
                            task: task.clone(),
                            layer,
                            setting,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub task: String,
    pub layer: u16,
    pub setting: Setting,
    pub seed: u64,
}

impl CellKey {
    /// `<task>_<layer>_<setting>_<seed>`
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.task, self.layer, self.setting, self.seed
        )
    }

    pub fn result_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.json", self.stem()))
    }

    pub fn error_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.error.json", self.stem()))
    }

    pub fn checkpoint_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.prbe", self.stem()))
    }
}

/// One result file: the cell coordinates plus its training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub key: CellKey,
    #[serde(flatten)]
    pub result: TrainResult,
}

/// Marker left for a cell whose training failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    #[serde(flatten)]
    pub key: CellKey,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: String,
    pub layer: u16,
    pub setting: Setting,
    pub seed: u64,
    pub test_acc: f64,
}

impl From<&RunRecord> for CellResult {
    fn from(r: &RunRecord) -> Self {
        Self {
            task: r.key.task.clone(),
            layer: r.key.layer,
            setting: r.key.setting,
            seed: r.key.seed,
            test_acc: r.result.test_acc,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub cells: Vec<CellResult>,
    pub failures: Vec<FailureRecord>,
    /// Cells trained in this call (the rest were loaded from disk).
    pub computed: usize,
}

fn to_json(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn read_record(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn run_cell(
    key: &CellKey,
    manifests: &ManifestSet,
    cfg: &TrainConfig,
    dir: &Path,
    save: bool,
) -> Result<RunRecord> {
    let manifest = manifests.get(&key.task)?;
    let train = manifests.load_dataset(&key.task, key.layer, Split::Train)?;
    let val = manifests.load_dataset(&key.task, key.layer, Split::Val)?;
    let test = manifests.load_dataset(&key.task, key.layer, Split::Test)?;
    let cfg = TrainConfig {
        seed: key.seed,
        with_mlp: key.setting.with_mlp(),
        ..cfg.clone()
    };
    let trained = train_probe(&train, &val, &test, &manifest.task, &cfg)?;
    if save {
        save_checkpoint(&trained.params, key.layer, &key.checkpoint_path(dir))?;
    }
    Ok(RunRecord {
        key: key.clone(),
        result: trained.result,
    })
}

/// Trains one cell and stores its result (and checkpoint, if `save`) in
/// `dir`, overwriting any previous result for the same key.
pub fn train_cell(
    key: &CellKey,
    manifests: &ManifestSet,
    cfg: &TrainConfig,
    dir: &Path,
    save: bool,
) -> Result<RunRecord> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let record = run_cell(key, manifests, cfg, dir, save)?;
    write_atomic(&key.result_path(dir), &to_json(&record)?)?;
    let _ = fs::remove_file(key.error_path(dir));
    Ok(record)
}

/// Runs every cell of `spec`, writing one JSON file per cell into
/// `results_dir`. Cells whose result file already exists are loaded, not
/// retrained. A failing cell leaves a `.error.json` marker and does not
/// stop the others.
pub fn run_sweep(
    manifests: &ManifestSet,
    spec: &SweepSpec,
    cfg: &TrainConfig,
    results_dir: &Path,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    spec.validate(manifests)?;
    fs::create_dir_all(results_dir).map_err(|e| Error::io(results_dir, e))?;

    let keys = spec.cells();
    let job = |key: &CellKey| -> Result<(Option<RunRecord>, Option<FailureRecord>, bool)> {
        let path = key.result_path(results_dir);
        if path.exists() {
            return Ok((Some(read_record(&path)?), None, false));
        }
        match run_cell(key, manifests, cfg, results_dir, spec.save_checkpoints) {
            Ok(record) => {
                write_atomic(&path, &to_json(&record)?)?;
                let _ = fs::remove_file(key.error_path(results_dir));
                info!("{}: test_acc {:.4}", key.stem(), record.result.test_acc);
                Ok((Some(record), None, true))
            }
            Err(e) => {
                warn!("{}: {e}", key.stem());
                let failure = FailureRecord {
                    key: key.clone(),
                    error: e.to_string(),
                };
                write_atomic(&key.error_path(results_dir), &to_json(&failure)?)?;
                Ok((None, Some(failure), true))
            }
        }
    };

    let run_all = || keys.par_iter().map(job).collect::<Vec<_>>();
    let outputs = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let mut outcome = SweepOutcome::default();
    for out in outputs {
        let (record, failure, computed) = out?;
        if let Some(r) = record {
            outcome.cells.push(CellResult::from(&r));
        }
        outcome.failures.extend(failure);
        outcome.computed += computed as usize;
    }
    Ok(outcome)
}

/// Loads every result file (`*.json`, excluding error markers) in `dir`,
/// sorted by cell key.
pub fn load_results(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".json") && !name.ends_with(".error.json") && !name.starts_with('.') {
            if let Ok(record) = read_record(&path) {
                records.push(record);
            } else {
                warn!("skipping {}: not a run record", path.display());
            }
        }
    }
    records.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(records)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator). `None` below two values.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Sample std after dropping one instance of the maximum and one of the
/// minimum. Needs at least three values.
pub fn trimmed_std(xs: &[f64]) -> Result<f64> {
    if xs.len() < 3 {
        return Err(Error::Insufficient(format!(
            "trimmed std needs at least 3 values, got {}",
            xs.len()
        )));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let inner = &sorted[1..sorted.len() - 1];
    Ok(sample_std(inner).unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n_seeds: usize,
}

/// Aggregates keyed by (task, layer, setting).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub cells: BTreeMap<(String, u16, Setting), Aggregate>,
}

impl SweepTable {
    pub fn get(&self, task: &str, layer: u16, setting: Setting) -> Option<&Aggregate> {
        self.cells.get(&(task.to_string(), layer, setting))
    }

    /// Tasks in first-seen (sorted) order.
    pub fn tasks(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.cells.keys().map(|k| k.0.as_str()).collect();
        out.dedup();
        out
    }

    pub fn layers(&self) -> Vec<u16> {
        let mut out: Vec<u16> = self.cells.keys().map(|k| k.1).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Mean and sample std of test accuracy per (task, layer, setting).
/// Values are summed in seed order so input order does not matter.
pub fn aggregate(cells: &[CellResult]) -> Result<SweepTable> {
    let mut groups: BTreeMap<(String, u16, Setting), Vec<(u64, f64)>> = BTreeMap::new();
    for c in cells {
        if !(0.0..=1.0).contains(&c.test_acc) {
            return Err(Error::Config(format!(
                "accuracy {} outside [0, 1]",
                c.test_acc
            )));
        }
        groups
            .entry((c.task.clone(), c.layer, c.setting))
            .or_default()
            .push((c.seed, c.test_acc));
    }
    let mut table = SweepTable::default();
    for (key, mut runs) in groups {
        runs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let accs: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let std_acc = sample_std(&accs).ok_or_else(|| {
            Error::Insufficient(format!(
                "{} layer {} {}: {} seed(s), need at least 2",
                key.0,
                key.1,
                key.2,
                accs.len()
            ))
        })?;
        table.cells.insert(
            key,
            Aggregate {
                mean_acc: mean(&accs),
                std_acc,
                n_seeds: accs.len(),
            },
        );
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDeltas {
    /// (layer, mean_with - mean_without), by layer.
    pub deltas: Vec<(u16, f64)>,
    pub trimmed_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaReport {
    pub tasks: BTreeMap<String, TaskDeltas>,
}

/// Per-layer `mean_with - mean_without` and each task's trimmed std over
/// layers.
pub fn delta_analysis(table: &SweepTable) -> Result<DeltaReport> {
    let mut report = DeltaReport::default();
    for task in table.tasks() {
        let mut deltas = Vec::new();
        for layer in table.layers() {
            let with = table.get(task, layer, Setting::WithMlp);
            let without = table.get(task, layer, Setting::WithoutMlp);
            match (with, without) {
                (Some(w), Some(wo)) => deltas.push((layer, w.mean_acc - wo.mean_acc)),
                (None, None) => {}
                _ => {
                    return Err(Error::MissingCells(vec![format!(
                        "{task} layer {layer}: both settings required"
                    )]))
                }
            }
        }
        let values: Vec<f64> = deltas.iter().map(|d| d.1).collect();
        let trimmed_std = trimmed_std(&values)?;
        report.tasks.insert(
            task.to_string(),
            TaskDeltas {
                deltas,
                trimmed_std,
            },
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cell(task: &str, layer: u16, setting: Setting, seed: u64, acc: f64) -> CellResult {
        CellResult {
            task: task.into(),
            layer,
            setting,
            seed,
            test_acc: acc,
        }
    }

    #[test]
    fn constant_seeds() {
        let cells: Vec<_> = (0..5)
            .map(|s| cell("T", 1, Setting::WithMlp, s, 0.8))
            .collect();
        let t = aggregate(&cells).unwrap();
        let a = t.get("T", 1, Setting::WithMlp).unwrap();
        assert_abs_diff_eq!(a.mean_acc, 0.8, epsilon = 1e-15);
        assert_eq!(a.std_acc, 0.0);
        assert_eq!(a.n_seeds, 5);
    }

    #[test]
    fn hand_computed_sample_std() {
        // deviations -2..2 (x1e-3): sum of squares 10e-6, / 4, sqrt
        let accs = [0.641, 0.642, 0.643, 0.644, 0.645];
        let cells: Vec<_> = accs
            .iter()
            .enumerate()
            .map(|(s, &a)| cell("T", 1, Setting::WithoutMlp, s as u64, a))
            .collect();
        let a = aggregate(&cells)
            .unwrap()
            .get("T", 1, Setting::WithoutMlp)
            .unwrap()
            .clone();
        assert_abs_diff_eq!(a.mean_acc, 0.643, epsilon = 1e-12);
        assert_abs_diff_eq!(a.std_acc, (10e-6f64 / 4.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.std_acc, 0.00158, epsilon = 1e-5);
    }

    #[test]
    fn single_seed_is_an_error() {
        let cells = [cell("T", 1, Setting::WithMlp, 0, 0.5)];
        assert!(matches!(aggregate(&cells), Err(Error::Insufficient(_))));
    }

    #[test]
    fn trimmed_std_cases() {
        assert_abs_diff_eq!(
            trimmed_std(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            trimmed_std(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(trimmed_std(&[0.3; 6]).unwrap(), 0.0);
        // duplicates of the extremes: only one instance of each goes
        assert_abs_diff_eq!(
            trimmed_std(&[1.0, 1.0, 3.0, 5.0, 5.0]).unwrap(),
            sample_std(&[1.0, 3.0, 5.0]).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(trimmed_std(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(trimmed_std(&[1.0, 2.0]).is_err());
    }

    fn table_from_deltas(deltas: &[f64]) -> SweepTable {
        let mut cells = Vec::new();
        for (i, d) in deltas.iter().enumerate() {
            for seed in 0..2 {
                cells.push(cell("T", i as u16 + 1, Setting::WithoutMlp, seed, 0.5));
                cells.push(cell("T", i as u16 + 1, Setting::WithMlp, seed, 0.5 + d));
            }
        }
        aggregate(&cells).unwrap()
    }

    #[test]
    fn deltas_and_sign() {
        let r = delta_analysis(&table_from_deltas(&[0.01, -0.02, 0.03, 0.0])).unwrap();
        let t = &r.tasks["T"];
        assert_eq!(t.deltas.len(), 4);
        assert!(t.deltas[0].1 > 0.0);
        assert!(t.deltas[1].1 < 0.0);
        assert_eq!(t.deltas[3].1, 0.0);
        assert!(delta_analysis(&table_from_deltas(&[0.1, 0.2])).is_err());
    }

    #[test]
    fn delta_needs_both_settings() {
        let mut cells = Vec::new();
        for layer in 1..=3 {
            for seed in 0..2 {
                cells.push(cell("T", layer, Setting::WithoutMlp, seed, 0.5));
                if layer != 2 {
                    cells.push(cell("T", layer, Setting::WithMlp, seed, 0.6));
                }
            }
        }
        assert!(matches!(
            delta_analysis(&aggregate(&cells).unwrap()),
            Err(Error::MissingCells(_))
        ));
    }

    #[test]
    fn stems() {
        let k = CellKey {
            task: "Tense".into(),
            layer: 7,
            setting: Setting::WithMlp,
            seed: 3,
        };
        assert_eq!(k.stem(), "Tense_7_with_mlp_3");
        assert_eq!(
            k.result_path(Path::new("r")),
            Path::new("r/Tense_7_with_mlp_3.json")
        );
    }
}
