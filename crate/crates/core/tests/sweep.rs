use std::fs;
use std::path::Path;

use probekit::dataio::{Level, ManifestSet};
use probekit::harness::{aggregate, delta_analysis, load_results, run_sweep, CellKey, SweepSpec};
use probekit::probe::Setting;
use probekit::synthetic;
use probekit::trainer::TrainConfig;

fn xor_fixture(dir: &Path, name: &str, layers: &[u16], n: usize, seed: u64) -> ManifestSet {
    let path = synthetic::write_fixture(&dir.join(name), layers, |l| {
        synthetic::renamed(
            synthetic::xor(n, n / 4, n / 4, l, seed),
            name,
            Level::Semantic,
        )
    })
    .unwrap();
    ManifestSet::open_all(&[path]).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        eval_every: 5,
        hidden: Some(4),
        ..Default::default()
    }
}

#[test]
fn grid_has_one_result_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let set = xor_fixture(dir.path(), "Xor", &[1, 2], 120, 0);
    let spec = SweepSpec {
        tasks: vec!["Xor".into()],
        layers: vec![1, 2],
        seeds: vec![0, 1, 2],
        ..Default::default()
    };
    let results = dir.path().join("results");
    let out = run_sweep(&set, &spec, &quick(), &results).unwrap();
    assert_eq!(out.cells.len(), 12);
    assert_eq!(out.computed, 12);
    assert!(out.failures.is_empty());
    assert_eq!(load_results(&results).unwrap().len(), 12);
    for key in spec.cells() {
        assert!(key.result_path(&results).exists());
        assert!(key.checkpoint_path(&results).exists());
    }
}

#[test]
fn rerun_recomputes_only_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let set = xor_fixture(dir.path(), "Xor", &[1, 2], 120, 0);
    let spec = SweepSpec {
        tasks: vec!["Xor".into()],
        layers: vec![1, 2],
        seeds: vec![0, 1, 2],
        save_checkpoints: false,
        ..Default::default()
    };
    let results = dir.path().join("results");
    run_sweep(&set, &spec, &quick(), &results).unwrap();
    let victim = CellKey {
        task: "Xor".into(),
        layer: 2,
        setting: Setting::WithMlp,
        seed: 1,
    };
    let path = victim.result_path(&results);
    let before = fs::read(&path).unwrap();
    fs::remove_file(&path).unwrap();

    let again = run_sweep(&set, &spec, &quick(), &results).unwrap();
    assert_eq!(again.computed, 1);
    assert_eq!(again.cells.len(), 12);
    assert_eq!(fs::read(&path).unwrap(), before);

    let third = run_sweep(&set, &spec, &quick(), &results).unwrap();
    assert_eq!(third.computed, 0);
}

#[test]
fn failing_cell_is_recorded_and_others_finish() {
    let dir = tempfile::tempdir().unwrap();
    let set = xor_fixture(dir.path(), "Xor", &[1, 2], 120, 0);
    // Break layer 2's training file after the manifest was validated.
    let broken = set
        .get("Xor")
        .unwrap()
        .resolve(Path::new("train.layer02.prbe"));
    fs::write(&broken, b"PRBE").unwrap();
    let spec = SweepSpec {
        tasks: vec!["Xor".into()],
        layers: vec![1, 2],
        seeds: vec![0, 1],
        save_checkpoints: false,
        ..Default::default()
    };
    let results = dir.path().join("results");
    let out = run_sweep(&set, &spec, &quick(), &results).unwrap();
    assert_eq!(out.cells.len(), 4);
    assert_eq!(out.failures.len(), 4);
    for f in &out.failures {
        assert_eq!(f.key.layer, 2);
        assert!(f.key.error_path(&results).exists());
    }
}

#[test]
fn nonlinear_task_favours_the_mlp_at_every_layer() {
    let dir = tempfile::tempdir().unwrap();
    let set = xor_fixture(dir.path(), "Xor", &[3, 4], 2000, 11);
    let spec = SweepSpec {
        tasks: vec!["Xor".into()],
        layers: vec![3, 4],
        seeds: vec![0, 1, 2],
        save_checkpoints: false,
        ..Default::default()
    };
    let cfg = TrainConfig {
        epochs: 40,
        eval_every: 50,
        hidden: Some(16),
        ..Default::default()
    };
    let out = run_sweep(&set, &spec, &cfg, &dir.path().join("results")).unwrap();
    let table = aggregate(&out.cells).unwrap();
    for layer in [3, 4] {
        let with = table.get("Xor", layer, Setting::WithMlp).unwrap().mean_acc;
        let without = table
            .get("Xor", layer, Setting::WithoutMlp)
            .unwrap()
            .mean_acc;
        assert!(with > without, "layer {layer}: {with} vs {without}");
    }
    // Two layers are too few for the trimmed spread.
    assert!(delta_analysis(&table).is_err());
}
