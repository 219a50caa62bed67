//! Mini-batch training with step-based validation, early stopping and
//! best-checkpoint selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetSplit, TaskSpec};
use crate::error::{Error, Result};
use crate::probe::model::gather_rows;
use crate::probe::{
    derive_run_seed, rng_from_seed, Activation, AdamConfig, AdamState, ProbeParams, ProbeRng,
    Setting,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Optimizer steps between validations.
    pub eval_every: usize,
    /// Consecutive non-improving validations before stopping.
    pub patience: usize,
    pub seed: u64,
    pub with_mlp: bool,
    /// MLP width; `None` means the input dimensionality.
    pub hidden: Option<usize>,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 4,
            lr: 1e-3,
            eval_every: 200,
            patience: 5,
            seed: 0,
            with_mlp: false,
            hidden: None,
            activation: Activation::Relu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.hidden == Some(0) {
            return Err(Error::Config("hidden must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        Ok(())
    }

    pub fn setting(&self) -> Setting {
        if self.with_mlp {
            Setting::WithMlp
        } else {
            Setting::WithoutMlp
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub step: usize,
    /// Mean minibatch loss since the previous validation.
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub best_val_acc: f64,
    /// Evaluated on the best-validation parameters.
    pub test_acc: f64,
    pub steps_run: usize,
    pub stopped_early: bool,
    pub history: Vec<HistoryPoint>,
}

/// A finished run: its summary and the selected parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe {
    pub result: TrainResult,
    pub params: ProbeParams,
}

/// True iff each of the last `patience` validations fails to strictly beat
/// the best value seen before it.
pub fn check_early_stop(val_history: &[f64], patience: usize) -> bool {
    if patience == 0 || val_history.len() < patience {
        return false;
    }
    let split = val_history.len() - patience;
    let mut best = val_history[..split]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    for &v in &val_history[split..] {
        if v > best {
            return false;
        }
        best = best.max(v);
    }
    true
}

/// One epoch's visiting order: a Fisher-Yates shuffle of `0..n`.
pub fn epoch_order(n: usize, rng: &mut ProbeRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

fn check_splits(train: &DatasetSplit, others: [&DatasetSplit; 2], spec: &TaskSpec) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Empty("train split"));
    }
    for split in std::iter::once(train).chain(others) {
        if split.dim() != train.dim() {
            return Err(Error::DimMismatch {
                expected: train.dim(),
                got: split.dim(),
                context: "split dimensionality",
            });
        }
        if let Some(&bad) = split
            .labels
            .as_slice()
            .iter()
            .find(|&&c| c >= spec.n_classes)
        {
            return Err(Error::InvalidLabel {
                label: bad,
                n_classes: spec.n_classes,
            });
        }
    }
    Ok(())
}

/// Trains one probe. The run's RNG is derived from `cfg.seed`, the task
/// name, the layer of `train` and the setting, so a cell reproduces in
/// isolation.
pub fn train_probe(
    train: &DatasetSplit,
    val: &DatasetSplit,
    test: &DatasetSplit,
    spec: &TaskSpec,
    cfg: &TrainConfig,
) -> Result<TrainedProbe> {
    cfg.validate()?;
    check_splits(train, [val, test], spec)?;

    let dim = train.dim();
    let layer = train.embeddings.layer();
    let mut rng = rng_from_seed(derive_run_seed(cfg.seed, &spec.name, layer, cfg.setting()));
    let mlp = cfg
        .with_mlp
        .then(|| (cfg.hidden.unwrap_or(dim), cfg.activation));
    let mut params = ProbeParams::init(dim, spec.n_classes, mlp, &mut rng)?;
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );

    let labels = train.labels.as_slice();
    let mut history = Vec::new();
    let mut val_accs = Vec::new();
    let mut best: Option<(f64, ProbeParams)> = None;
    let mut step = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut stopped_early = false;

    let mut validate = |step: usize,
                        params: &ProbeParams,
                        loss_sum: &mut f64,
                        loss_count: &mut usize|
     -> Result<bool> {
        let val_acc = params.accuracy(val)?;
        history.push(HistoryPoint {
            step,
            train_loss: *loss_sum / (*loss_count).max(1) as f64,
            val_acc,
        });
        *loss_sum = 0.0;
        *loss_count = 0;
        val_accs.push(val_acc);
        // ties keep the earlier checkpoint
        if best.as_ref().is_none_or(|(b, _)| val_acc > *b) {
            best = Some((val_acc, params.clone()));
        }
        Ok(check_early_stop(&val_accs, cfg.patience))
    };

    'epochs: for _ in 0..cfg.epochs {
        let order = epoch_order(train.len(), &mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let x = gather_rows(&train.embeddings, batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = params.loss_and_grad(x.view(), &y)?;
            adam.step(&mut params, &grads)?;
            step += 1;
            loss_sum += loss;
            loss_count += 1;
            if step.is_multiple_of(cfg.eval_every)
                && validate(step, &params, &mut loss_sum, &mut loss_count)?
            {
                stopped_early = true;
                break 'epochs;
            }
        }
    }
    if !stopped_early && !step.is_multiple_of(cfg.eval_every) {
        validate(step, &params, &mut loss_sum, &mut loss_count)?;
    }

    let (best_val_acc, params) = best.expect("at least one validation ran");
    let test_acc = params.accuracy(test)?;
    Ok(TrainedProbe {
        result: TrainResult {
            best_val_acc,
            test_acc,
            steps_run: step,
            stopped_early,
            history,
        },
        params,
    })
}
