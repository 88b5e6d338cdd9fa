use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DenseNetwork, NetworkSpec};
use crate::dataset::TimeSeriesRecord;
use crate::model::OnlineModel;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub gradient_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 40,
            seed: 0,
            shuffle: true,
            gradient_clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if let Some(c) = self.gradient_clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-pattern loss, each measured just before its update.
    pub mean_loss: f64,
    /// Fraction of patterns whose sign was right just before their update.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub trace: Vec<EpochStats>,
    /// Total number of SGD updates performed.
    pub updates: usize,
    /// Copies of the model taken at the end of the requested epochs.
    pub snapshots: Vec<(usize, M)>,
}

/// Online SGD: one update per training pattern, patterns reshuffled every
/// epoch from a stream derived from `config.seed`.
pub fn train_online<M: OnlineModel>(
    mut model: M,
    records: &[TimeSeriesRecord],
    config: &TrainConfig,
    snapshot_epochs: &[usize],
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let mut rng = rng_from_seed(derive_seed(config.seed, &[stream::SHUFFLE]));
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    let mut updates = 0;

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for &i in &order {
            let r = &records[i];
            let target = r.label.target();
            let (y, loss) = model
                .train_step(&r.values, target, config.learning_rate, config.gradient_clip_norm)
                .map_err(|e| match e {
                    Error::NonFiniteGradient(_) => Error::Diverged { epoch },
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            updates += 1;
            loss_sum += loss;
            if (y >= 0.0) == (target > 0.0) {
                correct += 1;
            }
        }
        trace.push(EpochStats {
            epoch,
            mean_loss: loss_sum / records.len() as f64,
            train_accuracy: correct as f64 / records.len() as f64,
        });
        if snapshot_epochs.contains(&epoch) {
            snapshots.push((epoch, model.clone()));
        }
    }
    Ok(TrainOutcome {
        model,
        trace,
        updates,
        snapshots,
    })
}

/// Initializes a dense network from `config.seed` and trains it.
pub fn train(spec: &NetworkSpec, records: &[TimeSeriesRecord], config: &TrainConfig) -> Result<TrainOutcome<DenseNetwork>> {
    spec.validate()?;
    train_online(DenseNetwork::init(spec.clone(), config.seed), records, config, &[])
}
