//! Minibatch SGD with a step-decayed learning rate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forward::backward;
use super::params::NetworkParams;
use super::spec::NetworkSpec;
use crate::datasets::DecisionRecord;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

// Sub-stream indices inside the training domain.
const INIT_STREAM: u32 = 0;
const SHUFFLE_STREAM: u32 = 1;
const MASK_STREAM: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub lr_decay_start_epoch: usize,
    pub lr_decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            lr_decay_start_epoch: 10,
            lr_decay_factor: 0.99,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!(
                "base_lr {} must be positive",
                self.base_lr
            )));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay_factor {} outside (0, 1]",
                self.lr_decay_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub mean_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    /// Parameter updates applied in each epoch.
    pub updates: Vec<usize>,
}

impl TrainHistory {
    /// `epoch,lr,mean_loss` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,mean_loss\n");
        for (i, (lr, loss)) in self.learning_rate.iter().zip(&self.mean_loss).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, lr, loss));
        }
        out
    }
}

/// Learning rate for a 1-based epoch: constant through `lr_decay_start_epoch`,
/// then multiplied by `lr_decay_factor` once per further epoch.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch <= cfg.lr_decay_start_epoch {
        cfg.base_lr
    } else {
        let steps = (epoch - cfg.lr_decay_start_epoch) as i32;
        cfg.base_lr * cfg.lr_decay_factor.powi(steps)
    }
}

/// Trains from a fresh seeded initialization. The result is a pure function
/// of `(spec, dataset order, cfg)`.
pub fn train(
    spec: &NetworkSpec,
    dataset: &[DecisionRecord],
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainHistory)> {
    spec.validate()?;
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if let Some(r) = dataset.iter().find(|r| r.label > 1) {
        return Err(Error::Data(format!(
            "record {} has label {} outside {{0,1}}",
            r.id, r.label
        )));
    }

    let mut params = NetworkParams::init(spec, &mut stream(cfg.seed, Domain::Train, INIT_STREAM));
    let mut shuffle_rng = stream(cfg.seed, Domain::Train, SHUFFLE_STREAM);
    let mut mask_rng = stream(cfg.seed, Domain::Train, MASK_STREAM);
    let mut history = TrainHistory {
        mean_loss: Vec::with_capacity(cfg.epochs),
        learning_rate: Vec::with_capacity(cfg.epochs),
        updates: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 1..=cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut updates = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], u8)> = chunk
                .iter()
                .map(|&i| (dataset[i].features.as_slice(), dataset[i].label))
                .collect();
            let (grads, loss) = backward(spec, &params, &batch, Some(&mut mask_rng))
                .map_err(|e| at_epoch(e, epoch))?;
            params.add_scaled(-lr, &grads);
            if !params.all_finite() {
                return Err(at_epoch(
                    Error::numerics("non-finite parameter after update"),
                    epoch,
                ));
            }
            loss_sum += loss * batch.len() as f64;
            updates += 1;
        }
        history.mean_loss.push(loss_sum / dataset.len() as f64);
        history.learning_rate.push(lr);
        history.updates.push(updates);
    }
    Ok((params, history))
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numerics { message, .. } => Error::Numerics {
            message,
            epoch: Some(epoch),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schedule_values() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(1, &cfg), 1e-3);
        assert_eq!(lr_schedule(10, &cfg), 1e-3);
        assert_relative_eq!(lr_schedule(12, &cfg), 9.801e-4, max_relative = 1e-12);
        assert!(lr_schedule(1000, &cfg) > 0.0);
    }

    #[test]
    fn config_rejects_zero_epochs_and_batch() {
        let mut cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_dataset_is_a_data_error() {
        let spec = NetworkSpec::residual_mlp(2, 4, 1, 0.2);
        let r = train(&spec, &[], &TrainConfig::default());
        assert!(matches!(r, Err(Error::Data(_))));
    }

    fn toy_set() -> Vec<DecisionRecord> {
        (0..40)
            .map(|i| {
                let x = (i % 8) as f64 / 4.0 - 0.9;
                let y = (i / 8) as f64 / 2.0 - 1.0;
                DecisionRecord {
                    id: i.to_string(),
                    features: vec![x, y],
                    label: u8::from(x + 0.5 * y > 0.0),
                    agreement: None,
                }
            })
            .collect()
    }

    #[test]
    fn loss_falls_on_separable_data() {
        let spec = NetworkSpec::residual_mlp(2, 8, 1, 0.2);
        let cfg = TrainConfig {
            epochs: 50,
            base_lr: 0.05,
            seed: 3,
            ..Default::default()
        };
        let (params, history) = train(&spec, &toy_set(), &cfg).unwrap();
        assert_eq!(history.mean_loss.len(), 50);
        assert!(history.mean_loss[49] < history.mean_loss[0]);
        assert!(params.all_finite());
    }

    #[test]
    fn full_batch_gives_one_update_per_epoch() {
        let spec = NetworkSpec::residual_mlp(2, 4, 1, 0.2);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 64,
            ..Default::default()
        };
        let (_, history) = train(&spec, &toy_set(), &cfg).unwrap();
        assert_eq!(history.updates, vec![1]);
    }

    #[test]
    fn same_seed_same_history() {
        let spec = NetworkSpec::residual_mlp(2, 4, 1, 0.2);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let (pa, ha) = train(&spec, &toy_set(), &cfg).unwrap();
        let (pb, hb) = train(&spec, &toy_set(), &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(pa, pb);
        let (_, hc) = train(&spec, &toy_set(), &TrainConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(ha, hc);
    }
}
