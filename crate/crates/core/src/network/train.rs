use serde::{Deserialize, Serialize};

use super::{ArchSpec, Mode, Network, NetworkError};
use crate::data::{BatchIterator, Dataset};
use crate::rng::{derive_seed, streams};
use crate::scalar::Scalar;

/// Plain minibatch SGD settings. `seed` fixes both the initial weights and
/// the shuffle order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, batch_size: 64, epochs: 5, seed: 0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NetworkError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NetworkError::InvalidConfig("batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub batches: usize,
}

/// Build `spec` from `cfg.seed` and train it on `train_set`.
pub fn train<T: Scalar>(spec: &ArchSpec, train_set: &Dataset<T>, cfg: &SgdConfig) -> Result<Network<T>, NetworkError> {
    cfg.validate()?;
    let net = Network::build(spec, cfg.seed)?;
    train_network(net, train_set, cfg).map(|(net, _)| net)
}

/// Run `cfg.epochs` epochs of SGD on an existing network. The result is left
/// in infer mode.
pub fn train_network<T: Scalar>(
    mut net: Network<T>,
    train_set: &Dataset<T>,
    cfg: &SgdConfig,
) -> Result<(Network<T>, Vec<EpochStats>), NetworkError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NetworkError::EmptyTrainingSet);
    }
    let lr = T::of(cfg.learning_rate);
    let mut batches = BatchIterator::new(train_set, cfg.batch_size, derive_seed(cfg.seed, streams::SHUFFLE))
        .map_err(|e| NetworkError::InvalidConfig(e.to_string()))?;
    let mut history = Vec::with_capacity(cfg.epochs);
    net.set_mode(Mode::Train);
    for epoch in 0..cfg.epochs {
        batches.start_epoch(epoch as u64);
        let mut total = 0.0;
        let mut count = 0;
        while let Some(batch) = batches.next_batch() {
            let (loss, grads) = net.loss_and_grad(&batch.images, &batch.labels).map_err(|e| match e {
                NetworkError::NonFiniteLoss { .. } => {
                    NetworkError::NonFiniteLoss { epoch: Some(epoch), batch: Some(count) }
                }
                other => other,
            })?;
            net.sgd_step(&grads, lr)?;
            total += loss.to_f64_lossy();
            count += 1;
        }
        let stats = EpochStats { epoch, mean_loss: total / count as f64, batches: count };
        log::debug!("epoch {} mean loss {:.6}", stats.epoch, stats.mean_loss);
        history.push(stats);
    }
    net.set_mode(Mode::Infer);
    Ok((net, history))
}
