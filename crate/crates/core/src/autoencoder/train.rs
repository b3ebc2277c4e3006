use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, AdamState};
use super::{
    init_network, loss_and_gradient, reconstruction_mse, stack_rows, ArchitectureSpec, L2Penalty, L2Scope,
    NetworkParams,
};
use crate::error::{MctError, Result};
use crate::rng::{derive_seed, stage, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_alpha: f64,
    pub l2_scope: L2Scope,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.001,
            l2_alpha: 0.005,
            l2_scope: L2Scope::Hidden,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MctError::param("epochs and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !(self.l2_alpha >= 0.0) {
            return Err(MctError::param("learning_rate must be > 0 and l2_alpha >= 0"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(MctError::param("Adam constants out of range"));
        }
        Ok(())
    }

    pub fn penalty(&self) -> L2Penalty {
        L2Penalty::new(self.l2_alpha, self.l2_scope)
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Post-epoch losses. `train_loss` includes the L2 term; `train_mse` and
/// `val_loss` are reconstruction error only. `val_loss` stays empty when
/// no validation set was given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub train_mse: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl TrainReport {
    pub fn final_train_mse(&self) -> Option<f64> {
        self.train_mse.last().copied()
    }
}

const EVAL_CHUNK: usize = 64;

fn dataset_mse(params: &NetworkParams, samples: &[&[f64]]) -> Result<f64> {
    let dim = params.spec.input_dim;
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let x = stack_rows(chunk.iter().copied(), dim)?;
        total += reconstruction_mse(params, x.view())? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Trains a freshly initialized network; initialization and per-epoch
/// shuffling use seeds derived from `config.seed`.
pub fn train(
    ae_train: &[&[f64]],
    ae_val: &[&[f64]],
    spec: ArchitectureSpec,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    let params = init_network(spec, derive_seed(config.seed, stage::INIT, 0))?;
    train_from(params, ae_train, ae_val, config)
}

/// Minibatch Adam from the given starting point. Each epoch reshuffles the
/// training set; the final batch of an epoch may be short.
pub fn train_from(
    mut params: NetworkParams,
    ae_train: &[&[f64]],
    ae_val: &[&[f64]],
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    config.validate()?;
    if ae_train.is_empty() {
        return Err(MctError::param("autoencoder training set is empty"));
    }
    let dim = params.spec.input_dim;
    let mut shuffle = SplitMix64::new(derive_seed(config.seed, stage::SHUFFLE, 0));
    let lengths: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(&lengths);
    let hp = config.hyper();
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..ae_train.len()).collect();

    for epoch in 0..config.epochs {
        shuffle.shuffle(&mut order);
        for (b, batch_idx) in order.chunks(config.batch_size).enumerate() {
            let x = stack_rows(batch_idx.iter().map(|&i| ae_train[i]), dim)?;
            let (loss, grads) = loss_and_gradient(&params, x.view(), config.penalty())?;
            if !loss.is_finite() {
                return Err(MctError::Diverged { epoch, batch: b, loss });
            }
            let g = grads.tensors();
            adam.step(&mut params.tensors_mut(), &g, hp);
        }
        let mse = dataset_mse(&params, ae_train)?;
        let total = mse + config.penalty().value(&params);
        if !total.is_finite() {
            return Err(MctError::Diverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
                loss: total,
            });
        }
        report.train_mse.push(mse);
        report.train_loss.push(total);
        if !ae_val.is_empty() {
            report.val_loss.push(dataset_mse(&params, ae_val)?);
        }
        log::debug!("{} epoch {epoch}: loss {total:.5e} mse {mse:.5e}", params.spec.label());
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bumps(n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|k| {
                let c = k as f64 / n as f64;
                (0..dim)
                    .map(|j| {
                        let x = j as f64 / dim as f64;
                        (-(x - c).powi(2) * 40.0).exp()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn loss_decreases() {
        let data = bumps(40, 30);
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let spec = ArchitectureSpec::new(30, 12, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 0.01,
            seed: 4,
            ..TrainConfig::default()
        };
        let (_, report) = train(&rows, &rows[..5], spec, &cfg).unwrap();
        assert_eq!(report.train_loss.len(), 30);
        assert!(report.train_loss[29] < report.train_loss[0]);
        assert_eq!(report.val_loss.len(), 30);
        assert!(report.val_loss.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_dataset_is_learned_by_biases() {
        let x: Vec<f64> = (0..20).map(|j| 0.5 + 0.4 * (j as f64 * 0.7).sin()).collect();
        // 350 rows in batches of 32 give the 1100 Adam steps of a full-size run.
        let rows: Vec<&[f64]> = (0..350).map(|_| x.as_slice()).collect();
        let spec = ArchitectureSpec::new(20, 8, 2).unwrap();
        let cfg = TrainConfig {
            seed: 1,
            l2_alpha: 0.0,
            ..TrainConfig::default()
        };
        let (_, report) = train(&rows, &[], spec, &cfg).unwrap();
        assert!(
            report.final_train_mse().unwrap() < 1e-4,
            "{:?}",
            report.final_train_mse()
        );
        assert!(report.val_loss.is_empty());

        // The L2 pull on the decoder slows the approach: ~2.8e-4 after 100 epochs.
        let cfg = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, report) = train(&rows, &[], spec, &cfg).unwrap();
        assert!(
            report.final_train_mse().unwrap() < 1e-3,
            "{:?}",
            report.final_train_mse()
        );
    }

    #[test]
    fn bitwise_reproducible() {
        let data = bumps(20, 16);
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let spec = ArchitectureSpec::new(16, 6, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 7,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&rows, &rows, spec, &cfg).unwrap();
        let b = train(&rows, &rows, spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let data = bumps(10, 16);
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let spec = ArchitectureSpec::new(16, 6, 2).unwrap();
        let cfg = TrainConfig {
            l2_alpha: f64::INFINITY,
            epochs: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&rows, &[], spec, &cfg),
            Err(MctError::Parameter(_)) | Err(MctError::Diverged { .. })
        ));
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            ..TrainConfig::default()
        };
        let err = train(&rows, &[], spec, &cfg).unwrap_err();
        assert!(matches!(err, MctError::Diverged { .. }), "{err}");
    }

    #[test]
    fn empty_training_set_rejected() {
        let spec = ArchitectureSpec::new(16, 6, 2).unwrap();
        assert!(train(&[], &[], spec, &TrainConfig::default()).is_err());
    }
}
