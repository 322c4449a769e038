//! Minibatch Adam training on the labeled pool.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::network::{gather, ClassifierModel};
use super::ModelError;
use crate::data::{FeatureSource, LabeledPool};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Zero epochs is accepted and leaves parameters untouched.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("minibatch size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment coefficients must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// Trains a copy of `model` on the labeled pool. Shuffling is driven by
/// `shuffle_seed`, so the result is a pure function of its inputs.
pub fn train(
    model: &ClassifierModel,
    pool: &LabeledPool,
    source: FeatureSource<'_>,
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<ClassifierModel, ModelError> {
    if pool.is_empty() {
        return Err(ModelError::EmptyPool);
    }
    let indices: Vec<usize> = pool.indices().collect();
    let labels: Vec<u8> = pool.entries().iter().map(|&(_, y)| y).collect();
    let x = gather(source, &indices);
    train_on_matrix(model, x.view(), &labels, cfg, shuffle_seed)
}

pub fn train_on_matrix(
    model: &ClassifierModel,
    x: ArrayView2<f64>,
    labels: &[u8],
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<ClassifierModel, ModelError> {
    cfg.validate()?;
    if x.nrows() == 0 {
        return Err(ModelError::EmptyPool);
    }
    if x.nrows() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    if x.ncols() != model.input_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: model.input_dim(),
            found: x.ncols(),
        });
    }
    let mut trained = model.clone();
    let n_params = trained.param_count();
    let mut opt = Adam::new(n_params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut grad = vec![0.0; n_params];
    let d = x.ncols();
    let mut batch = Array2::zeros((cfg.batch_size.min(x.nrows()), d));
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if batch.nrows() != chunk.len() {
                batch = Array2::zeros((chunk.len(), d));
            }
            batch_labels.clear();
            for (mut row, &i) in batch.rows_mut().into_iter().zip(chunk) {
                row.assign(&x.row(i));
                batch_labels.push(labels[i]);
            }
            trained.loss_and_grad_into(batch.view(), &batch_labels, &mut grad)?;
            opt.step(trained.params_mut(), &grad);
        }
    }
    Ok(trained)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchId;

    fn blob_data(n: usize) -> (Array2<f64>, Vec<u8>) {
        let ds = crate::data::synthetic::generate(n / 10, 5, crate::data::Split::Train);
        let idx: Vec<usize> = (0..ds.len()).collect();
        (gather(ds.features(), &idx), ds.labels)
    }

    #[test]
    fn overfits_single_instance() {
        let (x, labels) = blob_data(10);
        let one = x.slice(ndarray::s![3..4, ..]);
        let model = ClassifierModel::init(ArchId::Dense.descriptor(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let trained = train_on_matrix(&model, one, &labels[3..4], &cfg, 2).unwrap();
        let loss = trained.mean_loss(one, &labels[3..4]).unwrap();
        assert!(loss < 0.01, "loss {loss}");
        let p = trained.posteriors_batch(one).unwrap();
        let argmax = (0..10).max_by(|&a, &b| p[[0, a]].total_cmp(&p[[0, b]])).unwrap();
        assert_eq!(argmax, usize::from(labels[3]));
    }

    #[test]
    fn zero_epochs_leave_parameters_unchanged() {
        let (x, labels) = blob_data(20);
        let model = ClassifierModel::init(ArchId::Dense.descriptor(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let trained = train_on_matrix(&model, x.view(), &labels, &cfg, 2).unwrap();
        assert_eq!(trained.params(), model.params());
    }

    #[test]
    fn first_epoch_does_not_increase_loss() {
        let (x, labels) = blob_data(100);
        let model = ClassifierModel::init(ArchId::Dense.descriptor(), 7).unwrap();
        let before = model.mean_loss(x.view(), &labels).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let trained = train_on_matrix(&model, x.view(), &labels, &cfg, 8).unwrap();
        let after = trained.mean_loss(x.view(), &labels).unwrap();
        assert!(after <= before + 1e-3, "{after} > {before}");
    }

    #[test]
    fn training_lowers_loss_and_is_deterministic() {
        let (x, labels) = blob_data(50);
        let model = ClassifierModel::init(ArchId::Dense.descriptor(), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train_on_matrix(&model, x.view(), &labels, &cfg, 4).unwrap();
        let b = train_on_matrix(&model, x.view(), &labels, &cfg, 4).unwrap();
        assert_eq!(a.params(), b.params());
        assert!(a.mean_loss(x.view(), &labels).unwrap() < model.mean_loss(x.view(), &labels).unwrap());
    }

    #[test]
    fn empty_pool_rejected() {
        let model = ClassifierModel::init(ArchId::Dense.descriptor(), 3).unwrap();
        let ds = crate::data::synthetic::generate(1, 1, crate::data::Split::Train);
        let err = train(&model, &LabeledPool::new(), ds.features(), &TrainConfig::default(), 0);
        assert!(matches!(err, Err(ModelError::EmptyPool)));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
