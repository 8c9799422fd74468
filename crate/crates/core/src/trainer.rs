//! Mini-batch SGD with heavy-ball momentum.

use std::sync::Arc;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::nn::{self, LossKind, MlpArchitecture, ParamVector};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Every parameter starts from `N(0, init_stddev^2)`.
    pub init_stddev: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            init_stddev: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be a nonnegative real".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be >= 1".into()));
        }
        if !(self.init_stddev > 0.0 && self.init_stddev.is_finite()) {
            return Err(Error::InvalidArgument("init_stddev must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The final iterate.
    pub params: ParamVector,
    /// Mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Initial parameters drawn from `N(0, init_stddev^2 I)`.
pub fn initialize(arch: Arc<MlpArchitecture>, cfg: &TrainConfig) -> ParamVector {
    let mut values = vec![0.0; arch.param_count()];
    rng::fill_standard_normal(&mut rng::stream(cfg.seed, Stream::TrainInit), &mut values);
    values.iter_mut().for_each(|v| *v *= cfg.init_stddev);
    ParamVector::new(arch, values).expect("finite initialization")
}

/// Trains from [`initialize`]. Each epoch visits a fresh seed-determined
/// permutation; the last, possibly partial, batch is kept.
pub fn train(arch: Arc<MlpArchitecture>, data: &LabeledDataset, kind: LossKind, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.input_dim() != arch.input_dim() {
        return Err(Error::DimensionMismatch { what: "training inputs", expected: arch.input_dim(), got: data.input_dim() });
    }
    let init = initialize(arch.clone(), cfg);
    train_from(init, data, kind, cfg)
}

/// Trains from the given starting point.
pub fn train_from(init: ParamVector, data: &LabeledDataset, kind: LossKind, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = init.arch().clone();
    let mut w = init.into_values();
    let mut u = vec![0.0; w.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = rng::stream(cfg.seed, Stream::Epoch(epoch as u64));
        rng::shuffle(&mut rng, &mut order);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.inputs().select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
            let params = ParamVector::new(arch.clone(), w).map_err(|_| Error::Divergence {
                epoch,
                batch,
                loss: f64::NAN,
            })?;
            let (loss, g) = nn::param_gradient_batch(&params, x.view(), &y, kind)?;
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch, batch, loss });
            }
            w = params.into_values();
            for ((wi, ui), gi) in w.iter_mut().zip(u.iter_mut()).zip(&g) {
                *ui = cfg.momentum * *ui - cfg.learning_rate * gi;
                *wi += *ui;
            }
            total += loss;
            batches += 1;
        }
        let mean_loss = total / batches as f64;
        log::debug!("epoch {epoch}: mean batch loss {mean_loss:.6}");
        epoch_losses.push(mean_loss);
    }
    let params = ParamVector::new(arch, w).map_err(|_| Error::Divergence {
        epoch: cfg.epochs,
        batch: 0,
        loss: f64::NAN,
    })?;
    Ok(TrainOutcome { params, epoch_losses })
}

/// Mean loss and argmax accuracy (ties go to the lowest class index).
pub fn evaluate(params: &ParamVector, data: &LabeledDataset, kind: LossKind) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let eval = nn::evaluate_batch(params, data.inputs(), data.labels(), kind, false)?;
    let logits = nn::forward_batch(params, data.inputs())?;
    let correct = logits
        .outer_iter()
        .zip(data.labels())
        .filter(|(row, &y)| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best == y
        })
        .count();
    let n = data.len() as f64;
    Ok((eval.losses.iter().sum::<f64>() / n, correct as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_gaussian, Provenance};
    use ndarray::{array, Array2};

    fn blobs() -> LabeledDataset {
        synth_gaussian(array![[3.0, 0.0], [-3.0, 0.0]].view(), 0.3, 50, 4).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let data = blobs();
        let arch = Arc::new(MlpArchitecture::mlp(2, 2, vec![5]).unwrap());
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 2, batch_size: 16, ..Default::default() };
        let out = train(arch.clone(), &data, LossKind::Nll, &cfg).unwrap();
        assert_eq!(out.params, initialize(arch, &cfg));
    }

    #[test]
    fn separable_data_is_fit() {
        let data = blobs();
        let arch = Arc::new(MlpArchitecture::linear(2, 2).unwrap());
        let cfg = TrainConfig { epochs: 30, batch_size: 10, ..Default::default() };
        let out = train(arch, &data, LossKind::Nll, &cfg).unwrap();
        let (loss, acc) = evaluate(&out.params, &data, LossKind::Nll).unwrap();
        assert!(loss < 0.05, "{loss}");
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs();
        let arch = Arc::new(MlpArchitecture::mlp(2, 2, vec![4, 3]).unwrap());
        let cfg = TrainConfig { epochs: 3, batch_size: 7, seed: 9, ..Default::default() };
        let a = train(arch.clone(), &data, LossKind::Nll, &cfg).unwrap();
        let b = train(arch, &data, LossKind::Nll, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs();
        let arch = Arc::new(MlpArchitecture::mlp(2, 2, vec![8, 8]).unwrap());
        let cfg = TrainConfig { learning_rate: 1e30, momentum: 0.0, epochs: 5, batch_size: 100, ..Default::default() };
        assert!(matches!(train(arch, &data, LossKind::Nll, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn zero_model_evaluation() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i + j) as f64);
        let data = LabeledDataset::new(x, vec![0, 1, 2, 0, 1, 2], 3, Provenance::InMemory).unwrap();
        let p = ParamVector::zeros(Arc::new(MlpArchitecture::linear(2, 3).unwrap()));
        let (loss, acc) = evaluate(&p, &data, LossKind::Nll).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        // All logits tie, so every prediction is class 0.
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
    }
}
