use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Model, NnError, Result};
use crate::tensor::{softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Rescales each batch gradient whose global L2 norm exceeds this value.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// Cosine-decays the learning rate from its initial value to zero.
    #[serde(default)]
    pub cosine_decay: bool,
}

impl TrainConfig {
    /// Learning rate used during `epoch` (0-based).
    pub fn rate_at(&self, epoch: usize) -> f64 {
        if self.cosine_decay {
            let t = epoch as f64 / self.epochs as f64;
            0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            self.learning_rate
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 8,
            seed: 0,
            clip_norm: None,
            cosine_decay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean softmax cross-entropy per epoch, measured while training.
    pub epoch_losses: Vec<f64>,
}

/// Loss and dLoss/dLogits for softmax cross-entropy against `label`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let classes = logits.len();
    if label >= classes {
        return Err(NnError::BadLabel { label, classes });
    }
    let p = softmax(logits.data());
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = p;
    grad[label] -= 1.0;
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Mini-batch SGD (no momentum) on softmax cross-entropy, with optional
/// gradient-norm clipping and cosine learning-rate decay.
///
/// The example order of every epoch is drawn from `cfg.seed`, and batch
/// gradients are summed in that order, so identical inputs give bit-identical
/// parameters.
pub fn train(model: &mut Model, data: &[(Tensor, usize)], cfg: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(NnError::BadConfig("learning rate must be finite and non-negative"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(NnError::BadConfig("epochs and batch size must be positive"));
    }
    if cfg.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
        return Err(NnError::BadConfig("clip norm must be finite and positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut sum: Option<Gradients> = None;
            for &i in batch {
                let (input, label) = &data[i];
                let mut loss = 0.0;
                let (_, grads) = model.backward_with_output(input, |out| {
                    let (l, g) = softmax_cross_entropy(out, *label)?;
                    loss = l;
                    Ok(g)
                })?;
                total += loss;
                match sum.as_mut() {
                    None => sum = Some(grads),
                    Some(acc) => {
                        for (name, g) in grads {
                            acc.get_mut(&name).expect("same parameter set").axpy(1.0, &g);
                        }
                    }
                }
            }
            let sum = sum.expect("batches are non-empty");
            let mut step = cfg.rate_at(epoch) / batch.len() as f64;
            if let Some(clip) = cfg.clip_norm {
                let norm = sum.values().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt() / batch.len() as f64;
                if norm > clip {
                    step *= clip / norm;
                }
            }
            for (name, g) in sum {
                model
                    .params_mut()
                    .get_mut(&name)
                    .expect("gradient names match parameters")
                    .axpy(-step, &g);
            }
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || model.params().values().any(|p| !p.is_finite()) {
            return Err(NnError::Divergence { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainReport { epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn xor_data() -> Vec<(Tensor, usize)> {
        [([0.0, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)]
            .iter()
            .map(|(x, y)| (Tensor::vector(x.to_vec()), *y))
            .collect()
    }

    fn xor_model(seed: u64) -> Model {
        Model::new(
            vec![2],
            vec![LayerSpec::dense(2, 8), LayerSpec::Relu, LayerSpec::dense(8, 2)],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn learns_xor() {
        let data = xor_data();
        let mut model = xor_model(4);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            batch_size: 4,
            seed: 11,
            ..Default::default()
        };
        let report = train(&mut model, &data, &cfg).unwrap();
        let correct = data
            .iter()
            .filter(|(x, y)| model.forward(x).unwrap().argmax() == *y)
            .count();
        assert_eq!(correct, 4);
        let l = &report.epoch_losses;
        let first: f64 = l[..3].iter().sum::<f64>() / 3.0;
        let last: f64 = l[l.len() - 3..].iter().sum::<f64>() / 3.0;
        assert!(last <= first, "loss {first} -> {last}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut model = xor_model(1);
        let before = model.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 2,
            seed: 0,
            ..Default::default()
        };
        train(&mut model, &xor_data(), &cfg).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 3,
            seed: 5,
            ..Default::default()
        };
        let mut a = xor_model(2);
        let mut b = xor_model(2);
        train(&mut a, &xor_data(), &cfg).unwrap();
        train(&mut b, &xor_data(), &cfg).unwrap();
        assert_eq!(a.to_file().to_bytes(), b.to_file().to_bytes());
    }

    #[test]
    fn empty_dataset_and_divergence_are_errors() {
        let mut model = xor_model(0);
        assert!(matches!(
            train(&mut model, &[], &TrainConfig::default()),
            Err(NnError::EmptyDataset)
        ));
        let data = vec![(Tensor::vector(vec![1e300, -1e300]), 0)];
        let err = train(
            &mut model,
            &data,
            &TrainConfig {
                learning_rate: 1e10,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, NnError::Divergence { epoch: 0 }), "{err}");
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let (loss, g) = softmax_cross_entropy(&Tensor::vector(vec![0.0, 0.0]), 1).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(g.data(), &[0.5, -0.5]);
        assert!(softmax_cross_entropy(&Tensor::vector(vec![0.0]), 1).is_err());
    }
}
