use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::model::{argmax, NetworkModel};
use super::NetworkError;
use crate::seed::derive_seed;
use crate::tensor::Tensor2;

/// Samples whose gradients are summed sequentially before the partial sums
/// are combined; fixed so results do not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip: f64,
    /// Stop after the first epoch whose training accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch: 32,
            epochs: 100,
            seed: 0,
            clip: 5.0,
            target_train_accuracy: None,
        }
    }
}

/// One training sequence: branch streams (already standardized) and label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub streams: Vec<Tensor2>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean minibatch loss under dropout.
    pub loss: f64,
    /// Inference-mode accuracy on the training set after the epoch.
    pub train_accuracy: f64,
}

fn clip_global_norm(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

pub fn training_accuracy(model: &NetworkModel, samples: &[TrainSample]) -> Result<f64, NetworkError> {
    let correct = samples
        .par_iter()
        .map(|s| model.probabilities(&s.streams).map(|p| usize::from(argmax(&p) == s.label)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / samples.len() as f64)
}

/// Minibatch Adam over seeded shuffles. Per-sample work runs on the rayon
/// pool; results are bit-identical for any pool size.
pub fn train(
    model: &mut NetworkModel,
    samples: &[TrainSample],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>, NetworkError> {
    if samples.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    if config.batch == 0 {
        return Err(NetworkError::InvalidConfig("batch size must be at least 1".into()));
    }
    let classes = model.config().classes;
    if let Some(s) = samples.iter().find(|s| s.label >= classes) {
        return Err(NetworkError::LabelOutOfRange { label: s.label, classes });
    }
    for s in samples {
        model.probabilities(&s.streams)?;
    }
    let mut state = AdamState::new(model.param_count());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x5eed, epoch as u64]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(config.batch).enumerate() {
            let dropout_base = derive_seed(config.seed, &[epoch as u64, b as u64]);
            let partials = batch
                .par_chunks(GRAD_CHUNK)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut grad = vec![0.0; model.param_count()];
                    let mut loss = 0.0;
                    for (k, &i) in chunk.iter().enumerate() {
                        let seed = derive_seed(dropout_base, &[(c * GRAD_CHUNK + k) as u64]);
                        let s = &samples[i];
                        let p = model.accumulate_sample(&s.streams, s.label, Some(seed), &mut grad)?;
                        loss -= p[s.label].max(super::model::PROB_FLOOR).ln();
                    }
                    Ok((grad, loss))
                })
                .collect::<Result<Vec<_>, NetworkError>>()?;
            let mut grad = vec![0.0; model.param_count()];
            let mut loss = 0.0;
            for (g, l) in partials {
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                loss += l;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_global_norm(&mut grad, config.clip);
            adam_step(model.params_mut(), &grad, &mut state, &config.adam);
            loss_sum += loss * scale;
            batches += 1;
        }
        let train_accuracy = training_accuracy(model, samples)?;
        log.push(EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / batches as f64,
            train_accuracy,
        });
        if config.target_train_accuracy.is_some_and(|t| train_accuracy >= t) {
            break;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::network::model::NetworkConfig;

    fn tiny() -> NetworkModel {
        let mut cfg = NetworkConfig::new(&[(FeatureKind::Global, 2), (FeatureKind::Skeleton, 2)], 3);
        for b in &mut cfg.branches {
            b.lstm_hidden = 3;
            b.lstm_layers = 1;
            b.fc_out = 4;
        }
        cfg.head_hidden = vec![5];
        NetworkModel::new(cfg, 9).unwrap()
    }

    fn data() -> Vec<TrainSample> {
        (0..9)
            .map(|i| {
                let label = i % 3;
                let t = 3 + i % 4;
                let streams = (0..2)
                    .map(|b| {
                        Tensor2::from_vec(
                            t,
                            2,
                            (0..2 * t).map(|k| (label as f64 - 1.0) + 0.1 * ((k + b + i) as f64).sin()).collect(),
                        )
                    })
                    .collect();
                TrainSample { streams, label }
            })
            .collect()
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = TrainConfig {
            epochs: 3,
            batch: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let mut a = tiny();
        let mut b = tiny();
        let la = train(&mut a, &data(), &cfg).unwrap();
        let lb = train(&mut b, &data(), &cfg).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(la, lb);
        assert_eq!(la.len(), 3);
        let mut c = tiny();
        train(&mut c, &data(), &TrainConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let cfg = TrainConfig {
            epochs: 2,
            batch: 9,
            ..TrainConfig::default()
        };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut m = tiny();
                train(&mut m, &data(), &cfg).unwrap();
                m.checksum()
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = tiny();
        let before = m.params().to_vec();
        let mut cfg = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        cfg.adam.lr = 0.0;
        train(&mut m, &data(), &cfg).unwrap();
        assert_eq!(m.params(), &before[..]);
    }

    #[test]
    fn empty_and_bad_labels_rejected() {
        let mut m = tiny();
        assert!(matches!(train(&mut m, &[], &TrainConfig::default()), Err(NetworkError::EmptyDataset)));
        let mut d = data();
        d[0].label = 3;
        assert!(matches!(
            train(&mut m, &d, &TrainConfig::default()),
            Err(NetworkError::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        clip_global_norm(&mut g, 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![3.0, 4.0];
        clip_global_norm(&mut g, 0.0);
        assert_eq!(g, vec![3.0, 4.0]);
    }
}
