use gesture_core::features::FeatureKind;
use gesture_core::network::{
    train, Batch, Mode, NetworkConfig, NetworkModel, TrainConfig, TrainSample,
};
use gesture_core::tensor::Tensor2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(classes: usize, dropout: f64) -> NetworkConfig {
    let mut cfg = NetworkConfig::new(
        &[(FeatureKind::Global, 3), (FeatureKind::Finger, 3), (FeatureKind::Skeleton, 3)],
        classes,
    );
    for b in &mut cfg.branches {
        b.lstm_hidden = 4;
        b.fc_out = 4;
        b.dropout_rate = dropout;
    }
    cfg.head_hidden = vec![5, 4];
    cfg.head_dropout = dropout;
    cfg
}

fn random_sample(rng: &mut ChaCha8Rng, t: usize) -> Vec<Tensor2> {
    (0..3)
        .map(|_| Tensor2::from_vec(t, 3, (0..3 * t).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect()
}

/// Largest relative error between analytic and central-difference gradients.
fn max_gradient_error(seed: u64, mode: Mode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = NetworkModel::new(tiny_config(3, 0.3), seed).unwrap();
    let batch = Batch::pad(&[random_sample(&mut rng, 5), random_sample(&mut rng, 4)]).unwrap();
    let labels = [rng.random_range(0..3), rng.random_range(0..3)];
    let analytic = model.backward(&batch, &labels, mode).unwrap().grad;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..model.param_count() {
        let orig = model.params()[k];
        model.params_mut()[k] = orig + h;
        let up = model.backward(&batch, &labels, mode).unwrap().loss;
        model.params_mut()[k] = orig - h;
        let down = model.backward(&batch, &labels, mode).unwrap().loss;
        model.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

#[test]
fn gradient_check_inference_mode() {
    for seed in 0..3 {
        let e = max_gradient_error(seed, Mode::Inference);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn gradient_check_under_dropout() {
    for seed in 10..13 {
        let e = max_gradient_error(seed, Mode::Train { seed: 99 + seed });
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn unidirectional_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cfg = tiny_config(3, 0.0);
    cfg.bidirectional = false;
    let mut model = NetworkModel::new(cfg, 5).unwrap();
    let batch = Batch::pad(&[random_sample(&mut rng, 6), random_sample(&mut rng, 3)]).unwrap();
    let labels = [0, 2];
    let analytic = model.backward(&batch, &labels, Mode::Inference).unwrap().grad;
    let h = 1e-5;
    for k in 0..model.param_count() {
        let orig = model.params()[k];
        model.params_mut()[k] = orig + h;
        let up = model.backward(&batch, &labels, Mode::Inference).unwrap().loss;
        model.params_mut()[k] = orig - h;
        let down = model.backward(&batch, &labels, Mode::Inference).unwrap().loss;
        model.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
        assert!((analytic[k] - numeric).abs() / denom < 1e-4, "param {k}");
    }
}

#[test]
fn overfit_single_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = NetworkModel::new(tiny_config(3, 0.0), 1).unwrap();
    let sample = TrainSample {
        streams: random_sample(&mut rng, 6),
        label: 2,
    };
    let cfg = TrainConfig {
        epochs: 300,
        seed: 1,
        adam: gesture_core::network::AdamConfig {
            lr: 0.01,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    train(&mut model, std::slice::from_ref(&sample), &cfg).unwrap();
    let (class, probs) = model.predict(&sample.streams).unwrap();
    assert_eq!(class, 2);
    assert!(probs[2] > 0.99, "{probs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), t in 1usize..8, train_mode in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = NetworkModel::new(tiny_config(4, 0.3), seed).unwrap();
        let batch = Batch::pad(&[random_sample(&mut rng, t), random_sample(&mut rng, 1 + t / 2)]).unwrap();
        let mode = if train_mode { Mode::Train { seed } } else { Mode::Inference };
        let p = model.forward(&batch, mode).unwrap();
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.row(r).iter().all(|&v| v > 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn padding_never_changes_inference_output(seed in any::<u64>(), t in 1usize..7, pad in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = NetworkModel::new(tiny_config(3, 0.3), seed ^ 1).unwrap();
        let s = random_sample(&mut rng, t);
        let alone = model.forward(&Batch::pad(std::slice::from_ref(&s)).unwrap(), Mode::Inference).unwrap();
        let long = random_sample(&mut rng, t + pad);
        let padded = model.forward(&Batch::pad(&[s, long]).unwrap(), Mode::Inference).unwrap();
        prop_assert_eq!(alone.row(0), padded.row(0));
    }

    #[test]
    fn padding_never_changes_train_mode_output(seed in any::<u64>(), t in 1usize..7, pad in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = NetworkModel::new(tiny_config(3, 0.3), seed ^ 2).unwrap();
        let s = random_sample(&mut rng, t);
        let mode = Mode::Train { seed: 3 };
        let alone = model.forward(&Batch::pad(std::slice::from_ref(&s)).unwrap(), mode).unwrap();
        let padded = model.forward(&Batch::pad(&[s, random_sample(&mut rng, t + pad)]).unwrap(), mode).unwrap();
        prop_assert_eq!(alone.row(0), padded.row(0));
    }
}
