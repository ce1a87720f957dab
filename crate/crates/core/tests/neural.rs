mod common;

use dmsclass::neural::*;
use ndarray::{array, Array1, Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn spec(input: Vec<usize>, layers: Vec<LayerSpec>, l2: f64) -> NetworkSpec {
    NetworkSpec {
        input_shape: input,
        layers,
        l2_lambda: l2,
        seed: 11,
    }
}

fn dense(units: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense { units, activation }
}

fn check_gradients(net: &Network, x: &Tensor, labels: &[usize], n_classes: usize) -> f64 {
    let targets = one_hot(labels, n_classes);
    let rng = ChaCha8Rng::seed_from_u64(99);
    let analytic = net.gradients(x, targets.view(), &mut rng.clone()).unwrap();
    let numeric = common::numeric_gradients(net, x, targets.view(), &rng, 1e-4);
    common::max_relative_error(&analytic.grads, &numeric, 1e-7)
}

#[test]
fn gradients_conv_pool_dropout_batchnorm_softmax() {
    let s = spec(
        vec![1, 6, 6],
        vec![
            LayerSpec::Conv2d {
                feature_maps: 2,
                kernel: [3, 3],
                activation: Activation::Relu,
            },
            LayerSpec::MaxPool2d { pool: [2, 2] },
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Flatten,
            LayerSpec::batch_norm(),
            dense(4, Activation::Relu),
            LayerSpec::Softmax,
            dense(3, Activation::Linear),
            LayerSpec::Softmax,
        ],
        1e-2,
    );
    let net = Network::build(s).unwrap();
    let x = random_tensor(&[4, 1, 6, 6], 1);
    let err = check_gradients(&net, &x, &[0, 1, 2, 1], 3);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn gradients_bidirectional_lstm() {
    let s = spec(
        vec![5, 3],
        vec![
            LayerSpec::BiLstm {
                units: 2,
                return_sequences: true,
                merge: Merge::Concat,
            },
            LayerSpec::BiLstm {
                units: 3,
                return_sequences: false,
                merge: Merge::Concat,
            },
            dense(3, Activation::Linear),
            LayerSpec::Softmax,
        ],
        1e-3,
    );
    let net = Network::build(s).unwrap();
    let x = random_tensor(&[4, 5, 3], 2);
    let err = check_gradients(&net, &x, &[2, 0, 1, 0], 3);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn gradients_reach_the_input() {
    // The input gradient of one layer is the upstream gradient of the one
    // below, so a two-layer stack exercises every backward input path.
    let s = spec(
        vec![3, 2],
        vec![
            LayerSpec::BiLstm {
                units: 2,
                return_sequences: true,
                merge: Merge::Concat,
            },
            LayerSpec::Flatten,
            dense(2, Activation::Linear),
            LayerSpec::Softmax,
        ],
        0.0,
    );
    let net = Network::build(s).unwrap();
    let x = random_tensor(&[4, 3, 2], 3);
    let err = check_gradients(&net, &x, &[0, 1, 1, 0], 2);
    assert!(err < 1e-3, "relative error {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gradients_on_random_dense_shapes(
        input in 1usize..5,
        hidden in 1usize..5,
        classes in 2usize..4,
        seed in 0u64..1000,
    ) {
        let s = NetworkSpec {
            input_shape: vec![input],
            layers: vec![
                dense(hidden, Activation::Linear),
                LayerSpec::Dropout { rate: 0.3 },
                LayerSpec::BatchNorm { momentum: 0.9, epsilon: 1e-3 },
                dense(classes, Activation::Relu),
                LayerSpec::Softmax,
            ],
            l2_lambda: 1e-2,
            seed,
        };
        let net = Network::build(s).unwrap();
        let x = random_tensor(&[4, input], seed + 1);
        let labels: Vec<usize> = (0..4).map(|i| i % classes).collect();
        let err = check_gradients(&net, &x, &labels, classes);
        prop_assert!(err < 1e-3, "relative error {}", err);
    }

    #[test]
    fn gradients_on_random_conv_shapes(
        channels in 1usize..3,
        maps in 1usize..3,
        side in 4usize..7,
        k in 1usize..4,
        seed in 0u64..1000,
    ) {
        prop_assume!(side > k);
        let s = NetworkSpec {
            input_shape: vec![channels, side, side],
            layers: vec![
                LayerSpec::Conv2d { feature_maps: maps, kernel: [k, k], activation: Activation::Linear },
                LayerSpec::MaxPool2d { pool: [2, 2] },
                LayerSpec::Flatten,
                dense(2, Activation::Linear),
                LayerSpec::Softmax,
            ],
            l2_lambda: 0.0,
            seed,
        };
        let net = Network::build(s).unwrap();
        let x = random_tensor(&[4, channels, side, side], seed + 7);
        let err = check_gradients(&net, &x, &[0, 1, 0, 1], 2);
        prop_assert!(err < 1e-3, "relative error {}", err);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..10_000, scale in 0.1f64..50.0) {
        let net = Network::build(build_mlp(6, 5).unwrap()).unwrap();
        let mut x = random_tensor(&[7, 6], seed).into_array();
        x *= scale;
        let p = net.predict(&Tensor::from_array(x)).unwrap();
        for row in p.values().chunks(5) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn lstm_five_unrolled_steps_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = LstmParams::glorot(2, 3, &mut rng);
    let xs: Vec<Array1<f64>> = (0..5)
        .map(|_| Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0)))
        .collect();
    let readout = array![0.3, -0.7, 1.1];
    let objective = |p: &LstmParams| {
        let mut h = Array1::zeros(3);
        let mut c = Array1::zeros(3);
        for x in &xs {
            let (nh, nc) = lstm_cell(x.view(), h.view(), c.view(), p);
            h = nh;
            c = nc;
        }
        h.dot(&readout)
    };

    // The same recurrence as a forward-only bidirectional layer: the loss on
    // its forward half is the objective above.
    let layer = Layer::BiLstm {
        forward: params.clone(),
        backward: LstmParams::zeros(2, 3),
        return_sequences: false,
    };
    let net_spec = spec(
        vec![5, 2],
        vec![
            LayerSpec::BiLstm {
                units: 3,
                return_sequences: false,
                merge: Merge::Concat,
            },
            dense(2, Activation::Linear),
            LayerSpec::Softmax,
        ],
        0.0,
    );
    let mut net = Network::build(net_spec).unwrap();
    net.layers_mut()[0] = layer;
    let x = Tensor::new(&[1, 5, 2], xs.iter().flat_map(|v| v.to_vec()).collect()).unwrap();
    let err = check_gradients(&net, &x, &[1], 2);
    assert!(err < 1e-3, "network relative error {err}");

    // Direct finite differences of the unrolled cell.
    let eps = 1e-4;
    let mut p = params.clone();
    let base = objective(&p);
    assert!(base.is_finite());
    for j in 0..p.recurrent_weights.len() {
        let orig = p.recurrent_weights.as_slice().unwrap()[j];
        p.recurrent_weights.as_slice_mut().unwrap()[j] = orig + eps;
        let up = objective(&p);
        p.recurrent_weights.as_slice_mut().unwrap()[j] = orig - eps;
        let down = objective(&p);
        p.recurrent_weights.as_slice_mut().unwrap()[j] = orig;
        let fd = (up - down) / (2.0 * eps);
        let mut q = params.clone();
        q.recurrent_weights.as_slice_mut().unwrap()[j] = orig + 1e-7;
        let fine = (objective(&q) - base) / 1e-7;
        assert!((fd - fine).abs() < 1e-4 * fd.abs().max(1e-3), "entry {j}: {fd} vs {fine}");
    }
}

#[test]
fn dropout_is_identity_at_inference() {
    let net = Network::build(spec(vec![4], vec![LayerSpec::Dropout { rate: 0.1 }], 0.0)).unwrap();
    let x = random_tensor(&[3, 4], 8);
    let y = net.forward(&x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(x, y);
}

#[test]
fn maxpool_takes_window_maximum() {
    let net = Network::build(spec(vec![1, 2, 2], vec![LayerSpec::MaxPool2d { pool: [2, 2] }], 0.0)).unwrap();
    let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = net.predict(&x).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.values(), &[4.0]);
}

#[test]
fn identity_kernel_copies_the_valid_region() {
    let mut net = Network::build(spec(
        vec![1, 4, 5],
        vec![LayerSpec::Conv2d {
            feature_maps: 1,
            kernel: [3, 3],
            activation: Activation::Linear,
        }],
        0.0,
    ))
    .unwrap();
    if let Layer::Conv2d { kernel, bias, .. } = &mut net.layers_mut()[0] {
        kernel.fill(0.0);
        kernel[(0, 4)] = 1.0;
        bias.fill(0.0);
    }
    let x = random_tensor(&[2, 1, 4, 5], 9);
    let y = net.predict(&x).unwrap();
    assert_eq!(y.shape(), &[2, 1, 2, 3]);
    let xa = x.array();
    let ya = y.array();
    for b in 0..2 {
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(ya[[b, 0, i, j]], xa[[b, 0, i + 1, j + 1]]);
            }
        }
    }
}

#[test]
fn wrong_input_shape_names_a_layer() {
    let net = Network::build(build_mlp(25, 5).unwrap()).unwrap();
    let err = net.predict(&random_tensor(&[2, 24], 1)).unwrap_err();
    assert!(matches!(err, dmsclass::Error::Layer { index: 0, .. }), "{err}");

    let bad = spec(vec![30], vec![LayerSpec::Flatten, LayerSpec::MaxPool2d { pool: [2, 2] }], 0.0);
    match Network::build(bad).unwrap_err() {
        dmsclass::Error::Layer { index, kind, .. } => {
            assert_eq!(index, 1);
            assert_eq!(kind, "maxpool2d");
        }
        other => panic!("{other}"),
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_bitwise() {
    let s = build_cnn_with(10, 12, 3, &CnnShape {
        dense: [5, 4],
        ..CnnShape::default()
    })
    .unwrap();
    let mut net = Network::build(s).unwrap();
    let before = net.clone();
    let x = random_tensor(&[4, 1, 10, 12], 3);
    let t = one_hot(&[0, 1, 2, 0], 3);
    for kind in [Optimizer::default(), Optimizer::SgdMomentum { momentum: 0.9 }] {
        let mut opt = OptimizerState::new(kind);
        net.backward_and_step(&x, t.view(), &mut opt, 0.0, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        for (a, b) in net.layers().iter().zip(before.layers()) {
            for ((pa, _), (pb, _)) in a.params().iter().zip(b.params()) {
                assert!(pa.iter().zip(pb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}

#[test]
fn one_step_descends_on_softmax_regression() {
    let s = spec(vec![4], vec![dense(3, Activation::Linear), LayerSpec::Softmax], 0.0);
    let mut net = Network::build(s).unwrap();
    let x = random_tensor(&[6, 4], 4);
    let t = one_hot(&[0, 1, 2, 0, 1, 2], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let before = net.loss(&x, t.view(), Mode::Train, &mut rng).unwrap();
    let mut opt = OptimizerState::new(Optimizer::SgdMomentum { momentum: 0.0 });
    net.backward_and_step(&x, t.view(), &mut opt, 1e-3, &mut rng).unwrap();
    let after = net.loss(&x, t.view(), Mode::Train, &mut rng).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn l2_alone_shrinks_kernels() {
    let mut s = build_mlp(5, 3).unwrap();
    s.l2_lambda = 0.05;
    let mut net = Network::build(s).unwrap();
    let norm = |n: &Network| -> f64 {
        n.layers()
            .iter()
            .flat_map(|l| l.params())
            .filter(|(_, r)| *r)
            .map(|(p, _)| p.iter().map(|v| v * v).sum::<f64>())
            .sum()
    };
    let mut grads: Vec<Vec<Vec<f64>>> = net
        .layers()
        .iter()
        .map(|l| l.params().iter().map(|(p, _)| vec![0.0; p.len()]).collect())
        .collect();
    net.add_l2_gradient(&mut grads);
    let before = norm(&net);
    let mut opt = OptimizerState::new(Optimizer::SgdMomentum { momentum: 0.0 });
    net.apply(&grads, &mut opt, 0.1);
    assert!(norm(&net) < before);
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let net = Network::build(spec(vec![8], vec![LayerSpec::Dropout { rate: 0.3 }], 0.0)).unwrap();
    let x = Tensor::new(&[1, 8], (1..=8).map(|v| v as f64).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut sum = [0.0; 8];
    let passes = 10_000;
    for _ in 0..passes {
        let y = net.forward(&x, Mode::Train, &mut rng).unwrap();
        for (s, v) in sum.iter_mut().zip(y.values()) {
            *s += v;
        }
    }
    for (s, v) in sum.iter().zip(x.values()) {
        let mean = s / passes as f64;
        assert!((mean - v).abs() < 0.02 * v, "{mean} vs {v}");
    }
}

#[test]
fn batchnorm_train_mode_standardises_each_feature() {
    let net = Network::build(spec(
        vec![5],
        vec![LayerSpec::BatchNorm {
            momentum: 0.99,
            epsilon: 1e-12,
        }],
        0.0,
    ))
    .unwrap();
    let mut x = random_tensor(&[16, 5], 12).into_array();
    x *= 3.0;
    x += 2.0;
    let y = net
        .forward(&Tensor::from_array(x), Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    let y: Array2<f64> = y.into_array().into_dimensionality().unwrap();
    for col in y.columns() {
        let mean = col.mean().unwrap();
        let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-6, "{var}");
    }
}

#[test]
fn architecture_builders() {
    let mlp = build_mlp(25, 5).unwrap();
    assert_eq!(mlp.output_shape().unwrap(), vec![5]);
    let rates: Vec<f64> = mlp
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerSpec::Dropout { rate } => Some(*rate),
            _ => None,
        })
        .collect();
    assert_eq!(rates, vec![0.1; 3]);
    let net = Network::build(mlp).unwrap();
    let p = net.predict(&random_tensor(&[4, 25], 1)).unwrap();
    assert_eq!(p.shape(), &[4, 5]);

    let cnn = build_cnn(20, 100, 5).unwrap();
    let maps: Vec<usize> = cnn
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerSpec::Conv2d { feature_maps, .. } => Some(*feature_maps),
            _ => None,
        })
        .collect();
    assert_eq!(maps, vec![16, 8]);
    let net = Network::build(cnn).unwrap();
    let p = net.predict(&random_tensor(&[2, 1, 20, 100], 2)).unwrap();
    for row in p.values().chunks(5) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(build_cnn(1, 1, 5).is_err());

    let lstm = build_lstm(20, 100, 5).unwrap();
    let shapes = lstm.shapes().unwrap();
    assert_eq!(shapes[1], vec![20, 16]);
    assert_eq!(shapes.last().unwrap(), &vec![5]);
    match &lstm.layers[1] {
        LayerSpec::BiLstm { units, return_sequences, .. } => {
            assert_eq!(*units, 256);
            assert!(!return_sequences);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn reversed_time_keeps_shapes_but_changes_states() {
    let s = build_lstm_with(6, 4, 3, &LstmShape {
        units: [3, 4],
        dense: [5, 5],
        ..LstmShape::default()
    })
    .unwrap();
    let net = Network::build(s).unwrap();
    let x: Array3<f64> = random_tensor(&[2, 6, 4], 3).into_array().into_dimensionality().unwrap();
    let mut rev = x.clone();
    rev.invert_axis(ndarray::Axis(1));
    let a = net.predict(&Tensor::from_array(x.into_dyn())).unwrap();
    let b = net.predict(&Tensor::from_array(rev.into_dyn())).unwrap();
    assert_eq!(a.shape(), b.shape());
    assert_ne!(a, b);
}

fn toy_problem(n: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mut values = Vec::new();
    for &l in &labels {
        for j in 0..6 {
            let centre = if j % 3 == l { 1.5 } else { 0.0 };
            values.push(centre + rng.random_range(-0.5..0.5));
        }
    }
    (Tensor::new(&[n, 6], values).unwrap(), labels)
}

#[test]
fn zero_epochs_returns_the_initial_network() {
    let s = build_mlp_with(6, 3, &MlpShape {
        hidden: vec![8],
        ..MlpShape::default()
    })
    .unwrap();
    let (x, y) = toy_problem(30, 1);
    let config = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let (model, history) = train(&s, &x, &y, 3, &config).unwrap();
    assert!(history.is_empty());
    assert_eq!(model.network, Network::build(s).unwrap());
}

#[test]
fn training_is_deterministic_and_learns() {
    let s = build_mlp_with(6, 3, &MlpShape {
        hidden: vec![16, 8],
        ..MlpShape::default()
    })
    .unwrap();
    let (x, y) = toy_problem(90, 2);
    let config = TrainConfig {
        epochs: 40,
        learning_rate: 1e-2,
        batch_size: 16,
        seed: 4,
        ..TrainConfig::default()
    };
    let (m1, h1) = train(&s, &x, &y, 3, &config).unwrap();
    let (m2, h2) = train(&s, &x, &y, 3, &config).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
    assert!(h1.len() <= 40);
    let pred = m1.predict(&x).unwrap();
    let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 90.0;
    assert!(acc > 0.9, "accuracy {acc}");
    let csv = h1.to_csv();
    assert_eq!(csv.lines().count(), h1.len() + 1);
    assert!(csv.starts_with("epoch,train_loss,train_accuracy,val_loss,val_accuracy"));
}

#[test]
fn trained_model_round_trips_through_json() {
    let s = build_lstm_with(3, 2, 2, &LstmShape {
        units: [2, 2],
        dense: [3, 3],
        ..LstmShape::default()
    })
    .unwrap();
    let x = random_tensor(&[4, 3, 2], 1);
    let config = TrainConfig {
        epochs: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let (model, _) = train(&s, &x, &[0, 1, 0, 1], 2, &config).unwrap();
    let text = serde_json::to_string(&model).unwrap();
    let back: TrainedModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.predict_proba(&x).unwrap(), model.predict_proba(&x).unwrap());
    let spec_text = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<NetworkSpec>(&spec_text).unwrap(), s);
}

#[test]
fn invalid_training_inputs() {
    let s = build_mlp(6, 3).unwrap();
    let (x, y) = toy_problem(9, 1);
    let bad_lr = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    assert!(train(&s, &x, &y, 3, &bad_lr).is_err());
    assert!(train(&s, &x, &[0, 1, 5, 0, 1, 2, 0, 1, 2], 3, &TrainConfig::default()).is_err());
    assert!(train(&s, &x, &y[..4], 3, &TrainConfig::default()).is_err());
}

#[test]
fn divergence_reports_history() {
    let s = spec(vec![6], vec![dense(3, Activation::Linear), LayerSpec::Softmax], 0.0);
    let (x, y) = toy_problem(30, 1);
    let mut values = x.values().to_vec();
    values[7] = f64::NAN;
    let x = Tensor::new(&[30, 6], values).unwrap();
    let config = TrainConfig {
        epochs: 3,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    };
    match train(&s, &x, &y, 3, &config) {
        Err(dmsclass::Error::Diverged { epoch, history }) => {
            assert_eq!(epoch, 0);
            assert!(history.is_empty());
        }
        other => panic!("{other:?}"),
    }
}
