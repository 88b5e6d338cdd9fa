use super::*;
use crate::dataset::{Label, TimeSeriesRecord};
use ndarray::array;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Plain nested-loop forward pass, independent of the ndarray path.
fn scalar_forward(spec: &NetworkSpec, params: &Parameters, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (layer, act) in params.layers.iter().zip(&spec.activations) {
        let (rows, cols) = layer.weights.dim();
        let mut next = vec![0.0; rows];
        for j in 0..rows {
            let mut s = if spec.use_bias { layer.bias[j] } else { 0.0 };
            for i in 0..cols {
                s += layer.weights[[j, i]] * a[i];
            }
            next[j] = act.apply(s);
        }
        a = next;
    }
    a
}

fn loss_at(spec: &NetworkSpec, params: &Parameters, x: &[f64], t: &[f64]) -> f64 {
    let (y, _) = forward(spec, params, x).unwrap();
    squared_error(&y, t)
}

fn random_instance(rng: &mut ChaCha8Rng, act: Activation) -> (NetworkSpec, Parameters, Vec<f64>, Vec<f64>) {
    let depth = rng.random_range(2..=4);
    let sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=5)).collect();
    let spec = NetworkSpec::uniform(&sizes, act).unwrap();
    let mut params = init_params(&spec, rng.random());
    for l in &mut params.layers {
        l.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let x = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = (0..*sizes.last().unwrap())
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    (spec, params, x, t)
}

#[test]
fn activation_ranges() {
    for z in [-50.0, -1.0, 0.0, 0.3, 50.0] {
        let t = Activation::Tanh.apply(z);
        assert!((-1.0..=1.0).contains(&t));
        let s = Activation::Sigmoid.apply(z);
        assert!((0.0..=1.0).contains(&s));
        assert_eq!(Activation::Linear.apply(z), z);
    }
    assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
}

#[test]
fn spec_validation() {
    assert!(NetworkSpec::uniform(&[3], Activation::Tanh).is_err());
    assert!(NetworkSpec::new(vec![3, 1], vec![], true).is_err());
    assert!(NetworkSpec::uniform(&[3, 0, 1], Activation::Tanh).is_err());
    let dnn = NetworkSpec::dnn(151);
    assert_eq!(dnn.layer_sizes, vec![151, 300, 50, 100, 1]);
    assert_eq!(NetworkSpec::ann(152).weight_count(), 152 * 300 + 300);
    assert_eq!(NetworkSpec::ann(152).bias_count(), 301);
}

#[test]
fn init_shapes_bounds_and_determinism() {
    let spec = NetworkSpec::perceptron(152);
    let a = init_params(&spec, 11);
    let b = init_params(&spec, 11);
    assert_eq!(a, b);
    assert_ne!(a, init_params(&spec, 12));
    assert_eq!(a.layers.len(), 1);
    assert_eq!(a.layers[0].weights.dim(), (1, 152));
    assert_eq!(a.layers[0].bias.len(), 1);
    assert!(a.layers[0].bias.iter().all(|&b| b == 0.0));
    let limit = 1.0 / 152f64.sqrt();
    let max = a.layers[0].weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    assert!(max <= limit);
    assert!(max > 0.5 * limit);
}

#[test]
fn zero_network_outputs_zero() {
    let spec = NetworkSpec::ann(4);
    let params = Parameters::zeros(&spec);
    let (y, _) = forward(&spec, &params, &[1.0, -2.0, 3.0, 0.5]).unwrap();
    assert_eq!(y[0], 0.0);
}

#[test]
fn scalar_tanh_identity() {
    let spec = NetworkSpec::uniform(&[1, 1], Activation::Tanh).unwrap();
    let mut params = Parameters::zeros(&spec);
    params.layers[0].weights[[0, 0]] = 1.0;
    let (y, _) = forward(&spec, &params, &[0.5]).unwrap();
    assert!((y[0] - 0.46211715726000974).abs() < 1e-15);
}

#[test]
fn forward_dimension_mismatch() {
    let spec = NetworkSpec::perceptron(3);
    let params = Parameters::zeros(&spec);
    assert!(matches!(forward(&spec, &params, &[1.0]), Err(Error::Shape { .. })));
}

#[test]
fn closed_form_linear_gradient() {
    let spec = NetworkSpec::uniform(&[1, 1], Activation::Linear).unwrap();
    let params = Parameters::zeros(&spec);
    let (_, cache) = forward(&spec, &params, &[1.0]).unwrap();
    let g = backward(&spec, &params, &cache, &[1.0]).unwrap();
    assert_eq!(g.layers[0].weights[[0, 0]], -1.0);
    assert_eq!(g.layers[0].bias[0], -1.0);
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let spec = NetworkSpec::uniform(&[3, 2, 1], Activation::Tanh).unwrap();
    let params = init_params(&spec, 5);
    let x = [0.2, -0.4, 0.9];
    let (y, cache) = forward(&spec, &params, &x).unwrap();
    let g = backward(&spec, &params, &cache, &[y[0]]).unwrap();
    assert_eq!(g.squared_norm(), 0.0);
}

#[test]
fn stale_cache_rejected() {
    let small = NetworkSpec::uniform(&[3, 1], Activation::Tanh).unwrap();
    let big = NetworkSpec::uniform(&[3, 2, 1], Activation::Tanh).unwrap();
    let (_, cache) = forward(&small, &init_params(&small, 0), &[0.0; 3]).unwrap();
    assert!(backward(&big, &init_params(&big, 0), &cache, &[1.0]).is_err());
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    for act in [Activation::Tanh, Activation::Linear, Activation::Sigmoid] {
        for _ in 0..40 {
            let (spec, params, x, t) = random_instance(&mut rng, act);
            let (_, cache) = forward(&spec, &params, &x).unwrap();
            let g = backward(&spec, &params, &cache, &t).unwrap();
            for k in 0..params.layers.len() {
                let (rows, cols) = params.layers[k].weights.dim();
                for j in 0..rows {
                    for i in 0..cols {
                        let mut p = params.clone();
                        p.layers[k].weights[[j, i]] += h;
                        let up = loss_at(&spec, &p, &x, &t);
                        p.layers[k].weights[[j, i]] -= 2.0 * h;
                        let down = loss_at(&spec, &p, &x, &t);
                        let numeric = (up - down) / (2.0 * h);
                        let e = rel_err(g.layers[k].weights[[j, i]], numeric);
                        assert!(e < 1e-4, "{act:?} layer {k} w[{j},{i}] rel err {e}");
                    }
                    let mut p = params.clone();
                    p.layers[k].bias[j] += h;
                    let up = loss_at(&spec, &p, &x, &t);
                    p.layers[k].bias[j] -= 2.0 * h;
                    let down = loss_at(&spec, &p, &x, &t);
                    let e = rel_err(g.layers[k].bias[j], (up - down) / (2.0 * h));
                    assert!(e < 1e-4, "{act:?} layer {k} b[{j}] rel err {e}");
                }
            }
        }
    }
}

#[test]
fn sgd_step_arithmetic() {
    let spec = NetworkSpec::uniform(&[1, 1], Activation::Linear).unwrap();
    let mut params = Parameters::zeros(&spec);
    params.layers[0].weights[[0, 0]] = 1.0;
    let mut g = Parameters::zeros(&spec);
    assert_eq!(params.sgd_step(&g, 0.001).unwrap(), params);
    g.layers[0].weights[[0, 0]] = 2.0;
    let next = params.sgd_step(&g, 0.001).unwrap();
    assert_eq!(next.layers[0].weights, array![[0.998]]);
    // original untouched
    assert_eq!(params.layers[0].weights[[0, 0]], 1.0);
    g.layers[0].weights[[0, 0]] = f64::NAN;
    assert!(matches!(params.sgd_step(&g, 0.001), Err(Error::NonFiniteGradient(_))));
}

#[test]
fn clipping_bounds_norm() {
    let spec = NetworkSpec::uniform(&[2, 1], Activation::Linear).unwrap();
    let mut g = Parameters::zeros(&spec);
    g.layers[0].weights = array![[3.0, 4.0]];
    clip_global_norm(&mut g, 1.0);
    assert!((g.squared_norm().sqrt() - 1.0).abs() < 1e-12);
    let before = g.clone();
    clip_global_norm(&mut g, 10.0);
    assert_eq!(g, before);
}

fn toy_records() -> Vec<TimeSeriesRecord> {
    vec![
        TimeSeriesRecord {
            label: Label::Normal,
            values: vec![1.0, 0.0],
            source_index: 0,
        },
        TimeSeriesRecord {
            label: Label::Abnormal,
            values: vec![-1.0, 0.5],
            source_index: 1,
        },
    ]
}

#[test]
fn one_epoch_two_updates() {
    let spec = NetworkSpec::perceptron(2);
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    let out = train(&spec, &toy_records(), &cfg).unwrap();
    assert_eq!(out.updates, 2);
    assert_eq!(out.trace.len(), 1);
    let bad = TrainConfig {
        epochs: 0,
        ..Default::default()
    };
    assert!(train(&spec, &toy_records(), &bad).is_err());
    assert!(train(&spec, &[], &cfg).is_err());
}

#[test]
fn update_accounting_40x() {
    let spec = NetworkSpec::perceptron(2);
    let records: Vec<_> = toy_records().into_iter().cycle().take(1000).collect();
    let out = train(&spec, &records, &TrainConfig::default()).unwrap();
    assert_eq!(out.updates, 40 * 1000);
    assert_eq!(out.trace.len(), 40);
}

#[test]
fn training_is_deterministic_and_learns_toy() {
    let spec = NetworkSpec::perceptron(2);
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 0.05,
        seed: 9,
        ..Default::default()
    };
    let a = train(&spec, &toy_records(), &cfg).unwrap();
    let b = train(&spec, &toy_records(), &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.trace, b.trace);
    let m = crate::model::evaluate(&a.model, &toy_records()).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert!(a.trace.last().unwrap().mean_loss < a.trace[0].mean_loss);
}

#[test]
fn divergence_reports_epoch() {
    let spec = NetworkSpec::uniform(&[2, 1], Activation::Linear).unwrap();
    let records: Vec<_> = toy_records()
        .into_iter()
        .map(|mut r| {
            r.values = vec![1e3, -1e3];
            r
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 50,
        learning_rate: 10.0,
        ..Default::default()
    };
    match train(&spec, &records, &cfg) {
        Err(Error::Diverged { epoch }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn zero_network_predicts_majority() {
    let spec = NetworkSpec::perceptron(2);
    let net = DenseNetwork::new(spec.clone(), Parameters::zeros(&spec)).unwrap();
    let mut records = toy_records();
    records.push(toy_records()[0].clone());
    let m = crate::model::evaluate(&net, &records).unwrap();
    assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(m.confusion.total(), 3);
}

proptest! {
    #[test]
    fn forward_matches_scalar_oracle(seed in any::<u64>(), act in prop::sample::select(vec![Activation::Tanh, Activation::Linear, Activation::Sigmoid])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, params, x, _) = random_instance(&mut rng, act);
        let (y, cache) = forward(&spec, &params, &x).unwrap();
        let oracle = scalar_forward(&spec, &params, &x);
        for (a, b) in y.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) || (a - b).abs() < 1e-15);
        }
        if act == Activation::Tanh {
            prop_assert!(cache.outputs[1..].iter().all(|a| a.iter().all(|v| v.abs() < 1.0)));
        }
    }
}
