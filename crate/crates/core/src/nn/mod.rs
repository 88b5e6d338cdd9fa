//! Dense feed-forward networks: the single tanh perceptron, the 3-layer ANN
//! and the 5-layer DNN, all trained on squared error against ±1 targets.

use ndarray::{Array1, Array2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Classifier, OnlineModel};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

mod train;

pub use train::{train, train_online, EpochStats, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_name(s: &str) -> Option<Activation> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "linear" => Some(Activation::Linear),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Layer sizes from input to output, with one activation per non-input layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub use_bias: bool,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>, use_bias: bool) -> Result<Self> {
        let spec = NetworkSpec {
            layer_sizes,
            activations,
            use_bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every layer uses the same activation.
    pub fn uniform(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        let n = layer_sizes.len().saturating_sub(1);
        Self::new(layer_sizes.to_vec(), vec![activation; n], true)
    }

    /// `inputs → 1`, tanh.
    pub fn perceptron(inputs: usize) -> Self {
        Self::uniform(&[inputs, 1], Activation::Tanh).unwrap()
    }

    /// `inputs → 300 → 1`, tanh.
    pub fn ann(inputs: usize) -> Self {
        Self::uniform(&[inputs, 300, 1], Activation::Tanh).unwrap()
    }

    /// `inputs → 300 → 50 → 100 → 1`, tanh.
    pub fn dnn(inputs: usize) -> Self {
        Self::uniform(&[inputs, 300, 50, 100, 1], Activation::Tanh).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least an input and an output layer".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} activations for {} weight layers",
                self.activations.len(),
                self.layer_sizes.len() - 1
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn weight_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn bias_count(&self) -> usize {
        if self.use_bias {
            self.layer_sizes[1..].iter().sum()
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// fan_out × fan_in
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases of every layer. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<DenseLayer>,
}

pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros(spec: &NetworkSpec) -> Parameters {
        Parameters {
            layers: spec
                .layer_sizes
                .windows(2)
                .map(|w| DenseLayer {
                    weights: Array2::zeros((w[1], w[0])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        }
    }

    pub fn check_shape(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers() {
            return Err(Error::shape("parameter layer count", spec.num_layers(), self.layers.len()));
        }
        for (layer, w) in self.layers.iter().zip(spec.layer_sizes.windows(2)) {
            if layer.weights.dim() != (w[1], w[0]) {
                return Err(Error::shape("weight matrix size", w[0] * w[1], layer.weights.len()));
            }
            if layer.bias.len() != w[1] {
                return Err(Error::shape("bias length", w[1], layer.bias.len()));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .map(|v| v * v)
            .sum()
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights *= k;
            l.bias *= k;
        }
    }

    /// `w ← w − λ·g`, returning the updated set. Non-finite gradients are rejected.
    pub fn sgd_step(&self, grads: &Gradients, learning_rate: f64) -> Result<Parameters> {
        let mut next = self.clone();
        next.sgd_update(grads, learning_rate)?;
        Ok(next)
    }

    /// In-place form of [`Parameters::sgd_step`].
    pub fn sgd_update(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("gradient layer count", self.layers.len(), grads.layers.len()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient("dense network"));
        }
        for (p, g) in self.layers.iter_mut().zip(&grads.layers) {
            if p.weights.dim() != g.weights.dim() || p.bias.len() != g.bias.len() {
                return Err(Error::shape("gradient size", p.weights.len(), g.weights.len()));
            }
            p.weights.scaled_add(-learning_rate, &g.weights);
            p.bias.scaled_add(-learning_rate, &g.bias);
        }
        Ok(())
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm && norm.is_finite() {
        grads.scale(max_norm / norm);
    }
}

/// Weights uniform in ±1/√fan_in, zero biases. Deterministic per seed.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Parameters {
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::INIT]));
    let mut params = Parameters::zeros(spec);
    for layer in &mut params.layers {
        let fan_in = layer.weights.ncols();
        let limit = 1.0 / (fan_in as f64).sqrt();
        for w in layer.weights.iter_mut() {
            *w = rng.random_range(-limit..=limit);
        }
    }
    params
}

/// Post-activation values of every layer, the input included, plus pre-activations.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `outputs[0]` is the input, `outputs[k]` the output of weight layer k.
    pub outputs: Vec<Array1<f64>>,
    /// `pre_activations[k]` is `W·a + b` of weight layer k.
    pub pre_activations: Vec<Array1<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array1<f64> {
        self.outputs.last().unwrap()
    }
}

pub fn forward(spec: &NetworkSpec, params: &Parameters, x: &[f64]) -> Result<(Array1<f64>, ForwardCache)> {
    if x.len() != spec.input_size() {
        return Err(Error::shape("network input", spec.input_size(), x.len()));
    }
    if params.layers.len() != spec.num_layers() {
        return Err(Error::shape("parameter layer count", spec.num_layers(), params.layers.len()));
    }
    let mut outputs = Vec::with_capacity(spec.layer_sizes.len());
    let mut pre_activations = Vec::with_capacity(spec.num_layers());
    outputs.push(Array1::from(x.to_vec()));
    for (layer, &act) in params.layers.iter().zip(&spec.activations) {
        let input = outputs.last().unwrap();
        if layer.weights.ncols() != input.len() {
            return Err(Error::shape("layer fan-in", layer.weights.ncols(), input.len()));
        }
        let mut z = layer.weights.dot(input);
        if spec.use_bias {
            z += &layer.bias;
        }
        let a = z.mapv(|v| act.apply(v));
        pre_activations.push(z);
        outputs.push(a);
    }
    let out = outputs.last().unwrap().clone();
    Ok((out, ForwardCache { outputs, pre_activations }))
}

/// Squared-error loss `½Σ(y−t)²`.
pub fn squared_error(output: &Array1<f64>, target: &[f64]) -> f64 {
    output
        .iter()
        .zip(target)
        .map(|(y, t)| 0.5 * (y - t).powi(2))
        .sum()
}

/// Exact gradient of `½Σ(y−t)²` with respect to every weight and bias.
pub fn backward(spec: &NetworkSpec, params: &Parameters, cache: &ForwardCache, target: &[f64]) -> Result<Gradients> {
    if cache.outputs.len() != spec.layer_sizes.len() {
        return Err(Error::shape("forward cache depth", spec.layer_sizes.len(), cache.outputs.len()));
    }
    for (a, &n) in cache.outputs.iter().zip(&spec.layer_sizes) {
        if a.len() != n {
            return Err(Error::shape("forward cache width", n, a.len()));
        }
    }
    if target.len() != spec.output_size() {
        return Err(Error::shape("target length", spec.output_size(), target.len()));
    }
    params.check_shape(spec)?;

    let mut grads = Parameters::zeros(spec);
    // dL/da for the current layer's output
    let mut delta_out: Array1<f64> = cache
        .output()
        .iter()
        .zip(target)
        .map(|(y, t)| y - t)
        .collect();
    for k in (0..spec.num_layers()).rev() {
        let act = spec.activations[k];
        let out = &cache.outputs[k + 1];
        let mut delta = delta_out;
        Zip::from(&mut delta)
            .and(out)
            .for_each(|d, &y| *d *= act.derivative_from_output(y));
        let input = &cache.outputs[k];
        let g = &mut grads.layers[k];
        Zip::from(g.weights.rows_mut())
            .and(&delta)
            .for_each(|mut row, &d| row.scaled_add(d, input));
        if spec.use_bias {
            g.bias.assign(&delta);
        }
        delta_out = params.layers[k].weights.t().dot(&delta);
    }
    Ok(grads)
}

/// A network topology bundled with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    pub spec: NetworkSpec,
    pub params: Parameters,
}

impl DenseNetwork {
    pub fn new(spec: NetworkSpec, params: Parameters) -> Result<Self> {
        spec.validate()?;
        params.check_shape(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let params = init_params(&spec, seed);
        Self { spec, params }
    }
}

impl Classifier for DenseNetwork {
    fn predict(&self, values: &[f64]) -> Result<f64> {
        let (y, _) = forward(&self.spec, &self.params, values)?;
        Ok(y[0])
    }
}

impl OnlineModel for DenseNetwork {
    fn train_step(
        &mut self,
        input: &[f64],
        target: f64,
        learning_rate: f64,
        clip_norm: Option<f64>,
    ) -> Result<(f64, f64)> {
        let (y, cache) = forward(&self.spec, &self.params, input)?;
        let targets = vec![target; self.spec.output_size()];
        let loss = squared_error(&y, &targets);
        let mut grads = backward(&self.spec, &self.params, &cache, &targets)?;
        if let Some(max) = clip_norm {
            clip_global_norm(&mut grads, max);
        }
        self.params.sgd_update(&grads, learning_rate)?;
        Ok((y[0], loss))
    }
}

#[cfg(test)]
mod tests;
