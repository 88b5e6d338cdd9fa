//! Behavioral memristive crossbars.
//!
//! Each signed weight becomes a differential conductance pair `(g⁺, g⁻)`.
//! A read sums `(g⁺ − g⁻)·x` per output line, with optional multiplicative
//! read noise per device and a static gain error per output line. Outputs are
//! reported in millivolts: an ideal dot product of 1 reads as
//! `output_scale_mv`.
//!
//! Activations between crossbars are evaluated exactly; amplifier
//! saturation, drift and IR drop are not modeled.

use std::fmt::Write as _;

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, TimeSeriesRecord};
use crate::lstm::{Gate, LstmConfig, LstmNetwork};
use crate::model::TrainedModel;
use crate::nn::{sigmoid, DenseNetwork, NetworkSpec};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

/// Programmable conductance states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LevelsRepr", into = "LevelsRepr")]
pub enum Levels {
    Continuous,
    /// Uniformly spaced states from `g_min` to `g_max` inclusive (at least 2).
    Discrete(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LevelsRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<LevelsRepr> for Levels {
    type Error = String;

    fn try_from(r: LevelsRepr) -> std::result::Result<Self, String> {
        match r {
            LevelsRepr::Count(n) if n >= 2 => Ok(Levels::Discrete(n)),
            LevelsRepr::Count(n) => Err(format!("levels must be at least 2, got {n}")),
            LevelsRepr::Name(s) if s == "continuous" => Ok(Levels::Continuous),
            LevelsRepr::Name(s) => Err(format!("levels must be an integer or \"continuous\", got {s:?}")),
        }
    }
}

impl From<Levels> for LevelsRepr {
    fn from(l: Levels) -> Self {
        match l {
            Levels::Continuous => LevelsRepr::Name("continuous".into()),
            Levels::Discrete(n) => LevelsRepr::Count(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceModel {
    /// Siemens.
    pub g_min: f64,
    /// Siemens.
    pub g_max: f64,
    pub levels: Levels,
    /// Relative standard deviation of each device's conductance on every read.
    pub read_noise_sigma: f64,
    /// Relative standard deviation of each output line's static gain.
    pub gain_error_sigma: f64,
    /// Millivolts per unit of ideal output.
    pub output_scale_mv: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        Self {
            g_min: 1e-6,
            g_max: 100e-6,
            levels: Levels::Continuous,
            read_noise_sigma: 0.01,
            gain_error_sigma: 0.01,
            output_scale_mv: 500.0,
        }
    }
}

impl DeviceModel {
    /// Continuous levels, no noise, unit gains.
    pub fn ideal() -> Self {
        Self {
            read_noise_sigma: 0.0,
            gain_error_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_min > 0.0 && self.g_min < self.g_max && self.g_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < g_min < g_max, got g_min={} g_max={}",
                self.g_min, self.g_max
            )));
        }
        if !(self.read_noise_sigma >= 0.0 && self.gain_error_sigma >= 0.0) {
            return Err(Error::Config("noise and gain sigmas must be non-negative".into()));
        }
        if !(self.output_scale_mv > 0.0 && self.output_scale_mv.is_finite()) {
            return Err(Error::Config("output_scale_mv must be positive".into()));
        }
        if let Levels::Discrete(n) = self.levels {
            if n < 2 {
                return Err(Error::Config(format!("levels must be at least 2, got {n}")));
            }
        }
        Ok(())
    }

    fn quantize(&self, g: f64) -> f64 {
        let g = g.clamp(self.g_min, self.g_max);
        match self.levels {
            Levels::Continuous => g,
            Levels::Discrete(n) => {
                let step = (self.g_max - self.g_min) / (n - 1) as f64;
                let k = ((g - self.g_min) / step).round() as usize;
                if k + 1 >= n {
                    self.g_max
                } else {
                    self.g_min + k as f64 * step
                }
            }
        }
    }
}

/// One programmed array; row `j` drives output line `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarProgram {
    pub g_plus: Array2<f64>,
    pub g_minus: Array2<f64>,
    pub w_max: f64,
    pub output_scale_mv: f64,
    /// Static multiplicative gain of each output line.
    pub gains: Vec<f64>,
    g_min: f64,
    g_max: f64,
}

/// Maps `w` to a differential pair scaled by `w_max = max|W|`, then quantizes.
pub fn program_weights(w: &Array2<f64>, device: &DeviceModel) -> Result<CrossbarProgram> {
    device.validate()?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("cannot program non-finite weights".into()));
    }
    let w_max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if w_max == 0.0 {
        return Err(Error::Config("cannot program an all-zero weight matrix".into()));
    }
    let span = device.g_max - device.g_min;
    let g_of = |m: f64| {
        let t = m / w_max;
        device.quantize(if t >= 1.0 { device.g_max } else { device.g_min + span * t })
    };
    Ok(CrossbarProgram {
        g_plus: w.mapv(|v| if v > 0.0 { g_of(v) } else { device.quantize(device.g_min) }),
        g_minus: w.mapv(|v| if v < 0.0 { g_of(-v) } else { device.quantize(device.g_min) }),
        w_max,
        output_scale_mv: device.output_scale_mv,
        gains: vec![1.0; w.nrows()],
        g_min: device.g_min,
        g_max: device.g_max,
    })
}

impl CrossbarProgram {
    pub fn rows(&self) -> usize {
        self.g_plus.nrows()
    }

    pub fn cols(&self) -> usize {
        self.g_plus.ncols()
    }

    /// Draws `1 + σ·n` gains for every output line.
    pub fn with_gain_errors(mut self, sigma: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        for g in &mut self.gains {
            let n: f64 = rng.sample(StandardNormal);
            *g = 1.0 + sigma * n;
        }
        self
    }

    /// Weights recovered from the conductances.
    pub fn effective_weights(&self) -> Array2<f64> {
        (&self.g_plus - &self.g_minus) * (self.w_max / (self.g_max - self.g_min))
    }
}

/// One read of the array in millivolts.
///
/// Noise is drawn from `rng` in row-major device order, `g⁺` before `g⁻`, and
/// only when `device.read_noise_sigma > 0`.
pub fn analog_matvec_with(program: &CrossbarProgram, device: &DeviceModel, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if x.len() != program.cols() {
        return Err(Error::shape("crossbar input", program.cols(), x.len()));
    }
    let sigma = device.read_noise_sigma;
    let to_mv = program.w_max / (program.g_max - program.g_min) * program.output_scale_mv;
    let mut out = Vec::with_capacity(program.rows());
    for j in 0..program.rows() {
        let gp = program.g_plus.row(j);
        let gm = program.g_minus.row(j);
        let mut acc = 0.0;
        for i in 0..x.len() {
            let d = if sigma > 0.0 {
                let n1: f64 = rng.sample(StandardNormal);
                let n2: f64 = rng.sample(StandardNormal);
                gp[i] * (1.0 + sigma * n1) - gm[i] * (1.0 + sigma * n2)
            } else {
                gp[i] - gm[i]
            };
            acc += d * x[i];
        }
        out.push(program.gains[j] * acc * to_mv);
    }
    Ok(out)
}

/// Single read with its own noise stream.
pub fn analog_matvec(program: &CrossbarProgram, device: &DeviceModel, x: &[f64], noise_seed: u64) -> Result<Vec<f64>> {
    analog_matvec_with(program, device, x, &mut rng_from_seed(noise_seed))
}

fn with_bias_column(w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[w.view(), b.view().insert_axis(Axis(1))]).expect("bias length matches rows")
}

fn program_chip(w: &Array2<f64>, device: &DeviceModel, seed: u64, index: u64) -> Result<CrossbarProgram> {
    Ok(program_weights(w, device)?.with_gain_errors(device.gain_error_sigma, derive_seed(seed, &[stream::GAIN, index])))
}

/// A trained network with every weight matrix on its own crossbar.
///
/// Biases are an extra column driven by a constant input of 1. Each LSTM gate
/// is one array over `[x; h_prev; 1]`.
#[derive(Debug, Clone)]
pub enum AnalogModel {
    Dense {
        spec: NetworkSpec,
        layers: Vec<CrossbarProgram>,
    },
    Lstm {
        config: LstmConfig,
        /// In [`Gate::ALL`] order.
        gates: Vec<CrossbarProgram>,
        head: CrossbarProgram,
    },
}

impl AnalogModel {
    /// Programs every matrix; gain errors come from `seed`.
    pub fn program(model: &TrainedModel, device: &DeviceModel, seed: u64) -> Result<Self> {
        match model {
            TrainedModel::Dense(net) => Self::from_dense(net, device, seed),
            TrainedModel::Lstm(net) => Self::from_lstm(net, device, seed),
            TrainedModel::Htm(_) => Err(Error::Unsupported("no analog mapping for the spatial pooler".into())),
        }
    }

    pub fn from_dense(net: &DenseNetwork, device: &DeviceModel, seed: u64) -> Result<Self> {
        let layers = net
            .params
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let w = if net.spec.use_bias {
                    with_bias_column(&l.weights, &l.bias)
                } else {
                    l.weights.clone()
                };
                program_chip(&w, device, seed, k as u64)
            })
            .collect::<Result<_>>()?;
        Ok(AnalogModel::Dense {
            spec: net.spec.clone(),
            layers,
        })
    }

    pub fn from_lstm(net: &LstmNetwork, device: &DeviceModel, seed: u64) -> Result<Self> {
        let cell = &net.params.cell;
        let gates = Gate::ALL
            .iter()
            .enumerate()
            .map(|(k, &g)| {
                let p = cell.gate(g);
                let wu = concatenate(Axis(1), &[p.w.view(), p.u.view()]).expect("gate rows agree");
                program_chip(&with_bias_column(&wu, &p.b), device, seed, k as u64)
            })
            .collect::<Result<_>>()?;
        let mut head = net.params.head_w.to_vec();
        head.push(net.params.head_b);
        let head = Array2::from_shape_vec((1, head.len()), head).expect("row vector");
        Ok(AnalogModel::Lstm {
            config: net.config,
            gates,
            head: program_chip(&head, device, seed, Gate::ALL.len() as u64)?,
        })
    }

    /// Network output in millivolts.
    pub fn forward(&self, device: &DeviceModel, x: &[f64], noise_seed: u64) -> Result<f64> {
        let mut rng = rng_from_seed(noise_seed);
        match self {
            AnalogModel::Dense { spec, layers } => {
                if x.len() != spec.input_size() {
                    return Err(Error::shape("network input", spec.input_size(), x.len()));
                }
                let mut a = x.to_vec();
                for (prog, &act) in layers.iter().zip(&spec.activations) {
                    if spec.use_bias {
                        a.push(1.0);
                    }
                    let mv = analog_matvec_with(prog, device, &a, &mut rng)?;
                    a = mv.iter().map(|v| act.apply(v / prog.output_scale_mv)).collect();
                }
                Ok(a[0] * device.output_scale_mv)
            }
            AnalogModel::Lstm { .. } => {
                let (y, _) = self.lstm_unroll(device, x, &mut rng)?;
                Ok(y)
            }
        }
    }

    /// Hidden state of every step as read through the crossbars
    /// (`time_steps × hidden_dim`, unitless), plus the output in millivolts.
    fn lstm_unroll(&self, device: &DeviceModel, series: &[f64], rng: &mut ChaCha8Rng) -> Result<(f64, Array2<f64>)> {
        let AnalogModel::Lstm { config, gates, head } = self else {
            return Err(Error::Unsupported("unit traces need an LSTM".into()));
        };
        if series.len() != config.series_length() {
            return Err(Error::shape("LSTM series length", config.series_length(), series.len()));
        }
        let hd = config.hidden_dim;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut trace = Array2::zeros((config.time_steps, hd));
        for (t, x) in series.chunks(config.input_dim).enumerate() {
            let mut input = Vec::with_capacity(x.len() + hd + 1);
            input.extend_from_slice(x);
            input.extend_from_slice(&h);
            input.push(1.0);
            let mut z = Vec::with_capacity(4);
            for prog in gates {
                let mv = analog_matvec_with(prog, device, &input, rng)?;
                z.push(mv.into_iter().map(|v| v / prog.output_scale_mv).collect::<Vec<_>>());
            }
            for u in 0..hd {
                let i = sigmoid(z[0][u]);
                let f = sigmoid(z[1][u]);
                let o = sigmoid(z[2][u]);
                let g = z[3][u].tanh();
                c[u] = f * c[u] + i * g;
                h[u] = o * c[u].tanh();
                trace[[t, u]] = h[u];
            }
        }
        let mut read = h;
        read.push(1.0);
        let y = analog_matvec_with(head, device, &read, rng)?[0];
        Ok((y, trace))
    }

    /// Per-step hidden states read through the crossbars, in millivolts.
    pub fn unit_trace_mv(&self, device: &DeviceModel, series: &[f64], noise_seed: u64) -> Result<Array2<f64>> {
        let (_, trace) = self.lstm_unroll(device, series, &mut rng_from_seed(noise_seed))?;
        Ok(trace * device.output_scale_mv)
    }
}

/// Noise seed of the `index`-th record of a run, independent of evaluation order.
pub fn record_noise_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[stream::READ, index as u64])
}

/// Programs the model once and reads every record in millivolts.
pub fn analog_predictions(model: &TrainedModel, device: &DeviceModel, records: &[TimeSeriesRecord], seed: u64) -> Result<Vec<f64>> {
    let analog = AnalogModel::program(model, device, seed)?;
    records
        .par_iter()
        .enumerate()
        .map(|(k, r)| analog.forward(device, &r.values, record_noise_seed(seed, k)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub index: usize,
    pub analog_mv: f64,
    pub software: f64,
    pub sign_agree: bool,
    /// True class of the record, ±1.
    pub class: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<AgreementRow>,
    /// `None` for an empty report.
    pub agreement: Option<f64>,
}

/// Pairs analog and software outputs; signs are compared with the classifier's
/// threshold (0 counts as normal).
pub fn agreement_report(indices: &[usize], analog_mv: &[f64], software: &[f64], labels: &[Label]) -> Result<AgreementReport> {
    let n = indices.len();
    for len in [analog_mv.len(), software.len(), labels.len()] {
        if len != n {
            return Err(Error::shape("agreement report columns", n, len));
        }
    }
    let rows: Vec<AgreementRow> = (0..n)
        .map(|k| AgreementRow {
            index: indices[k],
            analog_mv: analog_mv[k],
            software: software[k],
            sign_agree: Label::from_output(analog_mv[k]) == Label::from_output(software[k]),
            class: labels[k].as_i8(),
        })
        .collect();
    let agreement = (n > 0).then(|| rows.iter().filter(|r| r.sign_agree).count() as f64 / n as f64);
    Ok(AgreementReport { rows, agreement })
}

impl AgreementReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,analog_mv,software,sign_agree,class\n");
        for r in &self.rows {
            writeln!(out, "{},{:?},{:?},{},{}", r.index, r.analog_mv, r.software, r.sign_agree, r.class).unwrap();
        }
        out
    }
}

/// Long-format `t,unit,analog_mv,software` rows, `t` and `unit` 1-based.
pub fn trace_csv(analog_mv: &Array2<f64>, software: &Array2<f64>) -> Result<String> {
    if analog_mv.dim() != software.dim() {
        return Err(Error::shape("trace steps", software.nrows(), analog_mv.nrows()));
    }
    let mut out = String::from("t,unit,analog_mv,software\n");
    for ((t, u), a) in analog_mv.indexed_iter() {
        writeln!(out, "{},{},{:?},{:?}", t + 1, u + 1, a, software[[t, u]]).unwrap();
    }
    Ok(out)
}

/// Sign agreement against software for each read-noise level, as the median over
/// `seeds` independently programmed chips.
pub fn noise_sweep(
    model: &TrainedModel,
    device: &DeviceModel,
    records: &[TimeSeriesRecord],
    sigmas: &[f64],
    seeds: &[u64],
) -> Result<Vec<(f64, f64)>> {
    if seeds.is_empty() || records.is_empty() {
        return Err(Error::Config("noise sweep needs at least one seed and one record".into()));
    }
    let software = crate::model::predictions(model, records)?;
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    let indices: Vec<usize> = (1..=records.len()).collect();
    sigmas
        .iter()
        .map(|&sigma| {
            let dev = DeviceModel {
                read_noise_sigma: sigma,
                ..device.clone()
            };
            let mut scores = seeds
                .iter()
                .map(|&s| {
                    let analog = analog_predictions(model, &dev, records, s)?;
                    Ok(agreement_report(&indices, &analog, &software, &labels)?.agreement.unwrap())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((sigma, median(&mut scores)))
        })
        .collect()
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
