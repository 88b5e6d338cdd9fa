//! LSTM classifier with a linear read-out and backpropagation through time.
//!
//! Two topologies are supported:
//!
//! - sequential: one sample per step, e.g. 4 hidden units over 152 steps;
//! - windowed: the whole trace as one input vector in a single step, e.g. 1
//!   hidden unit over 152 inputs. With zero initial state this is a gated
//!   feed-forward unit over the full feature vector.
//!
//! Gates follow the conventional equations
//!
//! ```text
//! i = σ(Wᵢx + Uᵢh + bᵢ)   f = σ(W_f x + U_f h + b_f)   o = σ(Wₒx + Uₒh + bₒ)
//! g = tanh(W_c x + U_c h + b_c)
//! c' = f⊙c + i⊙g          h' = o⊙tanh(c')
//! ```
//!
//! and the prediction is `y = w·h_T + b` with no squashing.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView1, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesRecord;
use crate::model::{Classifier, OnlineModel};
use crate::nn::{sigmoid, train_online, TrainConfig, TrainOutcome};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LstmMode {
    Sequential,
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub time_steps: usize,
    pub mode: LstmMode,
}

impl LstmConfig {
    /// One sample per step.
    pub fn sequential(series_length: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim: 1,
            hidden_dim,
            time_steps: series_length,
            mode: LstmMode::Sequential,
        }
    }

    /// Every sample is a feature of a single step.
    pub fn windowed(series_length: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim: series_length,
            hidden_dim,
            time_steps: 1,
            mode: LstmMode::Windowed,
        }
    }

    pub fn series_length(&self) -> usize {
        self.input_dim * self.time_steps
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.time_steps == 0 {
            return Err(Error::Config("LSTM dimensions must be positive".into()));
        }
        if self.mode == LstmMode::Windowed && self.time_steps != 1 {
            return Err(Error::Config("windowed LSTM runs exactly one time step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

/// Weights of one gate: input `w` (hidden × input), recurrent `u` (hidden × hidden), bias `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl GateParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros((hidden, input)),
            u: Array2::zeros((hidden, hidden)),
            b: Array1::zeros(hidden),
        }
    }

    fn pre_activation(&self, x: ArrayView1<f64>, h: ArrayView1<f64>) -> Array1<f64> {
        let mut a = self.w.dot(&x);
        a += &self.u.dot(&h);
        a += &self.b;
        a
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(self.u.iter()).chain(self.b.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.u.iter_mut()).chain(self.b.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input: GateParams,
    pub forget: GateParams,
    pub output: GateParams,
    pub candidate: GateParams,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input: GateParams::zeros(input_dim, hidden_dim),
            forget: GateParams::zeros(input_dim, hidden_dim),
            output: GateParams::zeros(input_dim, hidden_dim),
            candidate: GateParams::zeros(input_dim, hidden_dim),
        }
    }

    pub fn gate(&self, g: Gate) -> &GateParams {
        match g {
            Gate::Input => &self.input,
            Gate::Forget => &self.forget,
            Gate::Output => &self.output,
            Gate::Candidate => &self.candidate,
        }
    }

    pub fn gate_mut(&mut self, g: Gate) -> &mut GateParams {
        match g {
            Gate::Input => &mut self.input,
            Gate::Forget => &mut self.forget,
            Gate::Output => &mut self.output,
            Gate::Candidate => &mut self.candidate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input.w.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input.w.nrows()
    }
}

/// Cell weights plus the linear read-out `y = head_w·h + head_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub cell: LstmCellParams,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

pub type LstmGrads = LstmParams;

impl LstmParams {
    pub fn zeros(config: &LstmConfig) -> Self {
        Self {
            cell: LstmCellParams::zeros(config.input_dim, config.hidden_dim),
            head_w: Array1::zeros(config.hidden_dim),
            head_b: 0.0,
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        Gate::ALL
            .iter()
            .flat_map(move |&g| self.cell.gate(g).values())
            .chain(self.head_w.iter())
            .chain(std::iter::once(&self.head_b))
    }

    pub fn values_mut(&mut self) -> Vec<&mut f64> {
        let LstmCellParams {
            input,
            forget,
            output,
            candidate,
        } = &mut self.cell;
        input
            .values_mut()
            .chain(forget.values_mut())
            .chain(output.values_mut())
            .chain(candidate.values_mut())
            .chain(self.head_w.iter_mut())
            .chain(std::iter::once(&mut self.head_b))
            .collect()
    }

    pub fn check_shape(&self, config: &LstmConfig) -> Result<()> {
        for g in Gate::ALL {
            let p = self.cell.gate(g);
            if p.w.dim() != (config.hidden_dim, config.input_dim) {
                return Err(Error::shape("gate input weights", config.hidden_dim * config.input_dim, p.w.len()));
            }
            if p.u.dim() != (config.hidden_dim, config.hidden_dim) {
                return Err(Error::shape("gate recurrent weights", config.hidden_dim.pow(2), p.u.len()));
            }
            if p.b.len() != config.hidden_dim {
                return Err(Error::shape("gate bias", config.hidden_dim, p.b.len()));
            }
        }
        if self.head_w.len() != config.hidden_dim {
            return Err(Error::shape("read-out weights", config.hidden_dim, self.head_w.len()));
        }
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn sgd_update(&mut self, grads: &LstmGrads, learning_rate: f64) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient("LSTM"));
        }
        for (p, g) in self.values_mut().into_iter().zip(grads.values()) {
            *p -= learning_rate * g;
        }
        Ok(())
    }
}

/// Uniform ±1/√hidden for all weights; gate biases zero except the forget gate.
pub fn init_lstm(config: &LstmConfig, seed: u64, forget_bias: f64) -> LstmParams {
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::INIT]));
    let limit = 1.0 / (config.hidden_dim as f64).sqrt();
    let mut p = LstmParams::zeros(config);
    for g in Gate::ALL {
        let gp = p.cell.gate_mut(g);
        for v in gp.w.iter_mut().chain(gp.u.iter_mut()) {
            *v = rng.random_range(-limit..=limit);
        }
    }
    p.cell.forget.b.fill(forget_bias);
    for v in p.head_w.iter_mut() {
        *v = rng.random_range(-limit..=limit);
    }
    p
}

/// Everything one step computed, kept for BPTT.
#[derive(Debug, Clone)]
pub struct GateCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub o: Array1<f64>,
    pub g: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

/// One cell step from `(h_prev, c_prev)` on input `x`.
pub fn cell_forward(cell: &LstmCellParams, x: &[f64], h_prev: &Array1<f64>, c_prev: &Array1<f64>) -> Result<GateCache> {
    let hidden = cell.hidden_dim();
    if x.len() != cell.input_dim() {
        return Err(Error::shape("LSTM step input", cell.input_dim(), x.len()));
    }
    if h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::shape("LSTM state", hidden, h_prev.len().max(c_prev.len())));
    }
    let xv = ArrayView1::from(x);
    let i = cell.input.pre_activation(xv, h_prev.view()).mapv_into(sigmoid);
    let f = cell.forget.pre_activation(xv, h_prev.view()).mapv_into(sigmoid);
    let o = cell.output.pre_activation(xv, h_prev.view()).mapv_into(sigmoid);
    let g = cell.candidate.pre_activation(xv, h_prev.view()).mapv_into(f64::tanh);
    let c = &f * c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    Ok(GateCache {
        x: xv.to_owned(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    })
}

/// Per-step caches of one unrolled sequence.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub steps: Vec<GateCache>,
}

impl LstmState {
    pub fn final_h(&self) -> &Array1<f64> {
        &self.steps.last().expect("at least one step").h
    }
}

/// Runs the cell over the series from zero state, `input_dim` samples per step.
pub fn unroll_forward(cell: &LstmCellParams, config: &LstmConfig, series: &[f64]) -> Result<(Array1<f64>, LstmState)> {
    if series.len() != config.series_length() {
        return Err(Error::shape("LSTM series length", config.series_length(), series.len()));
    }
    let mut h = Array1::zeros(config.hidden_dim);
    let mut c = Array1::zeros(config.hidden_dim);
    let mut steps = Vec::with_capacity(config.time_steps);
    for x in series.chunks(config.input_dim) {
        let step = cell_forward(cell, x, &h, &c)?;
        h = step.h.clone();
        c = step.c.clone();
        steps.push(step);
    }
    Ok((h, LstmState { steps }))
}

pub fn output_layer(h: &Array1<f64>, head_w: &Array1<f64>, head_b: f64) -> Result<f64> {
    if h.len() != head_w.len() {
        return Err(Error::shape("read-out weights", h.len(), head_w.len()));
    }
    Ok(head_w.dot(h) + head_b)
}

/// Gradients of `½(y − target)²` summed over all steps, optionally clipped to
/// a global L2 norm afterwards.
pub fn bptt(
    params: &LstmParams,
    config: &LstmConfig,
    state: &LstmState,
    target: f64,
    clip_norm: Option<f64>,
) -> Result<LstmGrads> {
    if state.steps.len() != config.time_steps {
        return Err(Error::shape("LSTM cache length", config.time_steps, state.steps.len()));
    }
    params.check_shape(config)?;
    let h_last = state.final_h();
    let y = output_layer(h_last, &params.head_w, params.head_b)?;
    let dy = y - target;

    let mut grads = LstmParams::zeros(config);
    grads.head_w = h_last * dy;
    grads.head_b = dy;

    let mut dh = &params.head_w * dy;
    let mut dc: Array1<f64> = Array1::zeros(config.hidden_dim);
    for step in state.steps.iter().rev() {
        let d_o = &dh * &step.tanh_c;
        Zip::from(&mut dc)
            .and(&dh)
            .and(&step.o)
            .and(&step.tanh_c)
            .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));
        let d_i = &dc * &step.g;
        let d_g = &dc * &step.i;
        let d_f = &dc * &step.c_prev;

        let da_i = Zip::from(&d_i).and(&step.i).map_collect(|d, &s| d * s * (1.0 - s));
        let da_f = Zip::from(&d_f).and(&step.f).map_collect(|d, &s| d * s * (1.0 - s));
        let da_o = Zip::from(&d_o).and(&step.o).map_collect(|d, &s| d * s * (1.0 - s));
        let da_g = Zip::from(&d_g).and(&step.g).map_collect(|d, &t| d * (1.0 - t * t));

        let mut dh_prev = Array1::zeros(config.hidden_dim);
        for (gate, da) in [
            (Gate::Input, &da_i),
            (Gate::Forget, &da_f),
            (Gate::Output, &da_o),
            (Gate::Candidate, &da_g),
        ] {
            let gp = grads.cell.gate_mut(gate);
            accumulate_outer(&mut gp.w, da, &step.x);
            accumulate_outer(&mut gp.u, da, &step.h_prev);
            gp.b += da;
            dh_prev += &params.cell.gate(gate).u.t().dot(da);
        }
        dc = &dc * &step.f;
        dh = dh_prev;
    }

    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient("LSTM"));
    }
    if let Some(max) = clip_norm {
        let norm = grads.squared_norm().sqrt();
        if norm > max {
            let k = max / norm;
            for v in grads.values_mut() {
                *v *= k;
            }
        }
    }
    Ok(grads)
}

fn accumulate_outer(m: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    Zip::from(m.rows_mut())
        .and(col)
        .for_each(|mut r, &d| r.scaled_add(d, row));
}

/// Configuration and parameters of a trained LSTM classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmNetwork {
    pub config: LstmConfig,
    pub params: LstmParams,
}

impl LstmNetwork {
    pub fn new(config: LstmConfig, params: LstmParams) -> Result<Self> {
        config.validate()?;
        params.check_shape(&config)?;
        Ok(Self { config, params })
    }

    pub fn init(config: LstmConfig, seed: u64, forget_bias: f64) -> Self {
        let params = init_lstm(&config, seed, forget_bias);
        Self { config, params }
    }

    pub fn forward(&self, series: &[f64]) -> Result<(f64, LstmState)> {
        let (h, state) = unroll_forward(&self.params.cell, &self.config, series)?;
        Ok((output_layer(&h, &self.params.head_w, self.params.head_b)?, state))
    }
}

impl Classifier for LstmNetwork {
    fn predict(&self, values: &[f64]) -> Result<f64> {
        Ok(self.forward(values)?.0)
    }
}

impl OnlineModel for LstmNetwork {
    fn train_step(&mut self, input: &[f64], target: f64, learning_rate: f64, clip_norm: Option<f64>) -> Result<(f64, f64)> {
        let (y, state) = self.forward(input)?;
        let grads = bptt(&self.params, &self.config, &state, target, clip_norm)?;
        self.params.sgd_update(&grads, learning_rate)?;
        Ok((y, 0.5 * (y - target).powi(2)))
    }
}

/// Initialization knobs for [`train_lstm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmInit {
    pub forget_bias: f64,
}

impl Default for LstmInit {
    fn default() -> Self {
        Self { forget_bias: 1.0 }
    }
}

/// Online SGD over the training records; inputs are expected already scaled.
pub fn train_lstm(
    config: &LstmConfig,
    records: &[TimeSeriesRecord],
    train_config: &TrainConfig,
    init: LstmInit,
    snapshot_epochs: &[usize],
) -> Result<TrainOutcome<LstmNetwork>> {
    config.validate()?;
    let model = LstmNetwork::init(*config, train_config.seed, init.forget_bias);
    train_online(model, records, train_config, snapshot_epochs)
}

/// Hidden state of every unit at every step (`time_steps × hidden_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTrace {
    pub values: Array2<f64>,
}

impl UnitTrace {
    /// `t,h1,...,hH` with 1-based `t`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for u in 1..=self.values.ncols() {
            write!(out, ",h{u}").unwrap();
        }
        out.push('\n');
        for (t, row) in self.values.rows().into_iter().enumerate() {
            write!(out, "{}", t + 1).unwrap();
            for v in row {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn export_unit_traces(params: &LstmParams, config: &LstmConfig, series: &[f64]) -> Result<UnitTrace> {
    let (_, state) = unroll_forward(&params.cell, config, series)?;
    let mut values = Array2::zeros((state.steps.len(), config.hidden_dim));
    for (t, step) in state.steps.iter().enumerate() {
        values.slice_mut(s![t, ..]).assign(&step.h);
    }
    Ok(UnitTrace { values })
}
