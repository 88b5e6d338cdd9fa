//! Neuromorphic classifiers for semiconductor wafer process traces.
//!
//! The crate covers the whole inspection pipeline:
//!
//! - [`dataset`]: UCR-format loading, validation, class balance and input scaling.
//! - [`nn`]: dense tanh networks (perceptron, 3-layer ANN, 5-layer DNN) trained with online SGD.
//! - [`lstm`]: an LSTM cell with backpropagation through time, in the sequential
//!   (one sample per step) and windowed (whole trace in one step) topologies.
//! - [`htm`]: a spatial pooler with bucket encoding and an SDR classifier.
//! - [`crossbar`]: differential-pair conductance mapping and noisy analog inference.
//! - [`hwcost`]: primitive inventories and a linear area/power model.
//! - [`checkpoint`]: the versioned text container for trained parameters.

pub mod checkpoint;
pub mod crossbar;
pub mod dataset;
mod error;
pub mod htm;
pub mod hwcost;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use metrics::{Confusion, Metrics};
pub use model::{Classifier, OnlineModel, TrainedModel};
