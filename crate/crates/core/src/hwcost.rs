//! Area and power from primitive counts.
//!
//! Every architecture is broken into memristors (two per signed weight or
//! bias), neuron circuits (one per dense output) and LSTM gate blocks (one per
//! gate per hidden unit). The estimate is a dot product of those counts with a
//! [`CostTable`].

use serde::{Deserialize, Serialize};

use crate::htm::SpatialPoolerConfig;
use crate::lstm::LstmConfig;
use crate::nn::NetworkSpec;
use crate::{Error, Result};

/// Per-primitive constants: µm² for area, mW for power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTable {
    pub memristor_area_um2: f64,
    pub neuron_area_um2: f64,
    pub gate_block_area_um2: f64,
    pub memristor_power_mw: f64,
    pub neuron_power_mw: f64,
    pub gate_block_power_mw: f64,
}

impl CostTable {
    fn values(&self) -> [f64; 6] {
        [
            self.memristor_area_um2,
            self.neuron_area_um2,
            self.gate_block_area_um2,
            self.memristor_power_mw,
            self.neuron_power_mw,
            self.gate_block_power_mw,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values().iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("cost constants must be finite and non-negative".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Dense { fan_in: usize, fan_out: usize, bias: bool },
    LstmCell { input: usize, hidden: usize },
    SpatialPooler { columns: usize, synapses: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub weight_count: usize,
    pub bias_count: usize,
    pub memristor_count: usize,
    pub neuron_count: usize,
    pub gate_block_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub area_um2: f64,
    pub power_mw: f64,
}

impl CostEstimate {
    /// Area to 0.01 µm², power to 0.1 mW.
    pub fn display_values(&self) -> (String, String) {
        (format!("{:.2}", self.area_um2), format!("{:.1}", self.power_mw))
    }
}

pub fn inventory(blocks: &[Block]) -> Inventory {
    let mut inv = Inventory::default();
    for b in blocks {
        match *b {
            Block::Dense { fan_in, fan_out, bias } => {
                inv.weight_count += fan_in * fan_out;
                if bias {
                    inv.bias_count += fan_out;
                }
                inv.neuron_count += fan_out;
            }
            Block::LstmCell { input, hidden } => {
                inv.weight_count += 4 * hidden * (input + hidden);
                inv.bias_count += 4 * hidden;
                inv.gate_block_count += 4 * hidden;
            }
            Block::SpatialPooler { columns, synapses } => {
                inv.weight_count += synapses;
                inv.neuron_count += columns;
            }
        }
    }
    inv.memristor_count = 2 * (inv.weight_count + inv.bias_count);
    inv
}

pub fn dense_blocks(spec: &NetworkSpec) -> Vec<Block> {
    spec.layer_sizes
        .windows(2)
        .map(|w| Block::Dense {
            fan_in: w[0],
            fan_out: w[1],
            bias: spec.use_bias,
        })
        .collect()
}

/// The cell plus its linear read-out.
pub fn lstm_blocks(config: &LstmConfig) -> Vec<Block> {
    vec![
        Block::LstmCell {
            input: config.input_dim,
            hidden: config.hidden_dim,
        },
        Block::Dense {
            fan_in: config.hidden_dim,
            fan_out: 1,
            bias: true,
        },
    ]
}

/// Pooler with `input_width` encoded bits and a biased perceptron read-out.
pub fn pooler_blocks(config: &SpatialPoolerConfig, input_width: usize) -> Vec<Block> {
    let pool = ((config.potential_fraction * input_width as f64).round() as usize).clamp(1, input_width.max(1));
    vec![
        Block::SpatialPooler {
            columns: config.num_columns,
            synapses: config.num_columns * pool,
        },
        Block::Dense {
            fan_in: config.num_columns,
            fan_out: 1,
            bias: true,
        },
    ]
}

pub fn estimate(inv: &Inventory, table: &CostTable) -> CostEstimate {
    let m = inv.memristor_count as f64;
    let n = inv.neuron_count as f64;
    let g = inv.gate_block_count as f64;
    CostEstimate {
        area_um2: m * table.memristor_area_um2 + n * table.neuron_area_um2 + g * table.gate_block_area_um2,
        power_mw: m * table.memristor_power_mw + n * table.neuron_power_mw + g * table.gate_block_power_mw,
    }
}

/// Scales the area constants and the power constants of `base` by one factor
/// each, so that `inv` costs exactly `target`.
pub fn calibrate(base: &CostTable, inv: &Inventory, target: CostEstimate) -> Result<CostTable> {
    base.validate()?;
    let raw = estimate(inv, base);
    if raw.area_um2 <= 0.0 || raw.power_mw <= 0.0 {
        return Err(Error::Config("cannot calibrate against a zero-cost inventory".into()));
    }
    if !(target.area_um2 >= 0.0 && target.power_mw >= 0.0) {
        return Err(Error::Config("calibration targets must be non-negative".into()));
    }
    let ka = target.area_um2 / raw.area_um2;
    let kp = target.power_mw / raw.power_mw;
    Ok(CostTable {
        memristor_area_um2: base.memristor_area_um2 * ka,
        neuron_area_um2: base.neuron_area_um2 * ka,
        gate_block_area_um2: base.gate_block_area_um2 * ka,
        memristor_power_mw: base.memristor_power_mw * kp,
        neuron_power_mw: base.neuron_power_mw * kp,
        gate_block_power_mw: base.gate_block_power_mw * kp,
    })
}
