//! Regenerates `configs/calibration.json`: scales one base cost table per
//! architecture so that its estimate equals the target totals below.
//!
//! `cargo run -p waferbench --example calibrate_costs > configs/calibration.json`

use std::collections::BTreeMap;
use waferbench::commands::blocks_for;
use waferbench::config::{Architecture, CalibrationFile, ExperimentConfig};
use waferbench_core::hwcost::{calibrate, inventory, CostEstimate, CostTable};

fn main() {
    let cfg: ExperimentConfig = serde_json::from_str(r#"{"architecture":"ann","seed":0}"#).unwrap();
    let base = CostTable {
        memristor_area_um2: 1.0,
        neuron_area_um2: 50.0,
        gate_block_area_um2: 200.0,
        memristor_power_mw: 0.01,
        neuron_power_mw: 0.5,
        gate_block_power_mw: 2.0,
    };
    let targets = [
        (Architecture::LstmSequential, 257503.20, 255.8),
        (Architecture::LstmWindowed, 115967.4, 312.4),
        (Architecture::Perceptron, 2994.00, 80.0),
        (Architecture::Ann, 4839.90, 1072.4),
        (Architecture::Dnn, 12100.0, 2681.1),
        (Architecture::Htm, 96000.0, 1756.0),
    ];
    let mut tables = BTreeMap::new();
    for (a, area, power) in targets {
        let inv = inventory(&blocks_for(&cfg, a, 152));
        tables.insert(a, calibrate(&base, &inv, CostEstimate { area_um2: area, power_mw: power }).unwrap());
    }
    let f = CalibrationFile { basis: "calibrated per architecture (fitted to target totals, not a circuit prediction)".into(), tables };
    println!("{}", serde_json::to_string_pretty(&f).unwrap());
}
