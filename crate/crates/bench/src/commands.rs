//! The subcommands. Each one writes into a fresh run directory and returns
//! the lines to print.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use waferbench_core::checkpoint;
use waferbench_core::crossbar::{agreement_report, analog_predictions, record_noise_seed, trace_csv, AgreementReport, AnalogModel, DeviceModel};
use waferbench_core::dataset::synthetic::{wafer_like, SyntheticConfig};
use waferbench_core::dataset::{load_ucr, scale_factor, scale_inputs, write_ucr, Label, LoadOptions, SplitDataset, TimeSeriesRecord};
use waferbench_core::htm::HtmPipeline;
use waferbench_core::hwcost::{dense_blocks, estimate, inventory, lstm_blocks, pooler_blocks, Block, CostEstimate, Inventory};
use waferbench_core::lstm::{export_unit_traces, train_lstm, LstmConfig, LstmInit, LstmMode};
use waferbench_core::model::{evaluate, predictions};
use waferbench_core::nn::{train, EpochStats, NetworkSpec};
use waferbench_core::{Classifier, Metrics, TrainedModel};

use crate::config::{cost_table, Architecture, ExperimentConfig, LoadedConfig};
use crate::error::{BenchError, Result};
use crate::output::{versioned_dir, write_json, write_text};

pub struct Outcome {
    pub dir: PathBuf,
    pub lines: Vec<String>,
}

pub struct Data {
    pub split: SplitDataset,
    pub scale_factor: Option<f64>,
}

/// Loads both splits and applies the architecture's input rescaling.
pub fn load_data(config: &ExperimentConfig, arch: Architecture) -> Result<Data> {
    let opts = LoadOptions {
        delimiter: config.data.delimiter,
        series_length: config.data.series_length,
    };
    let raw = load_ucr(&config.data.train, &config.data.test, &opts).map_err(|e| BenchError::from(e).in_dataset())?;
    match config.scale_max.or(arch.default_scale_max()) {
        None => Ok(Data {
            split: raw,
            scale_factor: None,
        }),
        Some(target) => {
            let f = scale_factor(&raw, target).map_err(|e| BenchError::from(e).in_dataset())?;
            Ok(Data {
                split: scale_inputs(&raw, target)?,
                scale_factor: Some(f),
            })
        }
    }
}

pub struct Trained {
    pub model: TrainedModel,
    pub trace: Vec<EpochStats>,
    pub updates: usize,
}

pub fn lstm_config(config: &ExperimentConfig, arch: Architecture, series_length: usize) -> LstmConfig {
    let hidden = config.lstm.hidden_dim.unwrap_or(arch.default_hidden());
    match arch {
        Architecture::LstmWindowed => LstmConfig::windowed(series_length, hidden),
        _ => LstmConfig::sequential(series_length, hidden),
    }
}

pub fn dense_spec(arch: Architecture, series_length: usize) -> Option<NetworkSpec> {
    match arch {
        Architecture::Perceptron => Some(NetworkSpec::perceptron(series_length)),
        Architecture::Ann => Some(NetworkSpec::ann(series_length)),
        Architecture::Dnn => Some(NetworkSpec::dnn(series_length)),
        _ => None,
    }
}

pub fn train_model(config: &ExperimentConfig, arch: Architecture, records: &[TimeSeriesRecord]) -> Result<Trained> {
    let tc = {
        let mut c = config.clone();
        c.architecture = arch;
        c.train_config()
    };
    let len = records.first().map_or(0, |r| r.values.len());
    if let Some(spec) = dense_spec(arch, len) {
        let out = train(&spec, records, &tc)?;
        return Ok(Trained {
            model: TrainedModel::Dense(out.model),
            trace: out.trace,
            updates: out.updates,
        });
    }
    match arch {
        Architecture::LstmSequential | Architecture::LstmWindowed => {
            let init = LstmInit {
                forget_bias: config.lstm.forget_bias,
            };
            let out = train_lstm(&lstm_config(config, arch, len), records, &tc, init, &[])?;
            Ok(Trained {
                model: TrainedModel::Lstm(out.model),
                trace: out.trace,
                updates: out.updates,
            })
        }
        _ => Ok(Trained {
            model: TrainedModel::Htm(HtmPipeline::fit(records, &config.htm_config(), &tc)?),
            trace: Vec::new(),
            updates: 0,
        }),
    }
}

/// Architecture a checkpoint was trained as, when its shape says so.
pub fn architecture_of(model: &TrainedModel) -> Option<Architecture> {
    match model {
        TrainedModel::Lstm(net) => Some(match net.config.mode {
            LstmMode::Sequential => Architecture::LstmSequential,
            LstmMode::Windowed => Architecture::LstmWindowed,
        }),
        TrainedModel::Htm(_) => Some(Architecture::Htm),
        TrainedModel::Dense(net) => {
            let n = net.spec.input_size();
            [Architecture::Perceptron, Architecture::Ann, Architecture::Dnn]
                .into_iter()
                .find(|&a| dense_spec(a, n).is_some_and(|s| s.layer_sizes == net.spec.layer_sizes))
        }
    }
}

/// Deterministic results of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub architecture: Architecture,
    pub seed: u64,
    pub series_length: usize,
    pub scale_factor: Option<f64>,
    pub updates: usize,
    pub trace: Vec<EpochStats>,
    pub train: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub architecture: Architecture,
    pub inventory: Inventory,
    pub estimate: CostEstimate,
    /// Rounded as displayed in tables.
    pub area_um2: String,
    pub power_mw: String,
    pub basis: String,
}

pub fn blocks_for(config: &ExperimentConfig, arch: Architecture, series_length: usize) -> Vec<Block> {
    match arch {
        Architecture::LstmSequential | Architecture::LstmWindowed => lstm_blocks(&lstm_config(config, arch, series_length)),
        Architecture::Htm => pooler_blocks(&config.htm.pooler, series_length * config.htm.bins),
        _ => dense_blocks(&dense_spec(arch, series_length).expect("dense architecture")),
    }
}

pub fn cost_report(config: &ExperimentConfig, arch: Architecture, series_length: usize) -> Result<Option<CostReport>> {
    let Some((table, basis)) = cost_table(config, arch)? else {
        return Ok(None);
    };
    let inv = inventory(&blocks_for(config, arch, series_length));
    let est = estimate(&inv, &table);
    let (area, power) = est.display_values();
    Ok(Some(CostReport {
        architecture: arch,
        inventory: inv,
        estimate: est,
        area_um2: area,
        power_mw: power,
        basis,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalogSummary {
    pub records: usize,
    /// Fraction of records whose analog and software outputs share a sign.
    pub sign_agreement: Option<f64>,
    pub device: DeviceModel,
    pub chip_seed: u64,
    pub analog_metrics: Option<Metrics>,
    pub software_metrics: Option<Metrics>,
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'static str,
    architecture: Option<Architecture>,
    seed: u64,
    checkpoint: Option<String>,
    metrics: Option<&'a MetricsFile>,
    analog: Option<AnalogSummary>,
    cost: Option<CostReport>,
    table: Option<Vec<Table1Row>>,
    notes: Vec<String>,
    outputs: Vec<&'static str>,
    wall_clock_seconds: f64,
    config_path: Option<String>,
    /// The config file exactly as read.
    config_echo: &'a str,
    /// After command-line overrides and defaults.
    effective_config: &'a ExperimentConfig,
}

impl<'a> RunReport<'a> {
    fn new(command: &'static str, loaded: &'a LoadedConfig) -> Self {
        RunReport {
            command,
            architecture: None,
            seed: loaded.config.seed,
            checkpoint: None,
            metrics: None,
            analog: None,
            cost: None,
            table: None,
            notes: Vec::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            config_path: loaded.source_path.as_ref().map(|p| p.display().to_string()),
            config_echo: &loaded.source_text,
            effective_config: &loaded.config,
        }
    }

    fn finish(mut self, dir: &Path, started: Instant) -> Result<()> {
        self.outputs.push("report.json");
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        write_json(&dir.join("report.json"), &self)
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn trace_csv_text(trace: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,train_accuracy\n");
    for e in trace {
        writeln!(out, "{},{:?},{:?}", e.epoch, e.mean_loss, e.train_accuracy).unwrap();
    }
    out
}

fn metrics_line(label: &str, m: &Metrics) -> String {
    format!(
        "{label}: accuracy {} (balanced {}) on {} records",
        pct(m.accuracy),
        pct(m.balanced_accuracy),
        m.total
    )
}

pub fn train_cmd(loaded: &LoadedConfig) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let arch = cfg.architecture;
    let data = load_data(cfg, arch)?;
    let trained = train_model(cfg, arch, &data.split.train)?;
    let metrics = MetricsFile {
        architecture: arch,
        seed: cfg.seed,
        series_length: data.split.series_length,
        scale_factor: data.scale_factor,
        updates: trained.updates,
        train: evaluate(&trained.model, &data.split.train)?,
        test: evaluate(&trained.model, &data.split.test)?,
        trace: trained.trace,
    };
    let cost = cost_report(cfg, arch, data.split.series_length)?;

    let dir = versioned_dir(&cfg.output_dir)?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    checkpoint::save(&dir.join("model.ckpt"), &trained.model)?;
    write_text(&dir.join("trace.csv"), &trace_csv_text(&metrics.trace))?;
    let mut report = RunReport::new("train", loaded);
    report.architecture = Some(arch);
    report.metrics = Some(&metrics);
    report.cost = cost;
    report.outputs = vec!["metrics.json", "model.ckpt", "trace.csv"];
    report.finish(&dir, started)?;

    Ok(Outcome {
        lines: vec![
            format!("{arch}: {} updates", metrics.updates),
            metrics_line("test", &metrics.test),
        ],
        dir,
    })
}

fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    Ok(checkpoint::load(path)?)
}

pub fn eval_cmd(loaded: &LoadedConfig, ckpt: &Path) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let model = load_checkpoint(ckpt)?;
    let arch = architecture_of(&model).unwrap_or(cfg.architecture);
    let data = load_data(cfg, arch)?;
    let metrics = MetricsFile {
        architecture: arch,
        seed: cfg.seed,
        series_length: data.split.series_length,
        scale_factor: data.scale_factor,
        updates: 0,
        trace: Vec::new(),
        train: evaluate(&model, &data.split.train)?,
        test: evaluate(&model, &data.split.test)?,
    };
    let dir = versioned_dir(&cfg.output_dir)?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    let mut report = RunReport::new("eval", loaded);
    report.architecture = Some(arch);
    report.checkpoint = Some(ckpt.display().to_string());
    report.metrics = Some(&metrics);
    report.outputs = vec!["metrics.json"];
    report.finish(&dir, started)?;
    Ok(Outcome {
        lines: vec![metrics_line("test", &metrics.test)],
        dir,
    })
}

fn labels(records: &[TimeSeriesRecord]) -> Vec<Label> {
    records.iter().map(|r| r.label).collect()
}

pub fn analog_cmd(loaded: &LoadedConfig, ckpt: &Path) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let model = load_checkpoint(ckpt)?;
    let arch = architecture_of(&model).unwrap_or(cfg.architecture);
    let data = load_data(cfg, arch)?;
    let test = &data.split.test;
    let software = predictions(&model, test)?;
    let analog = analog_predictions(&model, &cfg.device, test, cfg.seed)?;
    let indices: Vec<usize> = (1..=test.len()).collect();
    let rep = agreement_report(&indices, &analog, &software, &labels(test))?;

    let dir = versioned_dir(&cfg.output_dir)?;
    write_text(&dir.join("analog.csv"), &rep.to_csv())?;
    let summary = AnalogSummary {
        records: test.len(),
        sign_agreement: rep.agreement,
        device: cfg.device.clone(),
        chip_seed: cfg.seed,
        analog_metrics: Some(Metrics::from_outputs(labels(test), &analog)),
        software_metrics: Some(Metrics::from_outputs(labels(test), &software)),
    };
    let line = format!(
        "sign agreement {} over {} test records; analog accuracy {}",
        rep.agreement.map_or("n/a".into(), pct),
        test.len(),
        pct(summary.analog_metrics.as_ref().unwrap().accuracy)
    );
    let mut report = RunReport::new("analog", loaded);
    report.architecture = Some(arch);
    report.checkpoint = Some(ckpt.display().to_string());
    report.analog = Some(summary);
    report.outputs = vec!["analog.csv"];
    report.finish(&dir, started)?;
    Ok(Outcome { lines: vec![line], dir })
}

pub fn cost_cmd(loaded: &LoadedConfig) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let arch = cfg.architecture;
    let len = cfg.data.series_length.unwrap_or(waferbench_core::dataset::DEFAULT_SERIES_LENGTH);
    let cost = cost_report(cfg, arch, len)?
        .ok_or_else(|| BenchError::Config("no cost table: set cost.calibration or cost.table".into()))?;
    let dir = versioned_dir(&cfg.output_dir)?;
    let line = format!(
        "{arch}: {} memristors, {} neurons, {} gate blocks -> {} um^2, {} mW ({})",
        cost.inventory.memristor_count,
        cost.inventory.neuron_count,
        cost.inventory.gate_block_count,
        cost.area_um2,
        cost.power_mw,
        cost.basis
    );
    let mut report = RunReport::new("cost", loaded);
    report.architecture = Some(arch);
    report.cost = Some(cost);
    report.finish(&dir, started)?;
    Ok(Outcome { lines: vec![line], dir })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub architecture: Architecture,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub area_um2: Option<String>,
    pub power_mw: Option<String>,
    pub cost_basis: Option<String>,
    pub note: &'static str,
}

fn row_note(arch: Architecture) -> &'static str {
    match arch {
        Architecture::Dnn => "undertrained at this epoch budget",
        Architecture::Htm => "report-only",
        _ => "",
    }
}

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut out = String::from("architecture,accuracy_pct,balanced_accuracy_pct,area_um2,power_mw,cost_basis,note\n");
    for r in rows {
        writeln!(
            out,
            "{},{:.2},{:.2},{},{},{},{}",
            r.architecture,
            100.0 * r.accuracy,
            100.0 * r.balanced_accuracy,
            r.area_um2.as_deref().unwrap_or(""),
            r.power_mw.as_deref().unwrap_or(""),
            r.cost_basis.as_deref().unwrap_or(""),
            r.note
        )
        .unwrap();
    }
    out
}

/// Builds the rows in table order from one metrics file per architecture.
pub fn table1_rows(config: &ExperimentConfig, runs: &BTreeMap<Architecture, MetricsFile>) -> Result<Vec<Table1Row>> {
    Architecture::TABLE_ORDER
        .iter()
        .map(|&arch| {
            let m = runs
                .get(&arch)
                .ok_or_else(|| BenchError::Config(format!("missing run for {arch}")))?;
            let cost = cost_report(config, arch, m.series_length)?;
            Ok(Table1Row {
                architecture: arch,
                accuracy: m.test.accuracy,
                balanced_accuracy: m.test.balanced_accuracy,
                area_um2: cost.as_ref().map(|c| c.area_um2.clone()),
                power_mw: cost.as_ref().map(|c| c.power_mw.clone()),
                cost_basis: cost.map(|c| c.basis),
                note: row_note(arch),
            })
        })
        .collect()
}

/// With `runs`, collects existing `metrics.json` files; otherwise trains
/// every architecture from the same config.
pub fn table1_cmd(loaded: &LoadedConfig, runs: &[PathBuf]) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let mut collected = BTreeMap::new();
    let dir;
    if runs.is_empty() {
        let mut trained = Vec::new();
        for arch in Architecture::TABLE_ORDER {
            let data = load_data(cfg, arch)?;
            let t = train_model(cfg, arch, &data.split.train)?;
            let m = MetricsFile {
                architecture: arch,
                seed: cfg.seed,
                series_length: data.split.series_length,
                scale_factor: data.scale_factor,
                updates: t.updates,
                train: evaluate(&t.model, &data.split.train)?,
                test: evaluate(&t.model, &data.split.test)?,
                trace: t.trace,
            };
            trained.push((arch, m.clone(), t.model));
            collected.insert(arch, m);
        }
        dir = versioned_dir(&cfg.output_dir)?;
        for (arch, m, model) in &trained {
            let sub = dir.join(arch.name());
            std::fs::create_dir_all(&sub).map_err(|e| BenchError::io(&sub, e))?;
            write_json(&sub.join("metrics.json"), m)?;
            checkpoint::save(&sub.join("model.ckpt"), model)?;
        }
    } else {
        for run in runs {
            let path = run.join("metrics.json");
            let text = std::fs::read_to_string(&path).map_err(|e| BenchError::io(&path, e))?;
            let m: MetricsFile =
                serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
            collected.insert(m.architecture, m);
        }
        dir = versioned_dir(&cfg.output_dir)?;
    }
    let rows = table1_rows(cfg, &collected)?;
    let csv = table1_csv(&rows);
    write_text(&dir.join("table1.csv"), &csv)?;
    let mut report = RunReport::new("table1", loaded);
    report.table = Some(rows);
    report.notes.push("HTM accuracy is report-only; cost cells come from the configured tables".into());
    report.outputs = vec!["table1.csv"];
    report.finish(&dir, started)?;
    Ok(Outcome {
        lines: csv.lines().map(str::to_string).collect(),
        dir,
    })
}

fn checked_index(index: usize, len: usize) -> Result<usize> {
    if index == 0 || index > len {
        return Err(BenchError::Config(format!(
            "wafer index {index} out of range: the test split has {len} records (1-based)"
        )));
    }
    Ok(index - 1)
}

/// Analog against software for selected 1-based test positions. Each record's
/// read noise depends only on its position, so subsets reproduce the full run.
pub fn agreement_for(
    model: &TrainedModel,
    device: &DeviceModel,
    seed: u64,
    test: &[TimeSeriesRecord],
    indices: &[usize],
) -> Result<AgreementReport> {
    let positions = indices.iter().map(|&i| checked_index(i, test.len())).collect::<Result<Vec<_>>>()?;
    let analog_model = AnalogModel::program(model, device, seed)?;
    let mut analog = Vec::with_capacity(indices.len());
    let mut software = Vec::with_capacity(indices.len());
    for &p in &positions {
        analog.push(analog_model.forward(device, &test[p].values, record_noise_seed(seed, p))?);
        software.push(model.predict(&test[p].values)?);
    }
    let lbl: Vec<Label> = positions.iter().map(|&p| test[p].label).collect();
    Ok(agreement_report(indices, &analog, &software, &lbl)?)
}

pub fn table2_cmd(loaded: &LoadedConfig, ckpt: &Path, indices: Option<Vec<usize>>) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let model = load_checkpoint(ckpt)?;
    let arch = architecture_of(&model).unwrap_or(cfg.architecture);
    let data = load_data(cfg, arch)?;
    let indices = indices.unwrap_or_else(|| cfg.analog.table2_indices.clone());
    let rep = agreement_for(&model, &cfg.device, cfg.seed, &data.split.test, &indices)?;

    let dir = versioned_dir(&cfg.output_dir)?;
    write_text(&dir.join("table2.csv"), &rep.to_csv())?;
    let agree = rep.rows.iter().filter(|r| r.sign_agree).count();
    let line = format!(
        "sign agreement {agree}/{} ({})",
        rep.rows.len(),
        rep.agreement.map_or("n/a".into(), pct)
    );
    let mut lines: Vec<String> = rep.to_csv().lines().map(str::to_string).collect();
    lines.push(line);
    let mut report = RunReport::new("table2", loaded);
    report.architecture = Some(arch);
    report.checkpoint = Some(ckpt.display().to_string());
    report.analog = Some(AnalogSummary {
        records: rep.rows.len(),
        sign_agreement: rep.agreement,
        device: cfg.device.clone(),
        chip_seed: cfg.seed,
        analog_metrics: None,
        software_metrics: None,
    });
    report.outputs = vec!["table2.csv"];
    report.finish(&dir, started)?;
    Ok(Outcome { lines, dir })
}

/// Long-format per-unit trace of one test record, analog and software.
pub fn fig2_trace(model: &TrainedModel, device: &DeviceModel, seed: u64, test: &[TimeSeriesRecord], index: usize) -> Result<String> {
    let p = checked_index(index, test.len())?;
    let TrainedModel::Lstm(net) = model else {
        return Err(BenchError::Config("fig2 needs an LSTM checkpoint".into()));
    };
    let analog = AnalogModel::from_lstm(net, device, seed)?.unit_trace_mv(device, &test[p].values, record_noise_seed(seed, p))?;
    let software = export_unit_traces(&net.params, &net.config, &test[p].values)?.values;
    Ok(trace_csv(&analog, &software)?)
}

pub fn fig2_cmd(loaded: &LoadedConfig, ckpt: &Path, index: Option<usize>) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let model = load_checkpoint(ckpt)?;
    let arch = architecture_of(&model).unwrap_or(cfg.architecture);
    let data = load_data(cfg, arch)?;
    let index = index.unwrap_or(cfg.analog.fig2_index);
    let csv = fig2_trace(&model, &cfg.device, cfg.seed, &data.split.test, index)?;
    let dir = versioned_dir(&cfg.output_dir)?;
    write_text(&dir.join("fig2.csv"), &csv)?;
    let mut report = RunReport::new("fig2", loaded);
    report.architecture = Some(arch);
    report.checkpoint = Some(ckpt.display().to_string());
    report.notes.push(format!("test record {index} (1-based)"));
    report.outputs = vec!["fig2.csv"];
    report.finish(&dir, started)?;
    Ok(Outcome {
        lines: vec![format!("{} trace rows for test record {index}", csv.lines().count() - 1)],
        dir,
    })
}

/// Writes a synthetic stand-in dataset (`Wafer_TRAIN.txt`, `Wafer_TEST.txt`).
/// It only exercises the pipeline; its accuracies say nothing about real wafers.
pub fn synth_cmd(out: &Path, cfg: &SyntheticConfig) -> Result<Outcome> {
    let data = wafer_like(cfg);
    let dir = versioned_dir(out)?;
    write_ucr(&dir.join("Wafer_TRAIN.txt"), &data.train)?;
    write_ucr(&dir.join("Wafer_TEST.txt"), &data.test)?;
    Ok(Outcome {
        lines: vec![format!(
            "synthetic data: {} train / {} test traces of {} samples",
            data.train.len(),
            data.test.len(),
            data.series_length
        )],
        dir,
    })
}
