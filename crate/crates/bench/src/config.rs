//! Experiment configuration: one JSON file, with command-line overrides
//! applied on top before validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use waferbench_core::crossbar::DeviceModel;
use waferbench_core::htm::HtmConfig;
use waferbench_core::hwcost::CostTable;
use waferbench_core::nn::TrainConfig;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Perceptron,
    Ann,
    Dnn,
    LstmSequential,
    LstmWindowed,
    Htm,
}

impl Architecture {
    /// Row order of the consolidated accuracy/cost table.
    pub const TABLE_ORDER: [Architecture; 6] = [
        Architecture::LstmSequential,
        Architecture::LstmWindowed,
        Architecture::Perceptron,
        Architecture::Ann,
        Architecture::Dnn,
        Architecture::Htm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Perceptron => "perceptron",
            Architecture::Ann => "ann",
            Architecture::Dnn => "dnn",
            Architecture::LstmSequential => "lstm_sequential",
            Architecture::LstmWindowed => "lstm_windowed",
            Architecture::Htm => "htm",
        }
    }

    /// Largest absolute training input after rescaling, when the architecture rescales.
    pub fn default_scale_max(self) -> Option<f64> {
        match self {
            Architecture::LstmSequential => Some(0.5),
            Architecture::LstmWindowed => Some(0.1),
            _ => None,
        }
    }

    pub fn default_hidden(self) -> usize {
        match self {
            Architecture::LstmWindowed => 1,
            _ => 4,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Architecture::TABLE_ORDER
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown architecture {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub delimiter: Option<char>,
    pub series_length: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: PathBuf::from("data/Wafer/Wafer_TRAIN.tsv"),
            test: PathBuf::from("data/Wafer/Wafer_TEST.tsv"),
            delimiter: None,
            series_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmSettings {
    /// Defaults to 4 (sequential) or 1 (windowed).
    pub hidden_dim: Option<usize>,
    pub forget_bias: f64,
    /// Used when `training.gradient_clip_norm` is unset.
    pub gradient_clip_norm: Option<f64>,
}

impl Default for LstmSettings {
    fn default() -> Self {
        Self {
            hidden_dim: None,
            forget_bias: 1.0,
            gradient_clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSettings {
    /// Per-architecture tables, see `configs/calibration.json`.
    pub calibration: Option<PathBuf>,
    /// A single table used for every architecture; wins over `calibration`.
    pub table: Option<CostTable>,
}

pub const TABLE2_INDICES: [usize; 10] = [23, 47, 7, 3, 3838, 193, 6157, 411, 1534, 4507];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalogSettings {
    /// 1-based positions in the test split.
    pub table2_indices: Vec<usize>,
    /// 1-based position in the test split.
    pub fig2_index: usize,
}

impl Default for AnalogSettings {
    fn default() -> Self {
        Self {
            table2_indices: TABLE2_INDICES.to_vec(),
            fig2_index: 23,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub architecture: Architecture,
    /// Seeds initialization, shuffling, the pooler and the simulated chip.
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    /// Overrides the architecture's default input rescaling.
    #[serde(default)]
    pub scale_max: Option<f64>,
    /// `training.seed` is ignored; the top-level seed is used.
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub lstm: LstmSettings,
    #[serde(default)]
    pub htm: HtmConfig,
    #[serde(default)]
    pub device: DeviceModel,
    #[serde(default)]
    pub cost: CostSettings,
    #[serde(default)]
    pub analog: AnalogSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/out")
}

impl ExperimentConfig {
    pub fn scale_max(&self) -> Option<f64> {
        self.scale_max.or(self.architecture.default_scale_max())
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.training.clone();
        t.seed = self.seed;
        if matches!(self.architecture, Architecture::LstmSequential | Architecture::LstmWindowed) && t.gradient_clip_norm.is_none() {
            t.gradient_clip_norm = self.lstm.gradient_clip_norm;
        }
        t
    }

    pub fn htm_config(&self) -> HtmConfig {
        let mut h = self.htm.clone();
        h.pooler.seed = self.seed;
        h
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.device.validate()?;
        self.htm.pooler.validate()?;
        if let Some(s) = self.scale_max {
            if !(s > 0.0 && s.is_finite()) {
                return Err(BenchError::Config(format!("scale_max must be positive, got {s}")));
            }
        }
        if self.lstm.hidden_dim == Some(0) {
            return Err(BenchError::Config("lstm.hidden_dim must be positive".into()));
        }
        if let Some(t) = &self.cost.table {
            t.validate()?;
        }
        Ok(())
    }
}

/// Values given on the command line; each replaces the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub architecture: Option<Architecture>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub scale_max: Option<f64>,
    pub series_length: Option<usize>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

fn set(root: &mut Value, path: &[&str], v: Value) {
    let mut node = root;
    for key in &path[..path.len() - 1] {
        if !node.get(*key).is_some_and(Value::is_object) {
            node[*key] = json!({});
        }
        node = &mut node[*key];
    }
    node[path[path.len() - 1]] = v;
}

impl Overrides {
    fn apply(&self, v: &mut Value) {
        if let Some(a) = self.architecture {
            set(v, &["architecture"], json!(a.name()));
        }
        if let Some(s) = self.seed {
            set(v, &["seed"], json!(s));
        }
        if let Some(o) = &self.output_dir {
            set(v, &["output_dir"], json!(o));
        }
        if let Some(e) = self.epochs {
            set(v, &["training", "epochs"], json!(e));
        }
        if let Some(lr) = self.learning_rate {
            set(v, &["training", "learning_rate"], json!(lr));
        }
        if let Some(s) = self.scale_max {
            set(v, &["scale_max"], json!(s));
        }
        if let Some(n) = self.series_length {
            set(v, &["data", "series_length"], json!(n));
        }
        if let Some(p) = &self.train {
            set(v, &["data", "train"], json!(p));
        }
        if let Some(p) = &self.test {
            set(v, &["data", "test"], json!(p));
        }
    }
}

/// The effective configuration plus the exact text it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Verbatim contents of the config file, empty without one.
    pub source_text: String,
    pub source_path: Option<PathBuf>,
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<LoadedConfig> {
    let source_text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| BenchError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut value: Value = if source_text.trim().is_empty() {
        json!({})
    } else {
        serde_json::from_str(&source_text).map_err(|e| BenchError::Config(format!("{}: {e}", path.unwrap().display())))?
    };
    if !value.is_object() {
        return Err(BenchError::Config("config must be a JSON object".into()));
    }
    overrides.apply(&mut value);
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| BenchError::Config(e.to_string()))?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        source_text,
        source_path: path.map(Path::to_path_buf),
    })
}

/// `configs/calibration.json`: one cost table per architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    /// Label carried into every report that uses these tables.
    pub basis: String,
    pub tables: BTreeMap<Architecture, CostTable>,
}

impl CalibrationFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: CalibrationFile =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        for t in file.tables.values() {
            t.validate()?;
        }
        Ok(file)
    }
}

/// Cost table for `arch` and a label describing where it came from.
pub fn cost_table(config: &ExperimentConfig, arch: Architecture) -> Result<Option<(CostTable, String)>> {
    if let Some(t) = config.cost.table {
        return Ok(Some((t, "user-supplied constants".into())));
    }
    match &config.cost.calibration {
        None => Ok(None),
        Some(p) => {
            let file = CalibrationFile::load(p)?;
            let t = file
                .tables
                .get(&arch)
                .copied()
                .ok_or_else(|| BenchError::Config(format!("{} has no table for {arch}", p.display())))?;
            Ok(Some((t, file.basis)))
        }
    }
}
