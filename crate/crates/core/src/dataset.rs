//! UCR-format wafer traces.
//!
//! Each line of a split file is `label<delim>v1<delim>...<delim>vL`, with the
//! label `1` for a normal wafer and `-1` for an abnormal one. The public Wafer
//! release ships 1000 training and 6164 test traces of 152 samples each.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod synthetic;

/// Sample count per trace in the public Wafer release.
pub const DEFAULT_SERIES_LENGTH: usize = 152;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn from_value(v: f64) -> Option<Label> {
        if v == 1.0 {
            Some(Label::Normal)
        } else if v == -1.0 {
            Some(Label::Abnormal)
        } else {
            None
        }
    }

    /// Predicted class for a network output; a zero output counts as normal.
    pub fn from_output(y: f64) -> Label {
        if y >= 0.0 {
            Label::Normal
        } else {
            Label::Abnormal
        }
    }

    pub fn target(self) -> f64 {
        match self {
            Label::Normal => 1.0,
            Label::Abnormal => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Normal => 1,
            Label::Abnormal => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub label: Label,
    pub values: Vec<f64>,
    /// 0-based row within the split file it was read from.
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<TimeSeriesRecord>,
    pub test: Vec<TimeSeriesRecord>,
    pub series_length: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Field separator. `None` detects comma, then tab, then whitespace per file.
    pub delimiter: Option<char>,
    /// Keep only the first `n` samples of every trace. `None` keeps the file's length.
    pub series_length: Option<usize>,
}

/// Loads a train/test pair of UCR files.
pub fn load_ucr(train_path: &Path, test_path: &Path, options: &LoadOptions) -> Result<SplitDataset> {
    let (train, train_len) = read_split(train_path, options.delimiter)?;
    let (test, test_len) = read_split(test_path, options.delimiter)?;
    if train_len != test_len {
        return Err(Error::Dataset(format!(
            "train traces have {train_len} samples but test traces have {test_len}"
        )));
    }
    let mut dataset = SplitDataset {
        train,
        test,
        series_length: train_len,
    };
    if let Some(n) = options.series_length {
        dataset = dataset.truncate(n)?;
    }
    Ok(dataset)
}

fn detect_delimiter(line: &str) -> Option<char> {
    [',', '\t'].into_iter().find(|&d| line.contains(d))
}

fn read_split(path: &Path, delimiter: Option<char>) -> Result<(Vec<TimeSeriesRecord>, usize)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_split(&text, path, delimiter)
}

/// Parses the text of one split file. `origin` only labels errors.
pub fn parse_split(
    text: &str,
    origin: &Path,
    delimiter: Option<char>,
) -> Result<(Vec<TimeSeriesRecord>, usize)> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: PathBuf::from(origin),
        line,
        reason,
    };

    let mut records = Vec::new();
    let mut length: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let delim = delimiter.or_else(|| detect_delimiter(line));
        let mut fields: Vec<&str> = match delim {
            Some(d) => line.split(d).map(str::trim).collect(),
            None => line.split_whitespace().collect(),
        };
        // Some archive releases end rows with a trailing delimiter.
        if fields.last() == Some(&"") {
            fields.pop();
        }
        let (label_tok, value_toks) = fields
            .split_first()
            .ok_or_else(|| parse_err(lineno + 1, "empty row".into()))?;
        let label_value: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("non-numeric label {label_tok:?}")))?;
        let label = Label::from_value(label_value)
            .ok_or_else(|| parse_err(lineno + 1, format!("unknown label {label_tok:?}")))?;
        let values = value_toks
            .iter()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(lineno + 1, format!("non-numeric value {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(parse_err(lineno + 1, "row has a label but no samples".into()));
        }
        match length {
            None => length = Some(values.len()),
            Some(l) if l != values.len() => {
                return Err(parse_err(
                    lineno + 1,
                    format!("ragged row: {} samples, expected {l}", values.len()),
                ))
            }
            Some(_) => {}
        }
        records.push(TimeSeriesRecord {
            label,
            values,
            source_index: records.len(),
        });
    }
    let length = length.ok_or_else(|| parse_err(0, "file contains no records".into()))?;
    Ok((records, length))
}

/// Formats records in the comma-separated UCR layout.
pub fn format_ucr(records: &[TimeSeriesRecord]) -> String {
    let mut out = String::new();
    for r in records {
        write!(out, "{}", r.label.as_i8()).unwrap();
        for v in &r.values {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_ucr(path: &Path, records: &[TimeSeriesRecord]) -> Result<()> {
    fs::write(path, format_ucr(records)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Fraction of normal records in a split.
pub fn normal_fraction(records: &[TimeSeriesRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Dataset("empty split".into()));
    }
    let normal = records.iter().filter(|r| r.label == Label::Normal).count();
    Ok(normal as f64 / records.len() as f64)
}

/// Normal-class fractions of the (train, test) splits.
pub fn class_balance(d: &SplitDataset) -> Result<(f64, f64)> {
    Ok((normal_fraction(&d.train)?, normal_fraction(&d.test)?))
}

/// Largest absolute sample value in a split.
pub fn max_abs(records: &[TimeSeriesRecord]) -> f64 {
    records
        .iter()
        .flat_map(|r| r.values.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Factor that brings the training split's largest magnitude to `target_max_abs`.
pub fn scale_factor(d: &SplitDataset, target_max_abs: f64) -> Result<f64> {
    if !(target_max_abs > 0.0 && target_max_abs.is_finite()) {
        return Err(Error::Config(format!(
            "scale target must be positive, got {target_max_abs}"
        )));
    }
    if d.train.is_empty() {
        return Err(Error::Dataset("cannot scale an empty training split".into()));
    }
    let m = max_abs(&d.train);
    if m == 0.0 {
        return Err(Error::Dataset(
            "training split is all zeros; scale factor undefined".into(),
        ));
    }
    Ok(target_max_abs / m)
}

/// Multiplies both splits by the factor computed from the training split.
/// Test values can end up above `target_max_abs`.
pub fn scale_inputs(d: &SplitDataset, target_max_abs: f64) -> Result<SplitDataset> {
    scale_factor(d, target_max_abs)?;
    let m = max_abs(&d.train);
    // v / m * target keeps the training extreme at exactly the target.
    Ok(d.map_values(|v| v / m * target_max_abs))
}

impl SplitDataset {
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SplitDataset {
        let map = |records: &[TimeSeriesRecord]| {
            records
                .iter()
                .map(|r| TimeSeriesRecord {
                    label: r.label,
                    values: r.values.iter().map(|&v| f(v)).collect(),
                    source_index: r.source_index,
                })
                .collect()
        };
        SplitDataset {
            train: map(&self.train),
            test: map(&self.test),
            series_length: self.series_length,
        }
    }

    /// Keeps the first `n` samples of every trace.
    pub fn truncate(self, n: usize) -> Result<SplitDataset> {
        if n == 0 || n > self.series_length {
            return Err(Error::Dataset(format!(
                "series length {n} not available (traces have {} samples)",
                self.series_length
            )));
        }
        let cut = |records: Vec<TimeSeriesRecord>| {
            records
                .into_iter()
                .map(|mut r| {
                    r.values.truncate(n);
                    r
                })
                .collect()
        };
        Ok(SplitDataset {
            train: cut(self.train),
            test: cut(self.test),
            series_length: n,
        })
    }

    /// Per-trace z-normalization (zero mean, unit variance). Constant traces become zeros.
    pub fn z_normalized(&self) -> SplitDataset {
        let norm = |records: &[TimeSeriesRecord]| {
            records
                .iter()
                .map(|r| {
                    let n = r.values.len() as f64;
                    let mean = r.values.iter().sum::<f64>() / n;
                    let var = r.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    TimeSeriesRecord {
                        label: r.label,
                        values: r
                            .values
                            .iter()
                            .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
                            .collect(),
                        source_index: r.source_index,
                    }
                })
                .collect()
        };
        SplitDataset {
            train: norm(&self.train),
            test: norm(&self.test),
            series_length: self.series_length,
        }
    }
}
