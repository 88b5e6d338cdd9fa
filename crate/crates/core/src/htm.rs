//! Spatial pooler over bucket-encoded traces, with a perceptron read-out on
//! the resulting sparse distributed representations (SDRs).
//!
//! The pooler uses global top-k inhibition and no topology, boosting or
//! temporal memory.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, TimeSeriesRecord};
use crate::model::Classifier;
use crate::nn::{train, DenseNetwork, NetworkSpec, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

/// One-hot bucket per sample, over each sample position's training range.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketEncoder {
    pub bins: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BucketEncoder {
    /// Fits per-position ranges on the training records.
    pub fn fit(records: &[TimeSeriesRecord], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("encoder needs at least 2 bins, got {bins}")));
        }
        let first = records
            .first()
            .ok_or_else(|| Error::Dataset("cannot fit an encoder on zero records".into()))?;
        let len = first.values.len();
        let mut min = vec![f64::INFINITY; len];
        let mut max = vec![f64::NEG_INFINITY; len];
        for r in records {
            if r.values.len() != len {
                return Err(Error::shape("encoder input", len, r.values.len()));
            }
            for (k, &v) in r.values.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(Self { bins, min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len() * self.bins
    }

    /// Bucket of `v` at position `k`; out-of-range values clamp to the edge buckets.
    pub fn bucket(&self, k: usize, v: f64) -> usize {
        let span = self.max[k] - self.min[k];
        if span <= 0.0 {
            return 0;
        }
        let b = ((v - self.min[k]) / span * self.bins as f64).floor();
        b.clamp(0.0, (self.bins - 1) as f64) as usize
    }

    pub fn encode(&self, values: &[f64]) -> Result<Vec<bool>> {
        if values.len() != self.min.len() {
            return Err(Error::shape("encoder input", self.min.len(), values.len()));
        }
        let mut bits = vec![false; self.width()];
        for (k, &v) in values.iter().enumerate() {
            bits[k * self.bins + self.bucket(k, v)] = true;
        }
        Ok(bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialPoolerConfig {
    pub num_columns: usize,
    pub active_columns: usize,
    pub potential_fraction: f64,
    pub permanence_threshold: f64,
    pub permanence_increment: f64,
    pub permanence_decrement: f64,
    pub seed: u64,
}

impl Default for SpatialPoolerConfig {
    fn default() -> Self {
        Self {
            num_columns: 512,
            active_columns: 20,
            potential_fraction: 0.3,
            permanence_threshold: 0.5,
            permanence_increment: 0.05,
            permanence_decrement: 0.01,
            seed: 0,
        }
    }
}

impl SpatialPoolerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_columns == 0 || self.active_columns == 0 || self.active_columns >= self.num_columns {
            return Err(Error::Config(format!(
                "need 0 < active_columns ({}) < num_columns ({})",
                self.active_columns, self.num_columns
            )));
        }
        if !(self.potential_fraction > 0.0 && self.potential_fraction <= 1.0) {
            return Err(Error::Config("potential_fraction must be in (0, 1]".into()));
        }
        for (name, v) in [
            ("permanence_threshold", self.permanence_threshold),
            ("permanence_increment", self.permanence_increment),
            ("permanence_decrement", self.permanence_decrement),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.permanence_increment <= 0.0 || self.permanence_decrement <= 0.0 {
            return Err(Error::Config("permanence increment and decrement must be positive".into()));
        }
        Ok(())
    }
}

/// Sorted indices of the active columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sdr {
    pub width: usize,
    pub active: Vec<usize>,
}

impl Sdr {
    pub fn dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        for &i in &self.active {
            v[i] = 1.0;
        }
        v
    }

    pub fn to_bitstring(&self) -> String {
        let mut s = vec![b'0'; self.width];
        for &i in &self.active {
            s[i] = b'1';
        }
        String::from_utf8(s).unwrap()
    }
}

/// Potential pools and permanences of every column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPooler {
    pub config: SpatialPoolerConfig,
    pub input_width: usize,
    /// `potential[c]` lists the input bits column `c` may connect to, ascending.
    pub potential: Vec<Vec<usize>>,
    /// `permanences[c][s]` belongs to input bit `potential[c][s]`.
    pub permanences: Vec<Vec<f64>>,
}

impl SpatialPooler {
    /// Each column samples `round(potential_fraction · input_width)` distinct
    /// inputs with permanences uniform within ±0.1 of the threshold.
    pub fn new(config: SpatialPoolerConfig, input_width: usize) -> Result<Self> {
        config.validate()?;
        if input_width == 0 {
            return Err(Error::Config("pooler input width must be positive".into()));
        }
        let pool = ((config.potential_fraction * input_width as f64).round() as usize).clamp(1, input_width);
        let mut rng = rng_from_seed(derive_seed(config.seed, &[stream::POOLER]));
        let lo = (config.permanence_threshold - 0.1).max(0.0);
        let hi = (config.permanence_threshold + 0.1).min(1.0);
        let mut potential = Vec::with_capacity(config.num_columns);
        let mut permanences = Vec::with_capacity(config.num_columns);
        for _ in 0..config.num_columns {
            let mut idx = sample(&mut rng, input_width, pool).into_vec();
            idx.sort_unstable();
            permanences.push(idx.iter().map(|_| rng.random_range(lo..=hi)).collect());
            potential.push(idx);
        }
        Ok(Self {
            config,
            input_width,
            potential,
            permanences,
        })
    }

    /// Connected synapses on active input bits, per column.
    pub fn overlaps(&self, input: &[bool]) -> Result<Vec<usize>> {
        if input.len() != self.input_width {
            return Err(Error::shape("pooler input", self.input_width, input.len()));
        }
        let th = self.config.permanence_threshold;
        Ok(self
            .potential
            .iter()
            .zip(&self.permanences)
            .map(|(pot, perm)| {
                pot.iter()
                    .zip(perm)
                    .filter(|&(&i, &p)| input[i] && p >= th)
                    .count()
            })
            .collect())
    }

    /// Top-k columns by overlap, ties going to the lower column index.
    fn winners(&self, overlaps: &[usize]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..overlaps.len()).collect();
        order.sort_by(|&a, &b| overlaps[b].cmp(&overlaps[a]).then(a.cmp(&b)));
        order.truncate(self.config.active_columns);
        order.sort_unstable();
        order
    }

    /// Inference without learning.
    pub fn infer(&self, input: &[bool]) -> Result<Sdr> {
        let overlaps = self.overlaps(input)?;
        Ok(Sdr {
            width: self.config.num_columns,
            active: self.winners(&overlaps),
        })
    }

    /// Computes the SDR; with `learn`, winning columns reinforce synapses on
    /// active bits and weaken the rest, clamped to [0, 1].
    pub fn compute(&mut self, input: &[bool], learn: bool) -> Result<Sdr> {
        let sdr = self.infer(input)?;
        if learn {
            let inc = self.config.permanence_increment;
            let dec = self.config.permanence_decrement;
            for &c in &sdr.active {
                for (&i, p) in self.potential[c].iter().zip(self.permanences[c].iter_mut()) {
                    *p = if input[i] { (*p + inc).min(1.0) } else { (*p - dec).max(0.0) };
                }
            }
        }
        Ok(sdr)
    }
}

/// Perceptron over SDR bits. Falls back to a constant prediction when the
/// training data holds a single class.
#[derive(Debug, Clone, PartialEq)]
pub enum SdrClassifier {
    Constant(Label),
    Perceptron(DenseNetwork),
}

impl SdrClassifier {
    pub fn fit(sdrs: &[Sdr], labels: &[Label], config: &TrainConfig) -> Result<Self> {
        if sdrs.len() != labels.len() {
            return Err(Error::shape("SDR labels", sdrs.len(), labels.len()));
        }
        let first = labels
            .first()
            .ok_or_else(|| Error::Dataset("no SDRs to train on".into()))?;
        if labels.iter().all(|l| l == first) {
            return Ok(SdrClassifier::Constant(*first));
        }
        let width = sdrs[0].width;
        let records: Vec<TimeSeriesRecord> = sdrs
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (s, &label))| {
                if s.width != width {
                    return Err(Error::shape("SDR width", width, s.width));
                }
                Ok(TimeSeriesRecord {
                    label,
                    values: s.dense(),
                    source_index: i,
                })
            })
            .collect::<Result<_>>()?;
        let out = train(&NetworkSpec::perceptron(width), &records, config)?;
        Ok(SdrClassifier::Perceptron(out.model))
    }

    pub fn classify(&self, sdr: &Sdr) -> Result<Label> {
        Ok(Label::from_output(self.score(sdr)?))
    }

    pub fn score(&self, sdr: &Sdr) -> Result<f64> {
        match self {
            SdrClassifier::Constant(l) => Ok(l.target()),
            SdrClassifier::Perceptron(net) => net.predict(&sdr.dense()),
        }
    }
}

/// Encoder, pooler and read-out as one classifier over raw traces.
#[derive(Debug, Clone, PartialEq)]
pub struct HtmPipeline {
    pub encoder: BucketEncoder,
    pub pooler: SpatialPooler,
    pub classifier: SdrClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HtmConfig {
    pub bins: usize,
    /// Passes of pooler learning over the training split before the read-out is trained.
    pub pooler_epochs: usize,
    pub pooler: SpatialPoolerConfig,
}

impl Default for HtmConfig {
    fn default() -> Self {
        Self {
            bins: 8,
            pooler_epochs: 1,
            pooler: SpatialPoolerConfig::default(),
        }
    }
}

impl HtmPipeline {
    pub fn fit(records: &[TimeSeriesRecord], config: &HtmConfig, train_config: &TrainConfig) -> Result<Self> {
        let encoder = BucketEncoder::fit(records, config.bins)?;
        let mut pooler = SpatialPooler::new(config.pooler.clone(), encoder.width())?;
        let encoded: Vec<Vec<bool>> = records
            .iter()
            .map(|r| encoder.encode(&r.values))
            .collect::<Result<_>>()?;
        for _ in 0..config.pooler_epochs {
            for bits in &encoded {
                pooler.compute(bits, true)?;
            }
        }
        let sdrs: Vec<Sdr> = encoded.iter().map(|b| pooler.infer(b)).collect::<Result<_>>()?;
        let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
        let classifier = SdrClassifier::fit(&sdrs, &labels, train_config)?;
        Ok(Self {
            encoder,
            pooler,
            classifier,
        })
    }

    pub fn sdr(&self, values: &[f64]) -> Result<Sdr> {
        self.pooler.infer(&self.encoder.encode(values)?)
    }
}

impl Classifier for HtmPipeline {
    fn predict(&self, values: &[f64]) -> Result<f64> {
        self.classifier.score(&self.sdr(values)?)
    }
}

/// One bit-string line per SDR.
pub fn format_sdrs(sdrs: &[Sdr]) -> String {
    let mut out = String::new();
    for s in sdrs {
        writeln!(out, "{}", s.to_bitstring()).unwrap();
    }
    out
}
