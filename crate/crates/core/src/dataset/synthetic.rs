//! Synthetic stand-in for the wafer traces.
//!
//! Generates plateau-shaped process traces with roughly the class balance
//! and split sizes of the public release, for exercising the pipeline when
//! the real files are not at hand. Accuracies measured on this data say
//! nothing about the real dataset.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Label, SplitDataset, TimeSeriesRecord, DEFAULT_SERIES_LENGTH};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub series_length: usize,
    pub normal_fraction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_size: 1000,
            test_size: 6164,
            series_length: DEFAULT_SERIES_LENGTH,
            normal_fraction: 0.9,
            noise_sigma: 0.15,
            seed: 0,
        }
    }
}

/// Breakpoints as fractions of the trace length, and plateau levels.
const EDGES: [f64; 3] = [0.10, 0.40, 0.66];
const LEVELS: [f64; 4] = [-1.0, 1.5, 0.3, -0.8];

fn trace<R: Rng>(rng: &mut R, len: usize, label: Label, noise: f64) -> Vec<f64> {
    let jitter = Normal::new(0.0, 1.0).unwrap();
    let mut edges: Vec<f64> = EDGES
        .iter()
        .map(|e| e * len as f64 + 1.5 * jitter.sample(rng))
        .collect();
    let mut levels: Vec<f64> = LEVELS
        .iter()
        .map(|l| l + 0.08 * jitter.sample(rng))
        .collect();
    let mut spike: Option<(f64, f64)> = None;
    if label == Label::Abnormal {
        match rng.random_range(0..3) {
            0 => levels[1] = 0.4 + 0.2 * jitter.sample(rng),
            1 => {
                let at = rng.random_range(0.15..0.85) * len as f64;
                spike = Some((at, if rng.random_bool(0.5) { 3.0 } else { -3.0 }));
            }
            _ => {
                let shift = 0.1 * len as f64 * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                edges[1] += shift;
                edges[2] += shift;
            }
        }
    }
    (0..len)
        .map(|t| {
            let t = t as f64;
            // smoothed step between consecutive plateaus
            let mut v = levels[0];
            for (k, e) in edges.iter().enumerate() {
                let s = 1.0 / (1.0 + (-(t - e) / 1.2).exp());
                v += (levels[k + 1] - levels[k]) * s;
            }
            if let Some((at, amp)) = spike {
                v += amp * (-(t - at).powi(2) / 8.0).exp();
            }
            v + noise * jitter.sample(rng)
        })
        .collect()
}

fn split<R: Rng>(rng: &mut R, n: usize, cfg: &SyntheticConfig) -> Vec<TimeSeriesRecord> {
    let normal = (n as f64 * cfg.normal_fraction).round() as usize;
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < normal { Label::Normal } else { Label::Abnormal })
        .collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| TimeSeriesRecord {
            label,
            values: trace(rng, cfg.series_length, label, cfg.noise_sigma),
            source_index: i,
        })
        .collect()
}

/// Wafer-like dataset; each trace is z-normalized like the archive's traces.
pub fn wafer_like(cfg: &SyntheticConfig) -> SplitDataset {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[stream::SYNTHETIC]));
    let train = split(&mut rng, cfg.train_size, cfg);
    let test = split(&mut rng, cfg.test_size, cfg);
    SplitDataset {
        train,
        test,
        series_length: cfg.series_length,
    }
    .z_normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::class_balance;

    #[test]
    fn shape_and_balance() {
        let d = wafer_like(&SyntheticConfig {
            test_size: 500,
            ..Default::default()
        });
        assert_eq!(d.train.len(), 1000);
        assert_eq!(d.test.len(), 500);
        assert!(d.train.iter().all(|r| r.values.len() == 152));
        let (tr, te) = class_balance(&d).unwrap();
        assert_eq!(tr, 0.9);
        assert_eq!(te, 0.9);
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig {
            train_size: 20,
            test_size: 20,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(wafer_like(&cfg), wafer_like(&cfg));
    }
}
