//! Binary classification metrics with the normal class as the majority class.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub normal_as_normal: u64,
    pub normal_as_abnormal: u64,
    pub abnormal_as_normal: u64,
    pub abnormal_as_abnormal: u64,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Normal, Label::Normal) => self.normal_as_normal += 1,
            (Label::Normal, Label::Abnormal) => self.normal_as_abnormal += 1,
            (Label::Abnormal, Label::Normal) => self.abnormal_as_normal += 1,
            (Label::Abnormal, Label::Abnormal) => self.abnormal_as_abnormal += 1,
        }
    }

    pub fn merge(self, o: Confusion) -> Confusion {
        Confusion {
            normal_as_normal: self.normal_as_normal + o.normal_as_normal,
            normal_as_abnormal: self.normal_as_abnormal + o.normal_as_abnormal,
            abnormal_as_normal: self.abnormal_as_normal + o.abnormal_as_normal,
            abnormal_as_abnormal: self.abnormal_as_abnormal + o.abnormal_as_abnormal,
        }
    }

    pub fn total(&self) -> u64 {
        self.normal_as_normal + self.normal_as_abnormal + self.abnormal_as_normal + self.abnormal_as_abnormal
    }

    pub fn correct(&self) -> u64 {
        self.normal_as_normal + self.abnormal_as_abnormal
    }

    pub fn normal_recall(&self) -> Option<f64> {
        ratio(self.normal_as_normal, self.normal_as_normal + self.normal_as_abnormal)
    }

    pub fn abnormal_recall(&self) -> Option<f64> {
        ratio(
            self.abnormal_as_abnormal,
            self.abnormal_as_abnormal + self.abnormal_as_normal,
        )
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: u64,
    pub accuracy: f64,
    /// Mean of the per-class recalls that are defined.
    pub balanced_accuracy: f64,
    pub normal_recall: Option<f64>,
    pub abnormal_recall: Option<f64>,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion) -> Metrics {
        let total = confusion.total();
        let recalls: Vec<f64> = [confusion.normal_recall(), confusion.abnormal_recall()]
            .into_iter()
            .flatten()
            .collect();
        Metrics {
            total,
            accuracy: ratio(confusion.correct(), total).unwrap_or(0.0),
            balanced_accuracy: if recalls.is_empty() {
                0.0
            } else {
                recalls.iter().sum::<f64>() / recalls.len() as f64
            },
            normal_recall: confusion.normal_recall(),
            abnormal_recall: confusion.abnormal_recall(),
            confusion,
        }
    }

    pub fn from_outputs(labels: impl IntoIterator<Item = Label>, outputs: &[f64]) -> Metrics {
        let mut c = Confusion::default();
        for (truth, &y) in labels.into_iter().zip(outputs) {
            c.record(truth, Label::from_output(y));
        }
        Metrics::from_confusion(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_rates() {
        let labels = [Label::Normal, Label::Normal, Label::Abnormal, Label::Abnormal];
        let m = Metrics::from_outputs(labels, &[0.3, -0.1, -0.9, 0.0]);
        assert_eq!(m.total, 4);
        assert_eq!(m.confusion.correct(), 2);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.normal_recall, Some(0.5));
        assert_eq!(m.abnormal_recall, Some(0.5));
        // zero output is a normal prediction
        assert_eq!(m.confusion.abnormal_as_normal, 1);
    }

    #[test]
    fn single_class_balanced() {
        let m = Metrics::from_outputs([Label::Normal], &[1.0]);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.abnormal_recall, None);
        assert_eq!(m.balanced_accuracy, 1.0);
    }

    #[test]
    fn majority_vote_balanced_is_half() {
        let labels = [Label::Normal; 9].into_iter().chain([Label::Abnormal]);
        let m = Metrics::from_outputs(labels, &[1.0; 10]);
        assert!((m.accuracy - 0.9).abs() < 1e-15);
        assert_eq!(m.balanced_accuracy, 0.5);
    }
}
