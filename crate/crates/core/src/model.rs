use rayon::prelude::*;

use crate::dataset::TimeSeriesRecord;
use crate::metrics::{Confusion, Metrics};
use crate::{Error, Result};

/// A trained model mapping one trace to a scalar output whose sign is the class.
pub trait Classifier: Sync {
    fn predict(&self, values: &[f64]) -> Result<f64>;
}

/// A model that can take one online gradient step on a single pattern.
pub trait OnlineModel: Classifier + Clone {
    /// Applies one SGD update and returns the prediction and squared-error
    /// loss measured before the update.
    fn train_step(
        &mut self,
        input: &[f64],
        target: f64,
        learning_rate: f64,
        clip_norm: Option<f64>,
    ) -> Result<(f64, f64)>;
}

/// Outputs for every record, in record order.
pub fn predictions<C: Classifier + ?Sized>(model: &C, records: &[TimeSeriesRecord]) -> Result<Vec<f64>> {
    records.par_iter().map(|r| model.predict(&r.values)).collect()
}

/// Sign-threshold evaluation. Records are scored in parallel; counts are merged by summation.
pub fn evaluate<C: Classifier + ?Sized>(model: &C, records: &[TimeSeriesRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::Dataset("cannot evaluate on zero records".into()));
    }
    let confusion = records
        .par_iter()
        .map(|r| {
            let mut c = Confusion::default();
            c.record(r.label, crate::dataset::Label::from_output(model.predict(&r.values)?));
            Ok(c)
        })
        .try_reduce(Confusion::default, |a, b| Ok(a.merge(b)))?;
    Ok(Metrics::from_confusion(confusion))
}

/// Any trained classifier the toolkit can checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Dense(crate::nn::DenseNetwork),
    Lstm(crate::lstm::LstmNetwork),
    Htm(crate::htm::HtmPipeline),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Dense(_) => "dense",
            TrainedModel::Lstm(_) => "lstm",
            TrainedModel::Htm(_) => "htm",
        }
    }
}

impl Classifier for TrainedModel {
    fn predict(&self, values: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Dense(m) => m.predict(values),
            TrainedModel::Lstm(m) => m.predict(values),
            TrainedModel::Htm(m) => m.predict(values),
        }
    }
}
