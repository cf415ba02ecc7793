//! Confusion matrices and the evaluation metrics reported per model.
//!
//! Multiclass accuracy is trace / total. Precision, recall and false
//! positive rate are computed one-vs-rest for a referenced class (class 0
//! by default). A zero denominator yields 0 with the `degenerate` flag set.

use serde::Serialize;

use crate::data::{Batches, DatasetManifest, SampleCache, Split, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::model::{decide, logits_to_probabilities, Model};
use crate::nn::Mode;

/// Lower clip applied to the true-class probability before taking its log.
pub const LOSS_CLIP: f64 = 1e-7;

/// Rows are truth, columns are prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rate {
    pub value: f64,
    /// Set when the denominator was zero.
    pub degenerate: bool,
}

impl Rate {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Rate {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Rate {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_predictions(preds: &[usize], truth: &[usize], n: usize) -> Result<Self> {
        if preds.len() != truth.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} labels",
                preds.len(),
                truth.len()
            )));
        }
        if preds.is_empty() {
            return Err(Error::invalid("no predictions"));
        }
        let mut cm = Self::new(n);
        for (&p, &t) in preds.iter().zip(truth) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.n || pred >= self.n {
            return Err(Error::invalid(format!(
                "class pair ({truth}, {pred}) outside 0..{}",
                self.n
            )));
        }
        self.counts[truth * self.n + pred] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Collapses to `reference` vs everything else.
    pub fn one_vs_rest(&self, reference: usize) -> BinaryCounts {
        let mut c = BinaryCounts::default();
        for t in 0..self.n {
            for p in 0..self.n {
                let k = self.get(t, p);
                match (t == reference, p == reference) {
                    (true, true) => c.tp += k,
                    (true, false) => c.fn_ += k,
                    (false, true) => c.fp += k,
                    (false, false) => c.tn += k,
                }
            }
        }
        c
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::invalid("accuracy of an empty confusion matrix")),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

pub fn precision(cm: &ConfusionMatrix, reference: usize) -> Rate {
    let c = cm.one_vs_rest(reference);
    Rate::ratio(c.tp, c.tp + c.fp)
}

pub fn recall(cm: &ConfusionMatrix, reference: usize) -> Rate {
    let c = cm.one_vs_rest(reference);
    Rate::ratio(c.tp, c.tp + c.fn_)
}

pub fn false_positive_rate(cm: &ConfusionMatrix, reference: usize) -> Rate {
    let c = cm.one_vs_rest(reference);
    Rate::ratio(c.fp, c.fp + c.tn)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / sum
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub model: String,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
    pub referenced_class: usize,
    pub n_test: usize,
    /// Names of metrics whose denominator was zero.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<&'static str>,
    #[serde(skip)]
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(
        model: &str,
        loss: f64,
        cm: ConfusionMatrix,
        reference: usize,
    ) -> Result<Self> {
        let acc = accuracy(&cm)?;
        let p = precision(&cm, reference);
        let r = recall(&cm, reference);
        let fpr = false_positive_rate(&cm, reference);
        let degenerate = [("precision", p), ("recall", r), ("fpr", fpr)]
            .into_iter()
            .filter(|(_, rate)| rate.degenerate)
            .map(|(name, _)| name)
            .collect();
        Ok(Self {
            model: model.to_string(),
            loss,
            accuracy: acc,
            precision: p.value,
            recall: r.value,
            fpr: fpr.value,
            f1: f1(p.value, r.value),
            referenced_class: reference,
            n_test: cm.total() as usize,
            degenerate,
            confusion: cm,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Mean loss and confusion matrix of `model` over one split, in inference
/// mode without augmentation.
pub fn evaluate_split(
    model: &mut Model<f32>,
    manifest: &DatasetManifest,
    cache: &SampleCache,
    split: Split,
) -> Result<(f64, ConfusionMatrix)> {
    if model.spec.classes != manifest.classes {
        return Err(Error::Dataset(format!(
            "model classes {:?} do not match dataset classes {:?}",
            model.spec.classes, manifest.classes
        )));
    }
    let head = model.spec.head;
    let mut cm = ConfusionMatrix::new(manifest.classes.len());
    let mut loss_sum = 0.0;
    for batch in Batches::new(cache, manifest, split, DEFAULT_BATCH_SIZE, None)? {
        let logits = model.logits(&batch.inputs, Mode::Infer)?;
        for (probs, &label) in logits_to_probabilities(head, &logits)
            .iter()
            .zip(&batch.labels)
        {
            if probs.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite("model output".into()));
            }
            loss_sum -= probs[label].max(LOSS_CLIP).ln();
            cm.record(label, decide(head, probs))?;
        }
    }
    Ok((loss_sum / cm.total() as f64, cm))
}

/// Test-split report for the referenced class 0.
pub fn evaluate(
    model: &mut Model<f32>,
    manifest: &DatasetManifest,
    cache: &SampleCache,
) -> Result<MetricsReport> {
    let (loss, cm) = evaluate_split(model, manifest, cache, Split::Test)?;
    MetricsReport::from_confusion(model.spec.name(), loss, cm, 0)
}
