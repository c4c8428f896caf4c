use serde::{Deserialize, Serialize};

use super::features::extract_features;
use super::model::ClassifierModel;
use crate::dataset::PatchRecord;
use crate::{par, Error, Result, NUM_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// True when precision or recall had a zero denominator and was set to 0.
    pub undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

impl EvalReport {
    pub fn from_predictions(truth: &[u8], predicted: &[u8]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dimension(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::domain("records", "nothing to evaluate"));
        }
        let mut confusion = vec![vec![0usize; NUM_CLASSES]; NUM_CLASSES];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t as usize][p as usize] += 1;
        }
        let total = truth.len();
        let correct: usize = (0..NUM_CLASSES).map(|k| confusion[k][k]).sum();
        let per_class = (0..NUM_CLASSES)
            .map(|k| {
                let tp = confusion[k][k] as f64;
                let support: usize = confusion[k].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[k]).sum();
                let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
                let recall = if support > 0 { tp / support as f64 } else { 0.0 };
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                    undefined: predicted == 0 || support == 0,
                }
            })
            .collect();
        Ok(EvalReport {
            accuracy: correct as f64 / total as f64,
            per_class,
            confusion,
            total,
        })
    }

    /// Fraction of predictions within `tolerance` classes of the truth.
    pub fn accuracy_within(&self, tolerance: usize) -> f64 {
        let mut hits = 0;
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                if t.abs_diff(p) <= tolerance {
                    hits += n;
                }
            }
        }
        hits as f64 / self.total as f64
    }
}

/// Predicts every record and tabulates the results.
pub fn evaluate(model: &ClassifierModel, records: &[PatchRecord]) -> Result<EvalReport> {
    let predicted: Vec<u8> = par::map(records, |r| {
        extract_features(&r.to_image()).map(|f| model.predict_features(&f))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let truth: Vec<u8> = records.iter().map(|r| r.label).collect();
    EvalReport::from_predictions(&truth, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n_per: usize) -> Vec<u8> {
        (0..NUM_CLASSES * n_per).map(|i| (i % NUM_CLASSES) as u8).collect()
    }

    #[test]
    fn perfect_predictor() {
        let t = balanced(3);
        let r = EvalReport::from_predictions(&t, &t).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.iter().all(|c| c.f1 == 1.0 && !c.undefined));
        assert_eq!(r.accuracy_within(0), 1.0);
    }

    #[test]
    fn constant_predictor() {
        let t = balanced(5);
        let r = EvalReport::from_predictions(&t, &vec![0; t.len()]).unwrap();
        assert!((r.accuracy - 0.05).abs() < 1e-15);
        assert!(r.per_class[3].undefined);
        assert_eq!(r.per_class[3].precision, 0.0);
        assert_eq!(r.per_class[0].recall, 1.0);
        assert!((r.accuracy_within(2) - 3.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_invariants() {
        let t = balanced(4);
        let p: Vec<u8> = t.iter().map(|&l| (l * 7 + 3) % 20).collect();
        let r = EvalReport::from_predictions(&t, &p).unwrap();
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, t.len());
        for k in 0..NUM_CLASSES {
            assert_eq!(r.confusion[k].iter().sum::<usize>(), r.per_class[k].support);
        }
        let trace: usize = (0..NUM_CLASSES).map(|k| r.confusion[k][k]).sum();
        assert_eq!(r.accuracy, trace as f64 / total as f64);
    }

    #[test]
    fn empty_rejected() {
        assert!(EvalReport::from_predictions(&[], &[]).is_err());
        assert!(EvalReport::from_predictions(&[1], &[]).is_err());
    }
}
