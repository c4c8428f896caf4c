use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector, NUM_FEATURES};
use super::train::TrainConfig;
use crate::imgcore::{io, Image};
use crate::{Error, Result, NUM_CLASSES};

/// Multinomial logistic regression over standardized patch features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// `NUM_CLASSES` rows of `NUM_FEATURES` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub epochs_trained: usize,
    pub metadata: TrainConfig,
}

impl ClassifierModel {
    /// Zero weights and bias with identity standardization.
    pub fn zeros() -> Self {
        ClassifierModel {
            feature_mean: vec![0.0; NUM_FEATURES],
            feature_std: vec![1.0; NUM_FEATURES],
            weights: vec![vec![0.0; NUM_FEATURES]; NUM_CLASSES],
            bias: vec![0.0; NUM_CLASSES],
            epochs_trained: 0,
            metadata: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::format("model", what.to_string()));
        if self.feature_mean.len() != NUM_FEATURES || self.feature_std.len() != NUM_FEATURES {
            return bad("standardization vectors must have 18 entries");
        }
        if self.weights.len() != NUM_CLASSES || self.weights.iter().any(|r| r.len() != NUM_FEATURES) {
            return bad("weights must be 20x18");
        }
        if self.bias.len() != NUM_CLASSES {
            return bad("bias must have 20 entries");
        }
        if self.feature_std.iter().any(|&s| !(s > 0.0)) {
            return bad("feature_std must be positive");
        }
        let all = self
            .feature_mean
            .iter()
            .chain(&self.feature_std)
            .chain(self.weights.iter().flatten())
            .chain(&self.bias);
        if all.clone().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        Ok(())
    }

    pub fn standardize(&self, f: &FeatureVector) -> [f64; NUM_FEATURES] {
        let mut z = [0.0; NUM_FEATURES];
        for j in 0..NUM_FEATURES {
            z[j] = (f.0[j] - self.feature_mean[j]) / self.feature_std[j];
        }
        z
    }

    pub fn logits_standardized(&self, z: &[f64; NUM_FEATURES]) -> [f64; NUM_CLASSES] {
        let mut out = [0.0; NUM_CLASSES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.bias[k]
                + self.weights[k]
                    .iter()
                    .zip(z)
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
        }
        out
    }

    pub fn logits(&self, f: &FeatureVector) -> [f64; NUM_CLASSES] {
        self.logits_standardized(&self.standardize(f))
    }

    /// Class probabilities for a feature vector.
    pub fn softmax_forward(&self, f: &FeatureVector) -> [f64; NUM_CLASSES] {
        softmax(&self.logits(f))
    }

    pub fn predict_features(&self, f: &FeatureVector) -> u8 {
        argmax(&self.logits(f))
    }

    /// Most probable blur level of a 32×32 grayscale patch.
    pub fn predict(&self, patch: &Image) -> Result<u8> {
        Ok(self.predict_features(&extract_features(patch)?))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let model: ClassifierModel = serde_json::from_slice(bytes)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_atomic(path, &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }
}

/// Shift-stabilized softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64; NUM_CLASSES]) -> u8 {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if values[k] > values[best] {
            best = k;
        }
    }
    best as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(seed: u64) -> FeatureVector {
        let mut f = [0.0; NUM_FEATURES];
        for (j, v) in f.iter_mut().enumerate() {
            *v = ((seed as f64 + 1.3) * (j as f64 + 0.7)).sin() * 4.0;
        }
        FeatureVector(f)
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = ClassifierModel::zeros().softmax_forward(&features(1));
        assert!(p.iter().all(|&v| (v - 0.05).abs() < 1e-15));
    }

    #[test]
    fn probabilities_are_normalized() {
        let mut m = ClassifierModel::zeros();
        for (k, row) in m.weights.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                *w = ((k * 7 + j * 3) % 11) as f64 * 0.3 - 1.5;
            }
        }
        for s in 0..10 {
            let p = m.softmax_forward(&features(s));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut l = [0.0; NUM_CLASSES];
        for (k, v) in l.iter_mut().enumerate() {
            *v = (k as f64 * 0.37).cos() * 3.0;
        }
        let shifted = l.map(|v| v + 123.0);
        let (a, b) = (softmax(&l), softmax(&shifted));
        for k in 0..NUM_CLASSES {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_dominates_prediction() {
        let mut m = ClassifierModel::zeros();
        m.bias[7] = 100.0;
        let patch = Image::from_fn(32, 32, |x, y| ((x * y) % 5) as f64 / 4.0);
        assert_eq!(m.predict(&patch).unwrap(), 7);
        assert_eq!(m.predict(&patch).unwrap(), m.predict(&patch).unwrap());
    }

    #[test]
    fn ties_break_low() {
        assert_eq!(ClassifierModel::zeros().predict_features(&features(0)), 0);
        let mut v = [0.0; NUM_CLASSES];
        v[4] = 1.0;
        v[9] = 1.0;
        assert_eq!(argmax(&v), 4);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut m = ClassifierModel::zeros();
        m.weights[3][5] = 0.1 + 0.2;
        m.bias[2] = -1.0 / 3.0;
        m.feature_std[0] = std::f64::consts::PI;
        let back = ClassifierModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn invalid_model_rejected() {
        let mut m = ClassifierModel::zeros();
        m.feature_std[4] = 0.0;
        assert!(ClassifierModel::from_json(&m.to_json().unwrap()).is_err());
        let mut m = ClassifierModel::zeros();
        m.weights.pop();
        assert!(m.validate().is_err());
    }
}
