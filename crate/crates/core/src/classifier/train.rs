//! Mini-batch cross-entropy training with Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector, NUM_FEATURES};
use super::model::{argmax, softmax, ClassifierModel};
use crate::dataset::{DatasetSplit, PatchRecord};
use crate::{par, Error, Result, NUM_CLASSES};

/// Number of trainable parameters: the weight matrix followed by the bias.
pub const NUM_PARAMS: usize = NUM_CLASSES * NUM_FEATURES + NUM_CLASSES;

/// Starting point for the softmax parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// All weights and biases zero (uniform predictions).
    Zero,
    /// Shared-covariance Gaussian discriminant: the softmax parameters that
    /// are exact when each class is Gaussian with a common covariance.
    #[default]
    Lda,
}

impl std::str::FromStr for Init {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Init::Zero),
            "lda" => Ok(Init::Lda),
            other => Err(Error::domain("init", format!("unknown initialisation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            seed: 0,
            init: Init::Lda,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain("learning_rate", "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::domain(name, format!("{b} not in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::domain("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Adam in the form with the bias correction folded into the step size:
/// `αₜ = α·√(1−β₂ᵗ)/(1−β₁ᵗ)`, `θ ← θ − αₜ·m/(√v + ε̂)`.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let lr_t = self.lr * (1.0 - self.beta2.powi(self.t)).sqrt() / (1.0 - self.beta1.powi(self.t));
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr_t * self.m[i] / (self.v[i].sqrt() + self.eps);
        }
    }
}

fn pack(model: &ClassifierModel) -> Vec<f64> {
    let mut p: Vec<f64> = model.weights.iter().flatten().copied().collect();
    p.extend_from_slice(&model.bias);
    p
}

fn unpack(model: &mut ClassifierModel, params: &[f64]) {
    for (k, row) in model.weights.iter_mut().enumerate() {
        row.copy_from_slice(&params[k * NUM_FEATURES..(k + 1) * NUM_FEATURES]);
    }
    model
        .bias
        .copy_from_slice(&params[NUM_CLASSES * NUM_FEATURES..]);
}

/// Mean cross-entropy `−log p[label]` over a batch of raw feature vectors.
pub fn batch_loss(model: &ClassifierModel, batch: &[(FeatureVector, u8)]) -> f64 {
    batch_loss_and_gradient(model, batch).0
}

/// Mean cross-entropy and its gradient, packed as the 20×18 weights
/// (row-major) followed by the 20 biases.
pub fn batch_loss_and_gradient(model: &ClassifierModel, batch: &[(FeatureVector, u8)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; NUM_PARAMS];
    let mut loss = 0.0;
    for (f, label) in batch {
        let z = model.standardize(f);
        let logits = model.logits_standardized(&z);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        loss += log_sum - logits[*label as usize];
        let p = softmax(&logits);
        for k in 0..NUM_CLASSES {
            let d = p[k] - if k == *label as usize { 1.0 } else { 0.0 };
            for j in 0..NUM_FEATURES {
                grad[k * NUM_FEATURES + j] += d * z[j];
            }
            grad[NUM_CLASSES * NUM_FEATURES + k] += d;
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Training loss of the initial model.
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
}

pub fn features_of(records: &[PatchRecord]) -> Result<Vec<(FeatureVector, u8)>> {
    par::map(records, |r| extract_features(&r.to_image()).map(|f| (f, r.label)))
        .into_iter()
        .collect()
}

fn mean_std(samples: &[(FeatureVector, u8)]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let mut mean = vec![0.0; NUM_FEATURES];
    for (f, _) in samples {
        for j in 0..NUM_FEATURES {
            mean[j] += f.0[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; NUM_FEATURES];
    for (f, _) in samples {
        for j in 0..NUM_FEATURES {
            std[j] += (f.0[j] - mean[j]).powi(2);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    (mean, std)
}

/// Weights `Σ⁻¹μₖ` and biases `−½μₖᵀΣ⁻¹μₖ + log πₖ` from the standardized
/// class means and the pooled within-class covariance.
fn lda_parameters(model: &mut ClassifierModel, samples: &[(FeatureVector, u8)]) -> Result<()> {
    let d = NUM_FEATURES;
    let mut means = vec![DVector::<f64>::zeros(d); NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    let standardized: Vec<(DVector<f64>, usize)> = samples
        .iter()
        .map(|(f, l)| (DVector::from_column_slice(&model.standardize(f)), *l as usize))
        .collect();
    for (z, l) in &standardized {
        means[*l] += z;
        counts[*l] += 1;
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        *m /= c as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (z, l) in &standardized {
        let r = z - &means[*l];
        cov += &r * r.transpose();
    }
    cov /= samples.len() as f64;
    // a constant feature leaves an empty row; the ridge keeps Σ definite
    let ridge = 1e-6 * cov.trace().max(1.0) / d as f64;
    cov += DMatrix::<f64>::identity(d, d) * ridge;
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Training("pooled covariance is not positive definite".into()))?;
    let n = samples.len() as f64;
    for k in 0..NUM_CLASSES {
        let w = chol.solve(&means[k]);
        model.weights[k].copy_from_slice(w.as_slice());
        model.bias[k] = -0.5 * w.dot(&means[k]) + (counts[k] as f64 / n).ln();
    }
    Ok(())
}

fn loss_and_accuracy(model: &ClassifierModel, samples: &[(FeatureVector, u8)]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (f, label) in samples {
        let logits = model.logits(f);
        let p = softmax(&logits);
        loss -= p[*label as usize].max(f64::MIN_POSITIVE).ln();
        if argmax(&logits) == *label {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Trains from precomputed features. `val` may be empty.
pub fn train_on_features(
    train: &[(FeatureVector, u8)],
    val: &[(FeatureVector, u8)],
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainingHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::domain("train split", "is empty"));
    }
    let mut seen = [false; NUM_CLASSES];
    for (_, l) in train {
        seen[*l as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::domain(
            "train split",
            format!("label {missing} has no samples"),
        ));
    }

    let (feature_mean, feature_std) = mean_std(train);
    let mut model = ClassifierModel {
        feature_mean,
        feature_std,
        metadata: cfg.clone(),
        ..ClassifierModel::zeros()
    };
    if cfg.init == Init::Lda {
        lda_parameters(&mut model, train)?;
    }
    let mut params = pack(&model);
    let mut adam = Adam::new(NUM_PARAMS, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainingHistory {
        initial_loss: loss_and_accuracy(&model, train).0,
        epochs: Vec::with_capacity(cfg.epochs),
    };

    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            let (loss, grad) = batch_loss_and_gradient(&model, &batch);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {b}"
                )));
            }
            adam.step(&mut params, &grad);
            unpack(&mut model, &params);
        }
        model.epochs_trained = epoch;
        let (train_loss, train_accuracy) = loss_and_accuracy(&model, train);
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = loss_and_accuracy(&model, val);
            (Some(l), Some(a))
        };
        log::debug!("epoch {epoch}: loss {train_loss:.4} acc {train_accuracy:.4}");
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok((model, history))
}

/// Extracts features for the train and validation splits and trains.
pub fn train(split: &DatasetSplit, cfg: &TrainConfig) -> Result<(ClassifierModel, TrainingHistory)> {
    if split.train.is_empty() {
        return Err(Error::domain("train split", "is empty"));
    }
    let train = features_of(&split.train)?;
    let val = features_of(&split.validation)?;
    train_on_features(&train, &val, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_samples(n: usize, seed: u64) -> Vec<(FeatureVector, u8)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = (i % NUM_CLASSES) as u8;
                let mut f = [0.0; NUM_FEATURES];
                for (j, v) in f.iter_mut().enumerate() {
                    *v = rng.gen_range(-1.0..1.0) + if j == label as usize % NUM_FEATURES { 3.0 } else { 0.0 };
                }
                f[17] += label as f64 * 0.5;
                (FeatureVector(f), label)
            })
            .collect()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(5, &cfg);
        let mut p = vec![0.5, -1.0, 2.0, 0.0, 3.25];
        let before = p.clone();
        adam.step(&mut p, &[0.0; 5]);
        assert_eq!(p, before);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        // m̂/√v̂ = sign(g) on step one, so each parameter moves by ≈ α;
        // ε̂ only matters when √(1−β₂)|g| is comparable to it.
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(3, &cfg);
        let mut p = vec![0.0; 3];
        let g = [2.0, -0.5, 1e-3];
        adam.step(&mut p, &g);
        for (v, g) in p.iter().zip(g) {
            let a = (0.001f64).sqrt() * g.abs();
            let expected = -0.001 * g.signum() * a / (a + 1e-8);
            assert!((v - expected).abs() < 1e-15, "{v} vs {expected}");
            assert!((v.abs() - 0.001).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let samples = toy_samples(5, 2);
        let mut model = ClassifierModel::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for w in model.weights.iter_mut().flatten() {
            *w = rng.gen_range(-0.5..0.5);
        }
        for b in model.bias.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        let (_, grad) = batch_loss_and_gradient(&model, &samples);
        let base = pack(&model);
        let h = 1e-5;
        for i in 0..NUM_PARAMS {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let mut mp = model.clone();
            unpack(&mut mp, &plus);
            let mut mm = model.clone();
            unpack(&mut mm, &minus);
            let fd = (batch_loss(&mp, &samples) - batch_loss(&mm, &samples)) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1e-8);
            assert!((grad[i] - fd).abs() / scale < 1e-4 || (grad[i] - fd).abs() < 1e-9, "param {i}: {} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn loss_is_batch_order_invariant() {
        let samples = toy_samples(40, 4);
        let mut model = ClassifierModel::zeros();
        model.weights[3][2] = 0.7;
        model.bias[5] = -0.2;
        let (l1, g1) = batch_loss_and_gradient(&model, &samples);
        let mut rev = samples.clone();
        rev.reverse();
        let (l2, g2) = batch_loss_and_gradient(&model, &rev);
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let train = toy_samples(400, 5);
        let val = toy_samples(100, 6);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 3,
            init: Init::Zero,
            ..Default::default()
        };
        let (model, hist) = train_on_features(&train, &val, &cfg).unwrap();
        assert!((hist.initial_loss - (NUM_CLASSES as f64).ln()).abs() < 1e-12);
        assert!(hist.epochs[0].train_loss < hist.initial_loss);
        assert_eq!(model.epochs_trained, 5);
        let (again, hist2) = train_on_features(&train, &val, &cfg).unwrap();
        assert_eq!(model, again);
        assert_eq!(hist, hist2);
    }

    #[test]
    fn lda_start_beats_uniform_and_parses() {
        let train = toy_samples(400, 5);
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (model, hist) = train_on_features(&train, &[], &cfg).unwrap();
        assert!(hist.initial_loss < 0.5 * (NUM_CLASSES as f64).ln(), "{}", hist.initial_loss);
        let (_, acc) = loss_and_accuracy(&model, &toy_samples(200, 8));
        assert!(acc > 0.9, "{acc}");
        assert_eq!("lda".parse::<Init>().unwrap(), Init::Lda);
        assert_eq!("zero".parse::<Init>().unwrap(), Init::Zero);
        assert!("xavier".parse::<Init>().is_err());
    }

    #[test]
    fn standardization_statistics() {
        let train = toy_samples(300, 8);
        let (mean, std) = mean_std(&train);
        for j in 0..NUM_FEATURES {
            let zs: Vec<f64> = train.iter().map(|(f, _)| (f.0[j] - mean[j]) / std[j]).collect();
            let m = zs.iter().sum::<f64>() / zs.len() as f64;
            let s = (zs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / zs.len() as f64).sqrt();
            assert!(m.abs() < 1e-9);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_empty_or_incomplete_training_set() {
        let cfg = TrainConfig::default();
        assert!(train_on_features(&[], &[], &cfg).is_err());
        let partial: Vec<_> = toy_samples(40, 1).into_iter().filter(|(_, l)| *l != 4).collect();
        assert!(train_on_features(&partial, &[], &cfg).is_err());
    }

    #[test]
    fn nan_features_abort_training() {
        let mut train = toy_samples(40, 1);
        train[3].0 .0[2] = f64::NAN;
        let err = train_on_features(&train, &[], &TrainConfig { epochs: 1, ..Default::default() });
        assert!(err.is_err());
    }
}
