//! 20-class patch blur classifier.
//!
//! The reference backend is a softmax regression over radial power-spectrum
//! features, trained with Adam on mean cross-entropy. Any type implementing
//! [`BlurPredictor`] can stand in for it downstream.

mod eval;
mod features;
mod model;
mod predictor;
mod train;

pub use eval::{evaluate, ClassMetrics, EvalReport};
pub use features::{extract_features, radial_log_spectrum, FeatureVector, NUM_FEATURES, SPECTRUM_BINS};
pub use model::{argmax, softmax, ClassifierModel};
pub use predictor::{BlurPredictor, FilePredictor, FnPredictor, GroundTruthPredictor};
pub use train::{
    batch_loss, batch_loss_and_gradient, features_of, train, train_on_features, Adam, EpochStats, Init,
    TrainConfig, TrainingHistory, NUM_PARAMS,
};
