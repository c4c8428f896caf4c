//! Single-image defocus blur estimation.
//!
//! Patches of 32×32 pixels are classified into 20 Gaussian blur levels
//! (σ = 0..19), the patch decisions are spread back to pixels with an
//! overlapping sliding window, and the resulting map is refined with a
//! weighted guided filter steered by an edge-preserving smoothed copy of the
//! input. The refined map then drives adaptive sharpening, synthetic shallow
//! depth of field and multi-focus fusion.
//!
//! Module map:
//!
//! * [`imgcore`]: raster type, Gaussian/box/Laplacian filtering, image I/O,
//!   circle-of-confusion helper.
//! * [`dataset`]: sharp-patch mining, 20-class synthesis, splits, persistence.
//! * [`classifier`]: spectral features, softmax model trained with Adam,
//!   evaluation, pluggable predictors.
//! * [`blurmap`]: sliding-window aggregation, classical baseline maps.
//! * [`refine`]: guided and weighted guided filters, map refinement.
//! * [`apps`]: adaptive unsharp masking, shallow depth of field, fusion.
//!
//! With the default `parallel` feature, row and patch loops run on rayon.
//! Every parallel loop writes disjoint outputs or collects in index order, so
//! results are bit-identical to a build with `--no-default-features`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod apps;
pub mod blurmap;
pub mod classifier;
pub mod corpus;
pub mod dataset;
mod error;
pub mod imgcore;
pub mod par;
pub mod refine;

pub use error::{Error, Result};
pub use imgcore::Image;

/// Side length of the square patches fed to the classifier.
pub const PATCH_SIZE: usize = 32;

/// Number of blur classes (σ = 0, 1, …, 19).
pub const NUM_CLASSES: usize = 20;

/// Largest blur level, `NUM_CLASSES - 1`.
pub const MAX_LEVEL: f64 = (NUM_CLASSES - 1) as f64;
