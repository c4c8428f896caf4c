use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use defocus_core::blurmap::ClassicalMethod;
use defocus_core::classifier::Init;
use serde::Serialize;

const PROVENANCE: &str = "\
Defaults marked (reference) are the method's standard settings; defaults \
marked (chosen) were picked for this implementation and are explained in the \
README.";

#[derive(Debug, Parser)]
#[command(
    name = "defocus",
    version,
    about = "Defocus blur maps from a single image, and what to do with them",
    after_help = PROVENANCE
)]
pub struct Cli {
    /// Worker threads [default: all cores]. Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// TOML file of argument defaults: top-level keys and a table per
    /// subcommand (e.g. [train], [dataset.generate]). Explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more (-v info, -vv debug) to stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or export patch datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train the spectral softmax classifier.
    #[command(after_help = PROVENANCE)]
    Train(TrainArgs),
    /// Accuracy, per-class metrics and confusion matrix on a dataset split.
    Evaluate(EvaluateArgs),
    /// Sliding-window blur map of an image.
    #[command(after_help = PROVENANCE)]
    Map(MapArgs),
    /// Classical sharpness statistic (entropy, std-dev, variance of Laplacian).
    #[command(after_help = PROVENANCE)]
    ClassicalMap(ClassicalArgs),
    /// Edge-aware refinement of a blur map against its image.
    #[command(after_help = PROVENANCE)]
    Refine(RefineArgs),
    /// In-focus mask: 0 where the map is at most --lambda, 1 elsewhere.
    #[command(after_help = PROVENANCE)]
    Binary(BinaryArgs),
    /// Adaptive unsharp masking driven by the blur map.
    #[command(after_help = PROVENANCE)]
    Enhance(EnhanceArgs),
    /// Synthetic shallow depth of field.
    #[command(after_help = PROVENANCE)]
    Sdof(SdofArgs),
    /// Multi-focus fusion of registered images.
    #[command(after_help = PROVENANCE)]
    Fuse(FuseArgs),
    /// Thin-lens circle-of-confusion diameter.
    Coc(CocArgs),
    /// Expected sliding-window runtime for an image size and step.
    #[command(after_help = PROVENANCE)]
    PredictRuntime(RuntimeArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Mine sharp patches and synthesize the 20 blur classes.
    #[command(after_help = PROVENANCE)]
    Generate(GenerateArgs),
    /// Write the built-in procedural texture corpus as PNG files.
    Corpus(CorpusArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Directory of source images (.png, .pgm).
    #[arg(long, value_name = "DIR", required_unless_present = "corpus", conflicts_with = "corpus")]
    pub input: Option<PathBuf>,
    /// Use the built-in 20-texture corpus instead of --input.
    #[arg(long)]
    pub corpus: bool,
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Variance-of-Laplacian threshold for sharp patches (reference).
    #[arg(long, default_value_t = 1000.0)]
    pub threshold: f64,
    /// Split shuffle seed, also seeds the built-in corpus.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train/validation/test fractions (reference).
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.72, 0.18, 0.10])]
    pub ratios: Vec<f64>,
    /// Gaussian noise added after blurring; 0 disables it (chosen).
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusArgs {
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of textures to write.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..=20))]
    pub count: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch loss and accuracy as JSON.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Passes over the training split (chosen).
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Shuffle seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mini-batch size (reference).
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Adam step size (reference).
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Adam first-moment decay (reference).
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    /// Adam second-moment decay (reference).
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    /// Adam denominator offset (reference).
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Starting point: lda (class-mean discriminant) or zero (chosen).
    #[arg(long, default_value = "lda")]
    pub init: Init,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Split to score: train, validation or test.
    #[arg(long, default_value = "test", value_parser = ["train", "validation", "test"])]
    pub split: String,
    /// Full report (per-class metrics, confusion matrix) as JSON.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

/// Where patch predictions come from.
#[derive(Debug, Args, Serialize)]
#[group(id = "predictor", required = true, multiple = false)]
pub struct PredictorArgs {
    /// Trained model (model.json).
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// External predictions, CSV rows `source_id,x,y,label` keyed by the
    /// input's file name.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MapArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// Sliding-window step in pixels (reference).
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..=32))]
    pub step: u64,
    /// Map file (16-bit PGM, M/19 scaled to 65535) plus a JSON sidecar.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassicalArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, default_value = "var-laplacian")]
    pub method: ClassicalMethod,
    /// Neighbourhood side in pixels (chosen).
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub window: u64,
    /// Statistic divided by its maximum, written as an image.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Guided-filter settings for guidance construction and map refinement.
#[derive(Clone, Copy, Debug, Args, Serialize)]
pub struct RefineKnobs {
    /// Window radius (reference).
    #[arg(long = "refine-r", default_value_t = 16)]
    pub refine_r: usize,
    /// Regularization on the [0,1] scale (reference).
    #[arg(long = "refine-eps", default_value_t = 0.005)]
    pub refine_eps: f64,
    /// Self-guided passes that build the guidance image (reference).
    #[arg(long = "refine-iters", default_value_t = 7)]
    pub refine_iters: usize,
    /// Filtering passes over the map itself (chosen).
    #[arg(long = "refine-passes", default_value_t = 1)]
    pub refine_passes: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct RefineArgs {
    /// Raw map written by `defocus map`.
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    /// The image the map was estimated from.
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    /// Window radius (reference).
    #[arg(long, default_value_t = 16)]
    pub r: usize,
    /// Regularization on the [0,1] scale (reference).
    #[arg(long, default_value_t = 0.005)]
    pub eps: f64,
    /// Self-guided passes that build the guidance image (reference).
    #[arg(long, default_value_t = 7)]
    pub iters: usize,
    /// Filtering passes over the map itself (chosen).
    #[arg(long, default_value_t = 1)]
    pub passes: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the guidance image here.
    #[arg(long, value_name = "DIR")]
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BinaryArgs {
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    /// Largest blur level still counted as in focus (reference).
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Map for an application: estimated and refined on the fly, or read from
/// a file.
#[derive(Debug, Args, Serialize)]
#[group(id = "map_source", required = true, multiple = false)]
pub struct AppMapArgs {
    /// Trained model (model.json).
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// External predictions CSV keyed by the input's file name.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Precomputed (normally refined) map; skips estimation and refinement.
    #[arg(long, value_name = "FILE")]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnhanceArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[command(flatten)]
    pub source: AppMapArgs,
    /// Sliding-window step (reference).
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..=32))]
    pub step: u64,
    #[command(flatten)]
    pub refine: RefineKnobs,
    /// Slope of the rising gain sigmoid (reference).
    #[arg(long, default_value_t = 46.0)]
    pub a1: f64,
    /// Centre of the rising sigmoid on the normalised map (reference).
    #[arg(long, default_value_t = 0.1)]
    pub b1: f64,
    /// Slope of the falling gain sigmoid (reference).
    #[arg(long, default_value_t = 183.0)]
    pub a2: f64,
    /// Centre of the falling sigmoid on the normalised map (reference).
    #[arg(long, default_value_t = 0.27)]
    pub b2: f64,
    /// Maximum gain (reference).
    #[arg(long, default_value_t = 2.0)]
    pub lmax: f64,
    /// Unsharp-mask blur sigma (chosen).
    #[arg(long, default_value_t = 2.0)]
    pub sigma_um: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Write raw/refined maps, guidance and gain map here.
    #[arg(long, value_name = "DIR")]
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SdofArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[command(flatten)]
    pub source: AppMapArgs,
    /// Sliding-window step (reference).
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..=32))]
    pub step: u64,
    #[command(flatten)]
    pub refine: RefineKnobs,
    /// Blur level that keeps the sharpened image (reference).
    #[arg(long, default_value_t = 1.0)]
    pub c0: f64,
    /// Blur level that gets the smoothed image (reference).
    #[arg(long, default_value_t = 7.0)]
    pub c1: f64,
    /// Sharp-layer weight at c0 (reference).
    #[arg(long, default_value_t = 0.999)]
    pub w0: f64,
    /// Sharp-layer weight at c1 (reference).
    #[arg(long, default_value_t = 0.001)]
    pub w1: f64,
    /// Background smoothing radius (reference).
    #[arg(long, default_value_t = 33)]
    pub smooth_r: usize,
    /// Background smoothing regularization, 128 on the 8-bit squared scale (reference).
    #[arg(long, default_value_t = 128.0 / (255.0 * 255.0))]
    pub smooth_eps: f64,
    /// Self-guided smoothing passes (reference).
    #[arg(long, default_value_t = 5)]
    pub smooth_iters: usize,
    /// Unsharp gain of the foreground layer (reference).
    #[arg(long, default_value_t = 0.25)]
    pub sharpen: f64,
    /// Unsharp-mask blur sigma (chosen).
    #[arg(long, default_value_t = 2.0)]
    pub sigma_um: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Write maps, guidance, weight and both layers here.
    #[arg(long, value_name = "DIR")]
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FuseArgs {
    /// Registered images of the same scene.
    #[arg(long, value_name = "FILE", num_args = 2.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Trained model (model.json).
    #[arg(
        long,
        value_name = "FILE",
        required_unless_present_any = ["predictions", "maps"],
        conflicts_with_all = ["predictions", "maps"]
    )]
    pub model: Option<PathBuf>,
    /// External predictions CSV keyed by each input's file name.
    #[arg(long, value_name = "FILE", conflicts_with = "maps")]
    pub predictions: Option<PathBuf>,
    /// One precomputed map per input, in the same order.
    #[arg(long, value_name = "FILE", num_args = 2..)]
    pub maps: Option<Vec<PathBuf>>,
    /// Sliding-window step (reference).
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..=32))]
    pub step: u64,
    #[command(flatten)]
    pub refine: RefineKnobs,
    /// Decision-map guided filter radius (reference).
    #[arg(long, default_value_t = 7)]
    pub r: usize,
    /// Decision-map guided filter regularization (reference).
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Weight floor that keeps the normalisation finite (reference).
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Write maps, decision maps and weights here.
    #[arg(long, value_name = "DIR")]
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CocArgs {
    /// Focal length f in mm.
    #[arg(long)]
    pub focal_length: f64,
    /// Aperture diameter A in mm.
    #[arg(long)]
    pub aperture: f64,
    /// Distance S1 of the plane in focus, mm.
    #[arg(long)]
    pub focus_distance: f64,
    /// Distance S2 of the object, mm.
    #[arg(long)]
    pub object_distance: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct RuntimeArgs {
    /// Seconds to classify one patch.
    #[arg(long)]
    pub seconds_per_patch: f64,
    /// Pixel count N.
    #[arg(long, required_unless_present = "width", conflicts_with_all = ["width", "height"])]
    pub pixels: Option<u64>,
    #[arg(long, requires = "height")]
    pub width: Option<u64>,
    #[arg(long, requires = "width")]
    pub height: Option<u64>,
    /// Sliding-window step (reference).
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub step: u64,
}
