//! Builds the desk dataset, trains the reference model and prints test metrics.
//!
//! cargo run --release -p defocus-core --example desk_training -- [epochs] [seed] [lda|zero]

use std::time::Instant;

use defocus_core::classifier::{evaluate, train, Init, TrainConfig};
use defocus_core::corpus::desk_corpus;
use defocus_core::dataset::{generate, GenerateConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let init: Init = args.next().map(|s| s.parse()).transpose()?.unwrap_or_default();

    let t0 = Instant::now();
    let corpus = desk_corpus(seed);
    let (split, manifest) = generate(&corpus, &GenerateConfig { seed, ..Default::default() })?;
    println!(
        "dataset: {} sharp patches, {}/{}/{} records ({:.2?})",
        manifest.sharp_patches,
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        t0.elapsed()
    );

    let t1 = Instant::now();
    let (model, history) = train(&split, &TrainConfig { epochs, seed, init, ..Default::default() })?;
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "trained {epochs} epochs in {:.2?}: loss {:.4} -> {:.4}, train acc {:.4}, val acc {:?}",
        t1.elapsed(),
        history.initial_loss,
        last.train_loss,
        last.train_accuracy,
        last.val_accuracy
    );

    let report = evaluate(&model, &split.test)?;
    println!(
        "test: top-1 {:.4}, within ±1 {:.4}, within ±2 {:.4}",
        report.accuracy,
        report.accuracy_within(1),
        report.accuracy_within(2)
    );
    for (k, c) in report.per_class.iter().enumerate() {
        println!("  class {k:2}: recall {:.3} precision {:.3} support {}", c.recall, c.precision, c.support);
    }
    Ok(())
}
