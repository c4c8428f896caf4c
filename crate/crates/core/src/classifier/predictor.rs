//! Patch-level blur predictors consumed by the sliding-window estimator.

use std::collections::HashMap;
use std::path::Path;

use super::model::ClassifierModel;
use crate::imgcore::Image;
use crate::{Error, Result, NUM_CLASSES, PATCH_SIZE};

/// Anything that can assign a blur level to a 32×32 grayscale patch.
///
/// `origin` is the patch's top-left corner in the image being mapped; most
/// backends ignore it, lookup-based ones key on it.
pub trait BlurPredictor: Sync {
    fn predict(&self, patch: &Image, origin: (usize, usize)) -> Result<u8>;

    fn backend_id(&self) -> String;
}

impl BlurPredictor for ClassifierModel {
    fn predict(&self, patch: &Image, _origin: (usize, usize)) -> Result<u8> {
        ClassifierModel::predict(self, patch)
    }

    fn backend_id(&self) -> String {
        format!("softmax-spectral/{}ep", self.epochs_trained)
    }
}

/// Reads the true blur level from a per-pixel ground-truth raster (for
/// synthetic images): the rounded mean level under the window.
#[derive(Clone, Debug)]
pub struct GroundTruthPredictor {
    truth: Image,
}

impl GroundTruthPredictor {
    pub fn new(truth: Image) -> Result<Self> {
        truth.require_gray("ground truth")?;
        Ok(GroundTruthPredictor { truth })
    }
}

impl BlurPredictor for GroundTruthPredictor {
    fn predict(&self, _patch: &Image, (x, y): (usize, usize)) -> Result<u8> {
        let window = self.truth.crop(x, y, PATCH_SIZE, PATCH_SIZE)?;
        Ok(window.mean().round().clamp(0.0, (NUM_CLASSES - 1) as f64) as u8)
    }

    fn backend_id(&self) -> String {
        "ground-truth".into()
    }
}

/// Predictions produced elsewhere (e.g. by an external CNN) and imported from
/// CSV rows `source_id,x,y,label`.
#[derive(Clone, Debug)]
pub struct FilePredictor {
    source_id: String,
    table: HashMap<(usize, usize), u8>,
}

impl FilePredictor {
    /// Keeps the rows whose `source_id` matches.
    pub fn from_reader(reader: impl std::io::Read, source_id: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut table = HashMap::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != 4 {
                return Err(Error::format("predictions csv", format!("row {} has {} fields", line + 1, row.len())));
            }
            if line == 0 && row[1].parse::<usize>().is_err() {
                continue; // header
            }
            if &row[0] != source_id {
                continue;
            }
            let parse = |i: usize| {
                row[i].parse::<usize>().map_err(|_| {
                    Error::format("predictions csv", format!("row {}: bad field {:?}", line + 1, &row[i]))
                })
            };
            let (x, y, label) = (parse(1)?, parse(2)?, parse(3)?);
            if label >= NUM_CLASSES {
                return Err(Error::format("predictions csv", format!("row {}: label {label}", line + 1)));
            }
            table.insert((x, y), label as u8);
        }
        Ok(FilePredictor {
            source_id: source_id.to_owned(),
            table,
        })
    }

    pub fn from_path(path: impl AsRef<Path>, source_id: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, source_id)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl BlurPredictor for FilePredictor {
    fn predict(&self, _patch: &Image, origin: (usize, usize)) -> Result<u8> {
        self.table.get(&origin).copied().ok_or_else(|| {
            Error::Backend(format!(
                "no prediction for {} at ({}, {})",
                self.source_id, origin.0, origin.1
            ))
        })
    }

    fn backend_id(&self) -> String {
        format!("file/{}", self.source_id)
    }
}

/// Adapts a closure into a predictor.
pub struct FnPredictor<F>(pub F);

impl<F> BlurPredictor for FnPredictor<F>
where
    F: Fn(&Image, (usize, usize)) -> u8 + Sync,
{
    fn predict(&self, patch: &Image, origin: (usize, usize)) -> Result<u8> {
        Ok((self.0)(patch, origin))
    }

    fn backend_id(&self) -> String {
        "fn".into()
    }
}
