//! Dense blur maps from patch-level predictions.
//!
//! 32×32 windows are placed every `step` pixels along each axis, plus one
//! window flush with the right/bottom edge when the grid does not end there.
//! Each pixel's value is the mean prediction over the windows covering it.
//! Predictions are accumulated as integers and divided once, so the map does
//! not depend on the order in which windows are classified.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::BlurPredictor;
use crate::imgcore::{self, io, Image};
use crate::{par, Error, Result, MAX_LEVEL, PATCH_SIZE};

pub const DEFAULT_STEP: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct BlurMap {
    pub width: usize,
    pub height: usize,
    /// Row-major blur levels in `[0, 19]`.
    pub values: Vec<f64>,
    pub step: usize,
    pub backend_id: String,
}

impl BlurMap {
    pub fn from_image(img: &Image, step: usize, backend_id: impl Into<String>) -> Result<Self> {
        img.require_gray("blur map")?;
        Ok(BlurMap {
            width: img.width(),
            height: img.height(),
            values: img.data().to_vec(),
            step,
            backend_id: backend_id.into(),
        })
    }

    pub fn constant(width: usize, height: usize, level: f64) -> Self {
        BlurMap {
            width,
            height,
            values: vec![level; width * height],
            step: 0,
            backend_id: "constant".into(),
        }
    }

    pub fn to_image(&self) -> Image {
        Image::new(self.width, self.height, 1, self.values.clone()).expect("map shape")
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn require_size(&self, img: &Image) -> Result<()> {
        if self.width == img.width() && self.height == img.height() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "map {}x{} vs image {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            )))
        }
    }
}

fn validate_geometry(width: usize, height: usize, step: usize) -> Result<()> {
    if width < PATCH_SIZE || height < PATCH_SIZE {
        return Err(Error::domain(
            "image",
            format!("{width}x{height} is smaller than one 32x32 patch"),
        ));
    }
    if !(1..=PATCH_SIZE).contains(&step) {
        return Err(Error::domain("step", format!("{step} is not in 1..=32")));
    }
    Ok(())
}

/// Window start positions along an axis of length `len ≥ 32`.
pub fn window_origins(len: usize, step: usize) -> Vec<usize> {
    let last = len - PATCH_SIZE;
    let mut out: Vec<usize> = (0..=last).step_by(step).collect();
    if *out.last().expect("len >= 32") != last {
        out.push(last);
    }
    out
}

/// All window origins `(x, y)` in raster order.
pub fn windows(width: usize, height: usize, step: usize) -> Result<Vec<(usize, usize)>> {
    validate_geometry(width, height, step)?;
    let xs = window_origins(width, step);
    let ys = window_origins(height, step);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

/// Adds `value` over every window footprint via a 2-D difference table.
fn accumulate(width: usize, height: usize, items: impl Iterator<Item = ((usize, usize), i64)>) -> Vec<i64> {
    let stride = width + 1;
    let mut diff = vec![0i64; stride * (height + 1)];
    for ((x, y), v) in items {
        let (x1, y1) = (x + PATCH_SIZE, y + PATCH_SIZE);
        diff[y * stride + x] += v;
        diff[y * stride + x1] -= v;
        diff[y1 * stride + x] -= v;
        diff[y1 * stride + x1] += v;
    }
    for y in 0..=height {
        for x in 1..=width {
            diff[y * stride + x] += diff[y * stride + x - 1];
        }
    }
    for y in 1..=height {
        for x in 0..=width {
            diff[y * stride + x] += diff[(y - 1) * stride + x];
        }
    }
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        out.extend_from_slice(&diff[y * stride..y * stride + width]);
    }
    out
}

/// Number of windows covering each pixel, row-major.
pub fn coverage_count(width: usize, height: usize, step: usize) -> Result<Vec<u32>> {
    let wins = windows(width, height, step)?;
    Ok(accumulate(width, height, wins.into_iter().map(|o| (o, 1)))
        .into_iter()
        .map(|c| c as u32)
        .collect())
}

/// Classifies every window with `backend` and averages the predictions per
/// pixel. Color input is converted to luma first.
pub fn estimate_map(img: &Image, backend: &dyn BlurPredictor, step: usize) -> Result<BlurMap> {
    let gray = imgcore::to_grayscale(img);
    let (w, h) = (gray.width(), gray.height());
    let wins = windows(w, h, step)?;
    let labels: Vec<u8> = par::map(&wins, |&(x, y)| {
        let patch = gray.crop(x, y, PATCH_SIZE, PATCH_SIZE)?;
        let label = backend.predict(&patch, (x, y))?;
        if label as f64 > MAX_LEVEL {
            return Err(Error::Backend(format!("label {label} out of range at ({x}, {y})")));
        }
        Ok(label)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let sums = accumulate(w, h, wins.iter().copied().zip(labels.iter().map(|&l| l as i64)));
    let counts = accumulate(w, h, wins.iter().map(|&o| (o, 1)));
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| s as f64 / c as f64)
        .collect();
    Ok(BlurMap {
        width: w,
        height: h,
        values,
        step,
        backend_id: backend.backend_id(),
    })
}

/// Expected processing time `T · N / s²` for `N` pixels at step `s`.
pub fn predict_runtime(seconds_per_patch: f64, pixels: u64, step: u64) -> f64 {
    seconds_per_patch * pixels as f64 / (step * step) as f64
}

/// Classical per-pixel sharpness statistics. All three grow with sharpness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassicalMethod {
    /// Shannon entropy (bits) of the 256-bin intensity histogram.
    Entropy,
    /// Standard deviation of intensity.
    StdDev,
    /// Variance of the 4-neighbour Laplacian.
    VarLaplacian,
}

impl FromStr for ClassicalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "entropy" => Ok(ClassicalMethod::Entropy),
            "stddev" | "std-dev" | "std" => Ok(ClassicalMethod::StdDev),
            "var-laplacian" | "varlaplacian" | "laplacian" => Ok(ClassicalMethod::VarLaplacian),
            other => Err(Error::domain(
                "method",
                format!("unknown classical method {other:?} (entropy, stddev, var-laplacian)"),
            )),
        }
    }
}

pub const DEFAULT_CLASSICAL_WINDOW: usize = 16;

/// Window extent before/after the centre pixel; even windows put the extra
/// pixel before the centre.
pub fn window_extent(window: usize) -> (usize, usize) {
    let before = window / 2;
    (before, window - 1 - before)
}

fn windowed_variance(img: &Image, window: usize) -> Image {
    let (before, after) = window_extent(window);
    let n = (window * window) as f64;
    // Centering first makes constant inputs yield exact zeros.
    let mean = img.mean();
    let centred = img.map(|v| v - mean);
    let sum = imgcore::window_sum(&centred, before, after);
    let sum_sq = imgcore::window_sum(&centred.map(|v| v * v), before, after);
    sum.zip_map(&sum_sq, |s, q| {
        let m = s / n;
        (q / n - m * m).max(0.0)
    })
    .expect("same shape")
}

fn windowed_entropy(img: &Image, window: usize) -> Image {
    let (before, after) = window_extent(window);
    let (w, h) = (img.width(), img.height());
    let bins: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let n = (window * window) as f64;
    let clamp = |i: isize, len: usize| i.clamp(0, len as isize - 1) as usize;
    let mut out = img.zeros_like();
    par::for_each_row(out.data_mut(), w, |y, row| {
        let rows: Vec<usize> = (0..window)
            .map(|k| clamp(y as isize + k as isize - before as isize, h))
            .collect();
        let mut hist = [0u32; 256];
        let column = |x: usize, hist: &mut [u32; 256], add: bool| {
            for &r in &rows {
                let b = bins[r * w + x] as usize;
                if add {
                    hist[b] += 1;
                } else {
                    hist[b] -= 1;
                }
            }
        };
        for k in 0..window {
            column(clamp(k as isize - before as isize, w), &mut hist, true);
        }
        for x in 0..w {
            if x > 0 {
                column(clamp(x as isize - 1 - before as isize, w), &mut hist, false);
                column(clamp(x as isize + after as isize, w), &mut hist, true);
            }
            row[x] = hist
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n;
                    -p * p.log2()
                })
                .sum::<f64>()
                .max(0.0);
        }
    });
    let _ = after;
    out
}

/// Raw classical statistic over a `window`×`window` neighbourhood of each
/// pixel (replicated borders). Values are not mapped to blur levels.
pub fn classical_map(img: &Image, method: ClassicalMethod, window: usize) -> Result<Image> {
    if window == 0 {
        return Err(Error::domain("window", "must be positive"));
    }
    let gray = imgcore::to_grayscale(img);
    Ok(match method {
        ClassicalMethod::Entropy => windowed_entropy(&gray, window),
        ClassicalMethod::StdDev => windowed_variance(&gray, window).map(f64::sqrt),
        ClassicalMethod::VarLaplacian => windowed_variance(&imgcore::laplacian(&gray)?, window),
    })
}

/// Metadata written next to a persisted map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub width: usize,
    pub height: usize,
    pub step: usize,
    pub backend: String,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_sha256: Option<String>,
}

pub fn sidecar_path(map_path: impl AsRef<Path>) -> PathBuf {
    map_path.as_ref().with_extension("json")
}

/// 16-bit PGM with sample `round(M / 19 · 65535)`.
pub fn encode_map(map: &BlurMap) -> Result<Vec<u8>> {
    io::encode_pgm16(&map.to_image().map(|v| v / MAX_LEVEL))
}

pub fn decode_map(bytes: &[u8]) -> Result<Image> {
    let img = io::decode(bytes)?;
    img.require_gray("map file")?;
    Ok(img.map(|v| v * MAX_LEVEL))
}

pub fn sidecar_for(map: &BlurMap, guidance_sha256: Option<String>) -> MapSidecar {
    let (min, max) = map.min_max();
    MapSidecar {
        width: map.width,
        height: map.height,
        step: map.step,
        backend: map.backend_id.clone(),
        min,
        max,
        guidance_sha256,
    }
}

/// Writes the 16-bit map and its JSON sidecar.
pub fn write_map(path: impl AsRef<Path>, map: &BlurMap, guidance_sha256: Option<String>) -> Result<()> {
    let path = path.as_ref();
    io::write_atomic(path, &encode_map(map)?)?;
    let side = serde_json::to_vec_pretty(&sidecar_for(map, guidance_sha256))?;
    io::write_atomic(sidecar_path(path), &side)
}

/// Reads a map written by [`write_map`]. The sidecar is optional.
pub fn read_map(path: impl AsRef<Path>) -> Result<BlurMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = decode_map(&bytes)?;
    let side = sidecar_path(path);
    let (step, backend) = match std::fs::read(&side) {
        Ok(b) => {
            let s: MapSidecar = serde_json::from_slice(&b)?;
            (s.step, s.backend)
        }
        Err(_) => (0, "file".to_string()),
    };
    BlurMap::from_image(&img, step, backend)
}
