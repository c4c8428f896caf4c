//! Training data: sharp-patch mining, 20-level blur synthesis, splitting and
//! the on-disk record format.
//!
//! A dataset directory holds `manifest.json` plus `train.bin`,
//! `validation.bin` and `test.bin`. Each `.bin` file is a plain concatenation
//! of little-endian records:
//!
//! ```text
//! u16 width (=32) | u16 height (=32) | u8 label | 1024 × f32 pixels
//! u32 source_id byte length | utf-8 source_id | u32 x | u32 y
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imgcore::{self, io, Image};
use crate::{par, Error, Result, NUM_CLASSES, PATCH_SIZE};

pub const SCHEMA_VERSION: u32 = 1;

/// Default sharpness threshold on the 0–255 scale.
pub const DEFAULT_THRESHOLD: f64 = 1000.0;

/// Default (train, validation, test) proportions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.72, 0.18, 0.10];

/// Context needed on each side of a patch so the widest kernel (σ = 19,
/// radius ceil(3·19)) never reaches a replicated border.
pub const CONTEXT_MARGIN: usize = 57;

const PATCH_PIXELS: usize = PATCH_SIZE * PATCH_SIZE;

/// One labelled 32×32 grayscale patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchRecord {
    pub pixels: Vec<f32>,
    pub label: u8,
    pub source_id: String,
    /// Top-left corner of the patch in the source image.
    pub origin: (u32, u32),
    /// Set when the blur had to rely on replicated borders because the
    /// source lacked [`CONTEXT_MARGIN`] pixels around the patch. Not
    /// persisted in the record files; summarized in the manifest.
    pub replicated_border: bool,
}

impl PatchRecord {
    pub fn new(pixels: Vec<f32>, label: u8, source_id: impl Into<String>, origin: (u32, u32)) -> Result<Self> {
        if pixels.len() != PATCH_PIXELS {
            return Err(Error::Dimension(format!(
                "patch has {} pixels, expected {PATCH_PIXELS}",
                pixels.len()
            )));
        }
        if label as usize >= NUM_CLASSES {
            return Err(Error::domain("label", format!("{label} is not in 0..=19")));
        }
        Ok(PatchRecord {
            pixels,
            label,
            source_id: source_id.into(),
            origin,
            replicated_border: false,
        })
    }

    pub fn to_image(&self) -> Image {
        let data = self.pixels.iter().map(|&v| v as f64).collect();
        Image::new(PATCH_SIZE, PATCH_SIZE, 1, data).expect("record is 32x32")
    }

    /// Identity of the sharp patch this record was synthesized from.
    pub fn key(&self) -> (&str, (u32, u32)) {
        (&self.source_id, self.origin)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<PatchRecord>,
    pub validation: Vec<PatchRecord>,
    pub test: Vec<PatchRecord>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parts(&self) -> [(&'static str, &[PatchRecord]); 3] {
        [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ]
    }
}

fn require_patch(patch: &Image) -> Result<()> {
    patch.require_gray("patch")?;
    if patch.width() != PATCH_SIZE || patch.height() != PATCH_SIZE {
        return Err(Error::domain(
            "patch",
            format!(
                "expected {PATCH_SIZE}x{PATCH_SIZE}, got {}x{}",
                patch.width(),
                patch.height()
            ),
        ));
    }
    Ok(())
}

/// Variance of the Laplacian of the 3×3-smoothed patch, on the 0–255 scale.
pub fn sharpness_score(patch: &Image) -> Result<f64> {
    require_patch(patch)?;
    let scaled = patch.map(|v| v * 255.0);
    let lap = imgcore::laplacian(&imgcore::gaussian_3x3(&scaled))?;
    Ok(lap.variance())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinedPatch {
    pub patch: Image,
    pub origin: (usize, usize),
}

/// Tiles the grayscale version of `img` into non-overlapping 32×32 patches
/// and keeps those scoring strictly above `threshold`, in raster order.
pub fn mine_sharp_patches(img: &Image, threshold: f64) -> Vec<MinedPatch> {
    let gray = imgcore::to_grayscale(img);
    let tiles_x = gray.width() / PATCH_SIZE;
    let tiles_y = gray.height() / PATCH_SIZE;
    let origins: Vec<(usize, usize)> = (0..tiles_y)
        .flat_map(|ty| (0..tiles_x).map(move |tx| (tx * PATCH_SIZE, ty * PATCH_SIZE)))
        .collect();
    origins
        .into_iter()
        .filter_map(|(x, y)| {
            let patch = gray.crop(x, y, PATCH_SIZE, PATCH_SIZE).expect("tile in bounds");
            let score = sharpness_score(&patch).expect("tile is 32x32");
            (score > threshold).then_some(MinedPatch {
                patch,
                origin: (x, y),
            })
        })
        .collect()
}

/// Optional sensor-noise term added after blurring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub std: f64,
    pub seed: u64,
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn blurred_level(img: &Image, level: usize, noise: Option<NoiseConfig>, salt: u64) -> Result<Image> {
    match noise {
        Some(n) if n.std > 0.0 => {
            imgcore::blur_image_noisy(img, level as f64, n.std, mix_seed(&[n.seed, salt, level as u64]))
        }
        _ => imgcore::blur_image(img, level as f64),
    }
}

fn to_pixels(img: &Image) -> Vec<f32> {
    img.data().iter().map(|&v| v as f32).collect()
}

/// Blurs a lone sharp patch at σ = 0..19. Borders are replicated, so every
/// blurred record carries the `replicated_border` flag.
pub fn synthesize_classes(
    sharp: &Image,
    source_id: &str,
    origin: (u32, u32),
    noise: Option<NoiseConfig>,
) -> Result<Vec<PatchRecord>> {
    require_patch(sharp)?;
    (0..NUM_CLASSES)
        .map(|level| {
            let blurred = blurred_level(sharp, level, noise, 0)?;
            let mut rec = PatchRecord::new(to_pixels(&blurred), level as u8, source_id, origin)?;
            rec.replicated_border = level > 0;
            Ok(rec)
        })
        .collect()
}

/// Blurs the whole grayscale `source` at σ = 0..19 and crops every origin out
/// of each level.
///
/// The blur of a pixel only reads its ±ceil(3σ) neighbourhood, so cropping a
/// blurred full frame equals blurring a context window around the patch and
/// cropping its centre. Patches closer than [`CONTEXT_MARGIN`] to the frame
/// edge are flagged. Output order: origin-major, then label 0..19.
pub fn synthesize_from_source(
    source: &Image,
    source_id: &str,
    origins: &[(usize, usize)],
    noise: Option<NoiseConfig>,
    salt: u64,
) -> Result<Vec<PatchRecord>> {
    let gray = imgcore::to_grayscale(source);
    for &(x, y) in origins {
        if x + PATCH_SIZE > gray.width() || y + PATCH_SIZE > gray.height() {
            return Err(Error::domain("origin", format!("({x}, {y}) leaves the image")));
        }
    }
    let levels: Vec<Image> = par::map_range(NUM_CLASSES, |level| blurred_level(&gray, level, noise, salt))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(origins.len() * NUM_CLASSES);
    for &(x, y) in origins {
        let lacks_context = x < CONTEXT_MARGIN
            || y < CONTEXT_MARGIN
            || x + PATCH_SIZE + CONTEXT_MARGIN > gray.width()
            || y + PATCH_SIZE + CONTEXT_MARGIN > gray.height();
        for (level, img) in levels.iter().enumerate() {
            let crop = img.crop(x, y, PATCH_SIZE, PATCH_SIZE)?;
            let mut rec = PatchRecord::new(to_pixels(&crop), level as u8, source_id, (x as u32, y as u32))?;
            rec.replicated_border = lacks_context && level > 0;
            records.push(rec);
        }
    }
    Ok(records)
}

fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::domain("ratios", format!("{ratios:?} must all be positive")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::domain("ratios", format!("{ratios:?} sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Splits records by source patch so all blur variants of one sharp patch
/// land in the same split. Deterministic for a given seed.
pub fn split_dataset(records: Vec<PatchRecord>, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    validate_ratios(ratios)?;

    let mut group_of: HashMap<(String, (u32, u32)), usize> = HashMap::new();
    let mut assignment: Vec<usize> = Vec::with_capacity(records.len());
    for rec in &records {
        let next = group_of.len();
        let g = *group_of
            .entry((rec.source_id.clone(), rec.origin))
            .or_insert(next);
        assignment.push(g);
    }
    let n = group_of.len();

    let mut n_train = (ratios[0] * n as f64).round() as usize;
    let mut n_val = (ratios[1] * n as f64).round() as usize;
    n_train = n_train.min(n);
    n_val = n_val.min(n - n_train);
    if n >= 3 {
        // keep every split populated
        n_train = n_train.clamp(1, n - 2);
        n_val = n_val.clamp(1, n - n_train - 1);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut part_of_group = vec![2u8; n];
    for (rank, &g) in order.iter().enumerate() {
        part_of_group[g] = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
    }

    let mut split = DatasetSplit {
        seed,
        ..Default::default()
    };
    for (rec, g) in records.into_iter().zip(assignment) {
        match part_of_group[g] {
            0 => split.train.push(rec),
            1 => split.validation.push(rec),
            _ => split.test.push(rec),
        }
    }
    Ok(split)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub threshold: f64,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub noise_std: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            ratios: DEFAULT_RATIOS,
            noise_std: 0.0,
        }
    }
}

/// Per-label record counts for each split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub threshold: f64,
    pub noise_std: f64,
    pub source_images: usize,
    pub sharp_patches: usize,
    pub replicated_border_records: usize,
    pub counts: SplitCounts,
}

fn label_counts(records: &[PatchRecord]) -> Vec<usize> {
    let mut counts = vec![0; NUM_CLASSES];
    for r in records {
        counts[r.label as usize] += 1;
    }
    counts
}

impl Manifest {
    pub fn describe(split: &DatasetSplit, cfg: &GenerateConfig, source_images: usize) -> Self {
        let all = || split.train.iter().chain(&split.validation).chain(&split.test);
        Manifest {
            schema_version: SCHEMA_VERSION,
            seed: cfg.seed,
            ratios: cfg.ratios,
            threshold: cfg.threshold,
            noise_std: cfg.noise_std,
            source_images,
            sharp_patches: all().filter(|r| r.label == 0).count(),
            replicated_border_records: all().filter(|r| r.replicated_border).count(),
            counts: SplitCounts {
                train: label_counts(&split.train),
                validation: label_counts(&split.validation),
                test: label_counts(&split.test),
            },
        }
    }
}

/// Mines and synthesizes every `(source_id, image)` pair, then splits.
pub fn generate(images: &[(String, Image)], cfg: &GenerateConfig) -> Result<(DatasetSplit, Manifest)> {
    validate_ratios(cfg.ratios)?;
    let noise = (cfg.noise_std > 0.0).then_some(NoiseConfig {
        std: cfg.noise_std,
        seed: cfg.seed,
    });
    let per_image: Vec<Result<Vec<PatchRecord>>> = par::map_range(images.len(), |i| {
        let (id, img) = &images[i];
        let origins: Vec<_> = mine_sharp_patches(img, cfg.threshold)
            .into_iter()
            .map(|m| m.origin)
            .collect();
        synthesize_from_source(img, id, &origins, noise, i as u64)
    });
    let mut records = Vec::new();
    for r in per_image {
        records.extend(r?);
    }
    log::info!("synthesized {} records from {} images", records.len(), images.len());
    let split = split_dataset(records, cfg.ratios, cfg.seed)?;
    let manifest = Manifest::describe(&split, cfg, images.len());
    Ok((split, manifest))
}

/// Image files (`.png`, `.pgm`) directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every image in `dir` keyed by file name and runs [`generate`].
pub fn generate_from_dir(dir: impl AsRef<Path>, cfg: &GenerateConfig) -> Result<(DatasetSplit, Manifest)> {
    let paths = list_images(dir)?;
    let images = paths
        .iter()
        .map(|p| {
            let id = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, io::read_image(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    generate(&images, cfg)
}

pub fn encode_records(records: &[PatchRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * (5 + 4 * PATCH_PIXELS + 32));
    for r in records {
        out.extend_from_slice(&(PATCH_SIZE as u16).to_le_bytes());
        out.extend_from_slice(&(PATCH_SIZE as u16).to_le_bytes());
        out.push(r.label);
        for &p in &r.pixels {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&(r.source_id.len() as u32).to_le_bytes());
        out.extend_from_slice(r.source_id.as_bytes());
        out.extend_from_slice(&r.origin.0.to_le_bytes());
        out.extend_from_slice(&r.origin.1.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format("record file", format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<PatchRecord>> {
    let mut rd = Reader { bytes, pos: 0 };
    let mut out = Vec::new();
    while rd.pos < bytes.len() {
        let (w, h) = (rd.u16()?, rd.u16()?);
        if w as usize != PATCH_SIZE || h as usize != PATCH_SIZE {
            return Err(Error::format("record file", format!("patch size {w}x{h}")));
        }
        let label = rd.take(1)?[0];
        let pixels = rd
            .take(4 * PATCH_PIXELS)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let id_len = rd.u32()? as usize;
        let source_id = std::str::from_utf8(rd.take(id_len)?)
            .map_err(|_| Error::format("record file", "source_id is not utf-8"))?
            .to_owned();
        let origin = (rd.u32()?, rd.u32()?);
        out.push(PatchRecord::new(pixels, label, source_id, origin).map_err(|e| {
            Error::format("record file", e.to_string())
        })?);
    }
    Ok(out)
}

pub fn write_dataset(dir: impl AsRef<Path>, split: &DatasetSplit, manifest: &Manifest) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, records) in split.parts() {
        io::write_atomic(dir.join(format!("{name}.bin")), &encode_records(records))?;
    }
    let json = serde_json::to_vec_pretty(manifest)?;
    io::write_atomic(dir.join("manifest.json"), &json)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<(DatasetSplit, Manifest)> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(p, e))
    };
    let manifest: Manifest = serde_json::from_slice(&read("manifest.json")?)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::format(
            "manifest.json",
            format!("schema version {} unsupported", manifest.schema_version),
        ));
    }
    let split = DatasetSplit {
        train: decode_records(&read("train.bin")?)?,
        validation: decode_records(&read("validation.bin")?)?,
        test: decode_records(&read("test.bin")?)?,
        seed: manifest.seed,
    };
    Ok((split, manifest))
}
