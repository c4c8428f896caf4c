//! Guided filter, weighted guided filter and blur-map refinement.
//!
//! The map is refined with one weighted guided filter pass whose guide is an
//! edge-preserving smoothed copy of the image (several self-guided passes).
//! Texture is flattened in the guide while object boundaries survive, so the
//! blocky window averages snap to the boundaries without picking up texture.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blurmap::BlurMap;
use crate::imgcore::{self, box_mean, Image};
use crate::{Error, Result, MAX_LEVEL};

/// Variance regulariser inside the edge-aware weight, unit-range images.
pub const DEFAULT_LAMBDA_W: f64 = 1e-6;

/// Default threshold for [`binary_map`].
pub const DEFAULT_BINARY_THRESHOLD: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidedFilterParams {
    pub radius: usize,
    pub epsilon: f64,
    /// Self-guided passes used to build the guidance image.
    pub iterations: usize,
}

impl Default for GuidedFilterParams {
    fn default() -> Self {
        GuidedFilterParams {
            radius: 16,
            epsilon: 0.005,
            iterations: 7,
        }
    }
}

impl GuidedFilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::domain("radius", "must be >= 1"));
        }
        check_epsilon(self.epsilon)?;
        if self.iterations == 0 {
            return Err(Error::domain("iterations", "must be >= 1"));
        }
        Ok(())
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("epsilon", format!("must be positive and finite, got {eps}")))
    }
}

fn check_pair(p: &Image, guide: &Image, radius: usize, eps: f64) -> Result<()> {
    p.require_gray("filter input")?;
    guide.require_gray("guide")?;
    p.require_same_size(guide, "filter input and guide")?;
    if radius == 0 {
        return Err(Error::domain("radius", "must be >= 1"));
    }
    check_epsilon(eps)
}

/// Local linear model fit with a per-window regulariser `eps[k]`.
fn filter_with(p: &Image, guide: &Image, radius: usize, eps: &dyn Fn(usize) -> f64) -> Result<Image> {
    let r = radius as isize;
    let mean_i = box_mean(guide, r)?;
    let mean_p = box_mean(p, r)?;
    let corr_ip = box_mean(&guide.zip_map(p, |i, p| i * p)?, r)?;
    let corr_ii = box_mean(&guide.map(|i| i * i), r)?;

    let n = p.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for k in 0..n {
        let (mi, mp) = (mean_i.data()[k], mean_p.data()[k]);
        let var = corr_ii.data()[k] - mi * mi;
        let cov = corr_ip.data()[k] - mi * mp;
        a[k] = cov / (var + eps(k));
        b[k] = mp - a[k] * mi;
    }
    let (w, h) = (p.width(), p.height());
    let mean_a = box_mean(&Image::new(w, h, 1, a)?, r)?;
    let mean_b = box_mean(&Image::new(w, h, 1, b)?, r)?;
    let q = guide
        .data()
        .iter()
        .zip(mean_a.data())
        .zip(mean_b.data())
        .map(|((&i, &a), &b)| a * i + b)
        .collect();
    Image::new(w, h, 1, q)
}

/// Guided filter of `p` steered by `guide`; single-channel inputs.
pub fn guided_filter(p: &Image, guide: &Image, radius: usize, eps: f64) -> Result<Image> {
    check_pair(p, guide, radius, eps)?;
    filter_with(p, guide, radius, &|_| eps)
}

/// Edge-aware weight `Γ(k) = (σ²(k)+λ)·mean_k′(1/(σ²(k′)+λ))` from the 3×3
/// variance of `guide`. Above 1 on edges, below 1 in flat regions; its
/// reciprocal averages to exactly 1.
pub fn edge_aware_weights(guide: &Image, lambda_w: f64) -> Result<Image> {
    guide.require_gray("guide")?;
    if !(lambda_w > 0.0) {
        return Err(Error::domain("lambda_w", format!("must be positive, got {lambda_w}")));
    }
    let mean = box_mean(guide, 1)?;
    let sq = box_mean(&guide.map(|v| v * v), 1)?;
    let shifted: Vec<f64> = sq
        .data()
        .iter()
        .zip(mean.data())
        .map(|(&s, &m)| (s - m * m).max(0.0) + lambda_w)
        .collect();
    let inv_mean = shifted.iter().map(|v| 1.0 / v).sum::<f64>() / shifted.len() as f64;
    Image::new(
        guide.width(),
        guide.height(),
        1,
        shifted.iter().map(|v| v * inv_mean).collect(),
    )
}

/// Guided filter with the regulariser scaled per window to `ε/Γ(k)`.
pub fn weighted_guided_filter(p: &Image, guide: &Image, radius: usize, eps: f64, lambda_w: f64) -> Result<Image> {
    check_pair(p, guide, radius, eps)?;
    let gamma = edge_aware_weights(guide, lambda_w)?;
    let g = gamma.data();
    filter_with(p, guide, radius, &|k| eps / g[k])
}

/// Edge-preserving smoothed copy of `img` (converted to luma): `iterations`
/// self-guided weighted guided filter passes, each taking the previous output
/// as both input and guide.
pub fn make_guidance(img: &Image, params: &GuidedFilterParams) -> Result<Image> {
    params.validate()?;
    let mut g = imgcore::to_grayscale(img);
    for _ in 0..params.iterations {
        g = weighted_guided_filter(&g, &g, params.radius, params.epsilon, DEFAULT_LAMBDA_W)?;
    }
    Ok(g)
}

/// SHA-256 of a raster's shape and little-endian f64 samples.
pub fn image_sha256(img: &Image) -> String {
    let mut h = Sha256::new();
    for d in [img.width(), img.height(), img.channels()] {
        h.update((d as u64).to_le_bytes());
    }
    for v in img.data() {
        h.update(v.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinedMap {
    pub map: BlurMap,
    pub params: GuidedFilterParams,
    pub guidance_sha256: String,
}

/// Filters `map` (normalised to [0,1]) against a precomputed guidance image
/// `passes` times and returns it on the [0,19] scale, clamped.
pub fn refine_with_guidance(
    map: &BlurMap,
    guidance: &Image,
    params: &GuidedFilterParams,
    passes: usize,
) -> Result<RefinedMap> {
    params.validate()?;
    if passes == 0 {
        return Err(Error::domain("passes", "must be >= 1"));
    }
    map.require_size(guidance)?;
    let mut m = map.to_image().map(|v| v / MAX_LEVEL);
    for _ in 0..passes {
        m = weighted_guided_filter(&m, guidance, params.radius, params.epsilon, DEFAULT_LAMBDA_W)?;
    }
    let values = m.data().iter().map(|v| (v * MAX_LEVEL).clamp(0.0, MAX_LEVEL)).collect();
    Ok(RefinedMap {
        map: BlurMap {
            width: map.width,
            height: map.height,
            values,
            step: map.step,
            backend_id: map.backend_id.clone(),
        },
        params: *params,
        guidance_sha256: image_sha256(guidance),
    })
}

/// Refines `map` with one weighted guided filter pass whose guide is
/// [`make_guidance`]`(img, params)`.
pub fn refine_map(map: &BlurMap, img: &Image, params: &GuidedFilterParams) -> Result<RefinedMap> {
    refine_map_passes(map, img, params, 1)
}

pub fn refine_map_passes(map: &BlurMap, img: &Image, params: &GuidedFilterParams, passes: usize) -> Result<RefinedMap> {
    map.require_size(img)?;
    let guidance = make_guidance(img, params)?;
    refine_with_guidance(map, &guidance, params, passes)
}

/// 0 where `M(q) ≤ lambda` (in focus), 1 elsewhere.
pub fn binary_map(map: &BlurMap, lambda: f64) -> Image {
    let values = map.values.iter().map(|&v| if v <= lambda { 0.0 } else { 1.0 }).collect();
    Image::new(map.width, map.height, 1, values).expect("map shape")
}
