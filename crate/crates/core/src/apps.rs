//! Map-driven applications: adaptive unsharp masking, shallow depth of field
//! and multi-focus fusion.
//!
//! Gains use the normalised map `m = M/19`; the depth-of-field weight uses the
//! raw `[0,19]` map, where its symmetry point 10 lives.

use serde::{Deserialize, Serialize};

use crate::blurmap::BlurMap;
use crate::imgcore::{self, Image};
use crate::refine::{guided_filter, GuidedFilterParams};
use crate::{Error, Result, MAX_LEVEL};

/// Low-pass used by the unsharp mask.
pub const DEFAULT_UM_SIGMA: f64 = 2.0;

/// Unsharp-mask strength: one value everywhere or a per-pixel raster.
#[derive(Clone, Copy, Debug)]
pub enum Gain<'a> {
    Scalar(f64),
    Map(&'a Image),
}

/// `J = I + λ·(I − B)`, `B` the Gaussian blur of `I` at `sigma_um`, clamped to
/// [0,1]. A gain raster must be single-channel and is shared by all channels.
pub fn unsharp_mask(img: &Image, gain: Gain<'_>, sigma_um: f64) -> Result<Image> {
    if let Gain::Map(g) = gain {
        g.require_gray("gain map")?;
        img.require_same_size(g, "image and gain map")?;
    }
    let low = imgcore::blur_image(img, sigma_um)?;
    let c = img.channels();
    let data = img
        .data()
        .iter()
        .zip(low.data())
        .enumerate()
        .map(|(i, (&v, &b))| {
            let lambda = match gain {
                Gain::Scalar(l) => l,
                Gain::Map(g) => g.data()[i / c],
            };
            (v + lambda * (v - b)).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(img.width(), img.height(), c, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub lambda_max: f64,
}

impl Default for GainParams {
    fn default() -> Self {
        GainParams {
            alpha1: 46.0,
            beta1: 0.1,
            alpha2: 183.0,
            beta2: 0.27,
            lambda_max: 2.0,
        }
    }
}

impl GainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(Error::domain("lambda_max", "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::domain(name, format!("{b} not in [0, 1]")));
            }
        }
        for (name, a) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !a.is_finite() {
                return Err(Error::domain(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Rising sigmoid: suppresses gain on the sharpest pixels.
    pub fn lambda1(&self, m: f64) -> f64 {
        1.0 / (1.0 + (-self.alpha1 * (m - self.beta1)).exp())
    }

    /// Falling sigmoid: suppresses gain on strongly blurred pixels. Written
    /// as `1/(1+e^x)` so it stays positive where `1 − σ(x)` would round to 0.
    pub fn lambda2(&self, m: f64) -> f64 {
        1.0 / (1.0 + (self.alpha2 * (m - self.beta2)).exp())
    }

    /// Gain at normalised blur level `m ∈ [0,1]`.
    pub fn gain(&self, m: f64) -> f64 {
        self.lambda_max * self.lambda1(m) * self.lambda2(m)
    }
}

/// Per-pixel unsharp-mask gain from a `[0,19]` map.
pub fn gain_map(map: &BlurMap, params: &GainParams) -> Result<Image> {
    params.validate()?;
    let values = map.values.iter().map(|&v| params.gain(v / MAX_LEVEL)).collect();
    Image::new(map.width, map.height, 1, values)
}

/// Unsharp masking with the gain of [`gain_map`].
pub fn adaptive_enhance(img: &Image, map: &BlurMap, params: &GainParams, sigma_um: f64) -> Result<Image> {
    map.require_size(img)?;
    let gain = gain_map(map, params)?;
    unsharp_mask(img, Gain::Map(&gain), sigma_um)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdofParams {
    /// Blur level that should keep (almost) the sharpened image.
    pub c0: f64,
    /// Blur level that should get (almost) the smoothed image.
    pub c1: f64,
    pub w0: f64,
    pub w1: f64,
    /// Self-guided smoothing that produces the background.
    pub smooth: GuidedFilterParams,
    pub sharpen_lambda: f64,
    pub sigma_um: f64,
}

impl Default for SdofParams {
    fn default() -> Self {
        SdofParams {
            c0: 1.0,
            c1: 7.0,
            w0: 0.999,
            w1: 0.001,
            smooth: GuidedFilterParams {
                radius: 33,
                // 128 on the 8-bit squared scale
                epsilon: 128.0 / (255.0 * 255.0),
                iterations: 5,
            },
            sharpen_lambda: 0.25,
            sigma_um: DEFAULT_UM_SIGMA,
        }
    }
}

impl SdofParams {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("c0", self.c0), ("c1", self.c1)] {
            if !(0.0..=MAX_LEVEL).contains(&c) {
                return Err(Error::domain(name, format!("{c} not in [0, 19]")));
            }
        }
        if !(self.c0 < self.c1) {
            return Err(Error::domain("c1", format!("anchors must satisfy c0 < c1, got c0={} c1={}", self.c0, self.c1)));
        }
        if self.c1 > 10.0 {
            return Err(Error::domain("c1", format!("{} > 10; the weight curve is symmetric about 10", self.c1)));
        }
        if !(0.0 < self.w1 && self.w1 < self.w0 && self.w0 < 1.0) {
            return Err(Error::domain("w0", format!("need 0 < w1 < w0 < 1, got w0={} w1={}", self.w0, self.w1)));
        }
        self.smooth.validate()
    }
}

/// Weight of the sharpened image at blur level `m`:
/// `W = 1 − exp(−|(m − 10)/σ|^γ)`.
pub fn sdof_weight(m: f64, sigma: f64, gamma: f64) -> f64 {
    -(-((m - 10.0) / sigma).abs().powf(gamma)).exp_m1()
}

/// `(σ, γ)` of the weight curve through two `(level, weight)` anchors. The
/// result does not depend on the anchor order.
pub fn solve_weight_curve(a: (f64, f64), b: (f64, f64)) -> Result<(f64, f64)> {
    let (a, b) = if (a.0 - 10.0).abs() >= (b.0 - 10.0).abs() { (a, b) } else { (b, a) };
    for (c, w) in [a, b] {
        if c == 10.0 {
            return Err(Error::domain("c0", "an anchor at level 10 has weight 0 for every curve"));
        }
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::domain("w0", format!("anchor weight {w} not in (0, 1)")));
        }
    }
    let (da, db) = ((a.0 - 10.0).abs(), (b.0 - 10.0).abs());
    if da == db {
        return Err(Error::domain(
            "c1",
            format!("degenerate anchors: c0={} and c1={} are equally far from 10", a.0, b.0),
        ));
    }
    let ka = -(-a.1).ln_1p();
    let kb = -(-b.1).ln_1p();
    let gamma = (ka.ln() - kb.ln()) / (da.ln() - db.ln());
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(
            "w0",
            "the anchor closer to level 10 must have the smaller weight",
        ));
    }
    let sigma = da / ka.powf(1.0 / gamma);
    Ok((sigma, gamma))
}

/// `(σ, γ)` for the default or user anchors.
pub fn solve_sdof_weights(params: &SdofParams) -> Result<(f64, f64)> {
    if params.c0 == params.c1 || (params.c0 - 10.0).abs() == (params.c1 - 10.0).abs() {
        return Err(Error::domain(
            "c1",
            format!("degenerate anchors: c0={} and c1={}", params.c0, params.c1),
        ));
    }
    params.validate()?;
    solve_weight_curve((params.c0, params.w0), (params.c1, params.w1))
}

/// Repeated guided filtering of each channel with its own previous output as
/// guide.
pub fn self_guided_smooth(img: &Image, params: &GuidedFilterParams) -> Result<Image> {
    params.validate()?;
    let planes = (0..img.channels())
        .map(|c| {
            let mut p = img.channel(c);
            for _ in 0..params.iterations {
                p = guided_filter(&p, &p, params.radius, params.epsilon)?;
            }
            Ok(p.clamp01())
        })
        .collect::<Result<Vec<_>>>()?;
    Image::from_channels(&planes)
}

/// `B + W·(S − B)` per pixel, `W` single-channel.
pub fn blend(sharp: &Image, smooth: &Image, weight: &Image) -> Result<Image> {
    if !sharp.same_shape(smooth) {
        return Err(Error::Dimension("sharp and smooth layers differ in shape".into()));
    }
    weight.require_gray("weight")?;
    sharp.require_same_size(weight, "layers and weight")?;
    let c = sharp.channels();
    let data = sharp
        .data()
        .iter()
        .zip(smooth.data())
        .enumerate()
        .map(|(i, (&s, &b))| (b + weight.data()[i / c] * (s - b)).clamp(0.0, 1.0))
        .collect();
    Image::new(sharp.width(), sharp.height(), c, data)
}

/// Intermediate layers of [`sdof`].
#[derive(Clone, Debug)]
pub struct SdofOutput {
    pub result: Image,
    pub weight: Image,
    pub sharp: Image,
    pub smooth: Image,
    pub sigma: f64,
    pub gamma: f64,
}

pub fn sdof_detailed(img: &Image, map: &BlurMap, params: &SdofParams) -> Result<SdofOutput> {
    let (sigma, gamma) = solve_sdof_weights(params)?;
    map.require_size(img)?;
    let weight = Image::new(
        map.width,
        map.height,
        1,
        map.values.iter().map(|&m| sdof_weight(m, sigma, gamma)).collect(),
    )?;
    let sharp = unsharp_mask(img, Gain::Scalar(params.sharpen_lambda), params.sigma_um)?;
    let smooth = self_guided_smooth(img, &params.smooth)?;
    let result = blend(&sharp, &smooth, &weight)?;
    Ok(SdofOutput {
        result,
        weight,
        sharp,
        smooth,
        sigma,
        gamma,
    })
}

/// Synthetic shallow depth of field: sharpen what the map calls in focus,
/// smooth the rest.
pub fn sdof(img: &Image, map: &BlurMap, params: &SdofParams) -> Result<Image> {
    Ok(sdof_detailed(img, map, params)?.result)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub radius: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Sliding-window step used when the maps are estimated for fusion.
    pub step: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            radius: 7,
            epsilon: 1e-3,
            delta: 1e-6,
            step: 4,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::domain("radius", "must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain("epsilon", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::domain("delta", "must be positive"));
        }
        if !(1..=crate::PATCH_SIZE).contains(&self.step) {
            return Err(Error::domain("step", format!("{} is not in 1..=32", self.step)));
        }
        Ok(())
    }
}

fn check_maps(maps: &[&BlurMap]) -> Result<()> {
    if maps.len() < 2 {
        return Err(Error::domain("inputs", format!("fusion needs at least 2 images, got {}", maps.len())));
    }
    let (w, h) = (maps[0].width, maps[0].height);
    if maps.iter().any(|m| m.width != w || m.height != h) {
        return Err(Error::Dimension("fusion maps differ in size".into()));
    }
    Ok(())
}

/// `D_n(q) = 1` where map `n` attains the per-pixel minimum (ties set every
/// tied map).
pub fn fusion_decision(maps: &[&BlurMap]) -> Result<Vec<Image>> {
    check_maps(maps)?;
    let (w, h) = (maps[0].width, maps[0].height);
    let min: Vec<f64> = (0..w * h)
        .map(|q| maps.iter().map(|m| m.values[q]).fold(f64::INFINITY, f64::min))
        .collect();
    maps.iter()
        .map(|m| {
            let d = m.values.iter().zip(&min).map(|(&v, &lo)| if v == lo { 1.0 } else { 0.0 }).collect();
            Image::new(w, h, 1, d)
        })
        .collect()
}

/// Normalised fusion weights: decision maps guided-filtered against each
/// input's luma, clamped to [0,1], offset by δ and divided by their sum.
pub fn fusion_weights(imgs: &[&Image], maps: &[&BlurMap], params: &FusionParams) -> Result<Vec<Image>> {
    params.validate()?;
    check_maps(maps)?;
    if imgs.len() != maps.len() {
        return Err(Error::domain("inputs", format!("{} images but {} maps", imgs.len(), maps.len())));
    }
    for (img, map) in imgs.iter().zip(maps) {
        map.require_size(img)?;
    }
    let decisions = fusion_decision(maps)?;
    let raw = imgs
        .iter()
        .zip(&decisions)
        .map(|(img, d)| {
            let luma = imgcore::to_grayscale(img);
            Ok(guided_filter(d, &luma, params.radius, params.epsilon)?
                .map(|v| v.clamp(0.0, 1.0) + params.delta))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = raw[0].len();
    let total: Vec<f64> = (0..n).map(|q| raw.iter().map(|r| r.data()[q]).sum()).collect();
    raw.iter()
        .map(|r| r.zip_map(&Image::new(r.width(), r.height(), 1, total.clone())?, |v, t| v / t))
        .collect()
}

#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub result: Image,
    pub decisions: Vec<Image>,
    pub weights: Vec<Image>,
}

pub fn fuse_detailed(imgs: &[&Image], maps: &[&BlurMap], params: &FusionParams) -> Result<FusionOutput> {
    let weights = fusion_weights(imgs, maps, params)?;
    let first = imgs[0];
    if imgs.iter().any(|i| !i.same_shape(first)) {
        return Err(Error::Dimension("fusion inputs differ in shape".into()));
    }
    let c = first.channels();
    let data = (0..first.len())
        .map(|i| {
            imgs.iter()
                .zip(&weights)
                .map(|(img, w)| w.data()[i / c] * img.data()[i])
                .sum()
        })
        .collect();
    Ok(FusionOutput {
        result: Image::new(first.width(), first.height(), c, data)?,
        decisions: fusion_decision(maps)?,
        weights,
    })
}

/// Per-pixel convex combination of registered inputs, favouring the input
/// whose map is sharpest there.
pub fn fuse(imgs: &[&Image], maps: &[&BlurMap], params: &FusionParams) -> Result<Image> {
    Ok(fuse_detailed(imgs, maps, params)?.result)
}
