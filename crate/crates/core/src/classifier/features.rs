use std::cell::RefCell;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::imgcore::{self, Image};
use crate::{Error, Result, PATCH_SIZE};

/// Radial spectrum bins (radii 1..=16 cycles per patch; DC excluded).
pub const SPECTRUM_BINS: usize = 16;

/// Spectrum bins plus the two log-variance terms.
pub const NUM_FEATURES: usize = SPECTRUM_BINS + 2;

/// Intensity scale of the features (16-bit). On the 8-bit scale log1p
/// flattens the heavily blurred classes to zero.
pub const FEATURE_SCALE: f64 = 65535.0;

/// Degree of the polynomial surface removed before the transform.
pub const DETREND_DEGREE: usize = 4;

const N: usize = PATCH_SIZE;
const PIXELS: usize = N * N;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; NUM_FEATURES] {
        &self.0
    }
}

thread_local! {
    static FFT: RefCell<Option<Arc<dyn Fft<f64>>>> = const { RefCell::new(None) };
}

fn fft32() -> Arc<dyn Fft<f64>> {
    FFT.with(|cell| {
        cell.borrow_mut()
            .get_or_insert_with(|| FftPlanner::new().plan_fft_forward(N))
            .clone()
    })
}

/// Periodic Hann taps; tapering suppresses the wrap-around edge that an
/// unwindowed DFT would turn into broadband leakage.
fn hann() -> &'static [f64; N] {
    static W: OnceLock<[f64; N]> = OnceLock::new();
    W.get_or_init(|| {
        let mut w = [0.0; N];
        for (i, v) in w.iter_mut().enumerate() {
            *v = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / N as f64).cos();
        }
        w
    })
}

/// Orthonormal basis of the monomials `x^i y^j`, `i + j <= DETREND_DEGREE`,
/// sampled on the patch grid (modified Gram-Schmidt, two passes).
fn poly_basis() -> &'static [Vec<f64>] {
    static BASIS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    BASIS.get_or_init(|| {
        let coord = |k: usize| k as f64 / (N - 1) as f64 - 0.5;
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for deg in 0..=DETREND_DEGREE {
            for i in 0..=deg {
                let mut v: Vec<f64> = (0..PIXELS)
                    .map(|p| coord(p % N).powi(i as i32) * coord(p / N).powi((deg - i) as i32))
                    .collect();
                for _ in 0..2 {
                    for q in &basis {
                        let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
                    }
                }
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.iter_mut().for_each(|a| *a /= norm);
                basis.push(v);
            }
        }
        basis
    })
}

/// Patch minus its least-squares polynomial surface.
pub fn detrend(values: &[f64]) -> Vec<f64> {
    let mut r = values.to_vec();
    for q in poly_basis() {
        let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
        r.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
    }
    r
}

/// Mean of `log(1+|F|²)` over each annulus `round(|f|) = 1..=16` of the
/// detrended, Hann-windowed patch on the 16-bit scale. A smooth surface leaks through
/// the window into the lowest bins, where it would swamp the little power
/// that survives strong blur.
pub fn radial_log_spectrum(patch: &Image) -> [f64; SPECTRUM_BINS] {
    let w = hann();
    let mut buf: Vec<Complex<f64>> = detrend(patch.data())
        .into_iter()
        .enumerate()
        .map(|(i, v)| Complex::new(v * FEATURE_SCALE * w[i % N] * w[i / N], 0.0))
        .collect();
    let fft = fft32();
    // rows
    fft.process(&mut buf);
    // columns
    let mut col = vec![Complex::new(0.0, 0.0); N];
    for x in 0..N {
        for y in 0..N {
            col[y] = buf[y * N + x];
        }
        fft.process(&mut col);
        for y in 0..N {
            buf[y * N + x] = col[y];
        }
    }

    let mut sums = [0.0; SPECTRUM_BINS];
    let mut counts = [0usize; SPECTRUM_BINS];
    let signed = |k: usize| if k < N / 2 { k as isize } else { k as isize - N as isize };
    for v in 0..N {
        for u in 0..N {
            let (fu, fv) = (signed(u), signed(v));
            let radius = ((fu * fu + fv * fv) as f64).sqrt().round() as usize;
            if (1..=SPECTRUM_BINS).contains(&radius) {
                sums[radius - 1] += buf[v * N + u].norm_sqr().ln_1p();
                counts[radius - 1] += 1;
            }
        }
    }
    let mut out = [0.0; SPECTRUM_BINS];
    for b in 0..SPECTRUM_BINS {
        out[b] = sums[b] / counts[b] as f64;
    }
    out
}

/// Features of a 32×32 grayscale patch: the radial log spectrum followed by `log(1+var(∇²I))` over the interior and `log(1+var(I))`.
pub fn extract_features(patch: &Image) -> Result<FeatureVector> {
    patch.require_gray("patch")?;
    if patch.width() != N || patch.height() != N {
        return Err(Error::domain(
            "patch",
            format!("expected 32x32, got {}x{}", patch.width(), patch.height()),
        ));
    }
    let mut f = [0.0; NUM_FEATURES];
    f[..SPECTRUM_BINS].copy_from_slice(&radial_log_spectrum(patch));
    let scaled = patch.map(|v| v * FEATURE_SCALE);
    // border taps of the Laplacian see replicated pixels, not image content
    let lap = imgcore::laplacian(&scaled)?.crop(1, 1, N - 2, N - 2)?;
    f[SPECTRUM_BINS] = lap.variance().ln_1p();
    f[SPECTRUM_BINS + 1] = scaled.variance().ln_1p();
    Ok(FeatureVector(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_patch_has_zero_features() {
        let f = extract_features(&Image::filled(32, 32, 1, 0.42)).unwrap();
        assert!(f.0.iter().all(|&v| v.abs() < 1e-9), "{f:?}");
    }

    #[test]
    fn shape_and_finiteness() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Image::from_fn(32, 32, |_, _| rng.gen());
        let f = extract_features(&p).unwrap();
        assert_eq!(f.0.len(), 18);
        assert!(f.0.iter().all(|v| v.is_finite()));
        assert!(extract_features(&Image::filled(16, 32, 1, 0.0)).is_err());
    }

    #[test]
    fn detrend_removes_quartic_surfaces() {
        let vals: Vec<f64> = (0..PIXELS)
            .map(|p| {
                let (x, y) = ((p % N) as f64 / 31.0, (p / N) as f64 / 31.0);
                0.3 + 0.2 * x - 0.1 * y * y + 0.05 * x.powi(3) * y - 0.4 * y.powi(4)
            })
            .collect();
        assert!(detrend(&vals).iter().all(|v| v.abs() < 1e-12));
        let b = poly_basis();
        assert_eq!(b.len(), 15);
        for (i, p) in b.iter().enumerate() {
            for (j, q) in b.iter().enumerate() {
                let d: f64 = p.iter().zip(q).map(|(a, c)| a * c).sum();
                assert!((d - f64::from(u8::from(i == j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_has_power_in_every_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Image::from_fn(32, 32, |_, _| rng.gen());
        let spec = radial_log_spectrum(&p);
        assert!(spec.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn less_blur_means_more_high_frequency_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let big = Image::from_fn(96, 96, |_, _| rng.gen());
        let feats: Vec<FeatureVector> = [0.0, 1.0, 2.0, 4.0]
            .iter()
            .map(|&s| {
                let b = imgcore::blur_image(&big, s).unwrap().crop(32, 32, 32, 32).unwrap();
                extract_features(&b).unwrap()
            })
            .collect();
        for pair in feats.windows(2) {
            for bin in 8..SPECTRUM_BINS {
                assert!(pair[0].0[bin] > pair[1].0[bin]);
            }
        }
    }
}
