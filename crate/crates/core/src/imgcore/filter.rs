use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{gaussian_kernel, Image, Kernel};
use crate::{par, Error, Result};

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Separable convolution with replicated borders, no clamping of the result.
pub fn convolve_separable(img: &Image, horizontal: &Kernel, vertical: &Kernel) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.data();

    let mut tmp = vec![0.0; src.len()];
    let hr = horizontal.radius() as isize;
    let htaps = horizontal.taps();
    par::for_each_row(&mut tmp, w * c, |y, out| {
        let row = &src[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &t) in htaps.iter().enumerate() {
                    let xi = clamp_index(x as isize + k as isize - hr, w);
                    acc += t * row[xi * c + ch];
                }
                out[x * c + ch] = acc;
            }
        }
    });

    let mut out = img.zeros_like();
    let vr = vertical.radius() as isize;
    let vtaps = vertical.taps();
    let tmp = &tmp;
    par::for_each_row(out.data_mut(), w * c, |y, row| {
        for (k, &t) in vtaps.iter().enumerate() {
            let yi = clamp_index(y as isize + k as isize - vr, h);
            let src_row = &tmp[yi * w * c..(yi + 1) * w * c];
            for (o, &s) in row.iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    });
    out
}

/// Gaussian blur of standard deviation `sigma`, clamped to `[0, 1]`.
pub fn blur_image(img: &Image, sigma: f64) -> Result<Image> {
    let k = gaussian_kernel(sigma)?;
    if k.size() == 1 {
        return Ok(img.clamp01());
    }
    Ok(convolve_separable(img, &k, &k).clamp01())
}

/// [`blur_image`] followed by additive zero-mean Gaussian noise drawn from a
/// generator seeded with `seed`, then clamped to `[0, 1]`.
pub fn blur_image_noisy(img: &Image, sigma: f64, noise_std: f64, seed: u64) -> Result<Image> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::domain(
            "noise_std",
            format!("must be finite and >= 0, got {noise_std}"),
        ));
    }
    let k = gaussian_kernel(sigma)?;
    let mut out = if k.size() == 1 {
        img.clone()
    } else {
        convolve_separable(img, &k, &k)
    };
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("validated std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out.clamp01())
}

/// The 3×3 binomial smoothing kernel `[1 2 1]ᵀ[1 2 1] / 16`.
pub fn gaussian_3x3(img: &Image) -> Image {
    let k = Kernel::new(vec![0.25, 0.5, 0.25]).expect("odd kernel");
    convolve_separable(img, &k, &k)
}

/// 4-neighbour Laplacian with replicated borders. Output is not clamped.
pub fn laplacian(img: &Image) -> Result<Image> {
    img.require_gray("laplacian input")?;
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut out = img.zeros_like();
    par::for_each_row(out.data_mut(), w, |y, row| {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let centre = src[y * w + x];
            row[x] = src[up * w + x] + src[down * w + x] + src[y * w + left] + src[y * w + right]
                - 4.0 * centre;
        }
    });
    Ok(out)
}

/// Sum over the window `[x-before, x+after] × [y-before, y+after]` with
/// replicated borders, per channel.
///
/// Cost per pixel does not depend on the window size: each axis is handled
/// with a prefix sum over the border-padded line.
pub fn window_sum(img: &Image, before: usize, after: usize) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.data();
    let span = before + after + 1;

    // Horizontal pass.
    let mut horiz = vec![0.0; src.len()];
    par::for_each_row(&mut horiz, w * c, |y, out| {
        let row = &src[y * w * c..(y + 1) * w * c];
        let padded = w + before + after;
        let mut prefix = vec![0.0; (padded + 1) * c];
        for i in 0..padded {
            let xi = clamp_index(i as isize - before as isize, w);
            for ch in 0..c {
                prefix[(i + 1) * c + ch] = prefix[i * c + ch] + row[xi * c + ch];
            }
        }
        for x in 0..w {
            for ch in 0..c {
                out[x * c + ch] = prefix[(x + span) * c + ch] - prefix[x * c + ch];
            }
        }
    });

    // Vertical pass: prefix over padded rows.
    let stride = w * c;
    let padded = h + before + after;
    let mut prefix = vec![0.0; (padded + 1) * stride];
    for i in 0..padded {
        let yi = clamp_index(i as isize - before as isize, h);
        let (done, rest) = prefix.split_at_mut((i + 1) * stride);
        let prev = &done[i * stride..];
        let cur = &mut rest[..stride];
        let src_row = &horiz[yi * stride..(yi + 1) * stride];
        for ((o, &p), &s) in cur.iter_mut().zip(prev).zip(src_row) {
            *o = p + s;
        }
    }
    let mut out = img.zeros_like();
    let prefix = &prefix;
    par::for_each_row(out.data_mut(), stride, |y, row| {
        let hi = &prefix[(y + span) * stride..(y + span + 1) * stride];
        let lo = &prefix[y * stride..(y + 1) * stride];
        for ((o, &a), &b) in row.iter_mut().zip(hi).zip(lo) {
            *o = a - b;
        }
    });
    out
}

/// Mean over the `(2r+1)²` window centred on each pixel, replicated borders.
pub fn box_mean(img: &Image, radius: isize) -> Result<Image> {
    if radius < 0 {
        return Err(Error::domain(
            "radius",
            format!("must be >= 0, got {radius}"),
        ));
    }
    if radius == 0 {
        return Ok(img.clone());
    }
    let r = radius as usize;
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    Ok(window_sum(img, r, r).map(|v| v / n))
}

/// Rec. 601 luma for RGB input; single-channel input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2])
        .collect();
    Image::new(img.width(), img.height(), 1, data).expect("same size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * c).map(|_| rng.gen::<f64>()).collect();
        Image::new(w, h, c, data).unwrap()
    }

    /// Dense 2-D convolution with the outer-product kernel.
    fn dense_blur_oracle(img: &Image, sigma: f64) -> Image {
        let r = (3.0 * sigma).ceil() as isize;
        let g: Vec<f64> = (-r..=r)
            .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        let (w, h) = (img.width() as isize, img.height() as isize);
        Image::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let xi = (x as isize + dx).clamp(0, w - 1) as usize;
                    let yi = (y as isize + dy).clamp(0, h - 1) as usize;
                    acc += g[(dx + r) as usize] * g[(dy + r) as usize] / (s * s) * img.get(xi, yi);
                }
            }
            acc.clamp(0.0, 1.0)
        })
    }

    fn naive_box_mean(img: &Image, r: isize) -> Image {
        let (w, h) = (img.width() as isize, img.height() as isize);
        Image::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let xi = (x as isize + dx).clamp(0, w - 1) as usize;
                    let yi = (y as isize + dy).clamp(0, h - 1) as usize;
                    acc += img.get(xi, yi);
                }
            }
            acc / ((2 * r + 1) * (2 * r + 1)) as f64
        })
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Image::filled(20, 15, 3, 0.37);
        for sigma in [0.5, 1.0, 4.0, 19.0] {
            let out = blur_image(&img, sigma).unwrap();
            for &v in out.data() {
                assert!((v - 0.37).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_sigma_is_bit_identical() {
        let img = random_image(9, 7, 3, 1);
        assert_eq!(blur_image(&img, 0.0).unwrap(), img);
        assert_eq!(blur_image_noisy(&img, 0.0, 0.0, 5).unwrap(), img);
    }

    #[test]
    fn impulse_response_is_kernel() {
        let mut img = Image::filled(21, 21, 1, 0.0);
        img.set(10, 10, 0, 1.0);
        let out = blur_image(&img, 2.0).unwrap();
        let oracle = dense_blur_oracle(&img, 2.0);
        for (a, b) in out.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let k = gaussian_kernel(2.0).unwrap();
        assert!((out.get(10, 10) - k.taps()[6] * k.taps()[6]).abs() < 1e-15);
        assert!((out.get(13, 8) - k.taps()[9] * k.taps()[4]).abs() < 1e-15);
    }

    #[test]
    fn separable_matches_dense_oracle() {
        for seed in 0..5 {
            let img = random_image(16, 16, 1, seed);
            for sigma in [0.5, 1.0, 2.5] {
                let out = blur_image(&img, sigma).unwrap();
                let oracle = dense_blur_oracle(&img, sigma);
                for (a, b) in out.data().iter().zip(oracle.data()) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn noise_is_seeded() {
        let img = Image::filled(8, 8, 1, 0.5);
        let a = blur_image_noisy(&img, 1.0, 0.05, 3).unwrap();
        let b = blur_image_noisy(&img, 1.0, 0.05, 3).unwrap();
        let c = blur_image_noisy(&img, 1.0, 0.05, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(blur_image_noisy(&img, 1.0, -1.0, 3).is_err());
    }

    #[test]
    fn laplacian_cases() {
        let flat = Image::filled(6, 5, 1, 0.3);
        assert!(laplacian(&flat).unwrap().data().iter().all(|&v| v == 0.0));

        let checker = Image::from_fn(8, 8, |x, y| ((x + y) % 2) as f64);
        let lap = laplacian(&checker).unwrap();
        for y in 1..7 {
            for x in 1..7 {
                let expected = if (x + y) % 2 == 0 { 4.0 } else { -4.0 };
                assert_eq!(lap.get(x, y), expected);
            }
        }

        let ramp = Image::from_fn(8, 8, |x, y| 0.1 * x as f64 + 0.05 * y as f64);
        let lap = laplacian(&ramp).unwrap();
        for y in 1..7 {
            for x in 1..7 {
                assert!(lap.get(x, y).abs() < 1e-12);
            }
        }

        assert!(laplacian(&Image::filled(4, 4, 3, 0.0)).is_err());
    }

    #[test]
    fn box_mean_cases() {
        let img = random_image(13, 11, 1, 9);
        assert_eq!(box_mean(&img, 0).unwrap(), img);
        assert!(box_mean(&img, -1).is_err());
        let flat = Image::filled(10, 10, 1, 0.25);
        for &v in box_mean(&flat, 3).unwrap().data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        for r in [1, 2, 5, 20] {
            let fast = box_mean(&img, r).unwrap();
            let slow = naive_box_mean(&img, r);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn box_mean_multichannel_matches_planes() {
        let img = random_image(9, 6, 3, 2);
        let fused = box_mean(&img, 2).unwrap();
        for c in 0..3 {
            let plane = box_mean(&img.channel(c), 2).unwrap();
            assert_eq!(fused.channel(c), plane);
        }
    }

    #[test]
    fn grayscale_cases() {
        let white = Image::filled(1, 1, 3, 1.0);
        assert!((to_grayscale(&white).get(0, 0) - 1.0).abs() < 1e-12);
        let red = Image::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((to_grayscale(&red).get(0, 0) - 0.299).abs() < 1e-15);
        let gray = random_image(5, 5, 1, 0);
        assert_eq!(to_grayscale(&gray), gray);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        // Replicated borders weight edge pixels more than interior ones, so
        // once the kernel is a sizeable fraction of the frame the variance can
        // rise again (first seen near σ ≈ 0.7·√side on noise frames).
        fn blur_never_increases_variance(seed in 0u64..1000, s1 in 0.0f64..3.0, ds in 0.01f64..1.0) {
            let img = random_image(64, 64, 1, seed);
            let a = blur_image(&img, s1).unwrap();
            let b = blur_image(&img, s1 + ds).unwrap();
            prop_assert!(b.variance() <= a.variance() + 1e-9);
        }

        #[test]
        fn grayscale_stays_in_unit_range(seed in 0u64..1000) {
            let g = to_grayscale(&random_image(6, 6, 3, seed));
            prop_assert!(g.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
