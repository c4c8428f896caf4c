//! Procedural desk corpus: 20 deterministic grayscale textures that stand in
//! for a natural-image collection when building small datasets locally.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Image;

pub const CORPUS_SIZE: usize = 20;
pub const CORPUS_SIDE: usize = 320;

/// Smoothly interpolated lattice noise with `cells` cells per side.
fn value_noise(rng: &mut ChaCha8Rng, side: usize, cells: usize) -> Vec<f64> {
    let n = cells + 2;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.gen()).collect();
    let scale = cells as f64 / side as f64;
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (fx, fy) = (x as f64 * scale, y as f64 * scale);
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
            let l = |i: usize, j: usize| lattice[j * n + i];
            let top = l(ix, iy) * (1.0 - sx) + l(ix + 1, iy) * sx;
            let bottom = l(ix, iy + 1) * (1.0 - sx) + l(ix + 1, iy + 1) * sx;
            out.push(top * (1.0 - sy) + bottom * sy);
        }
    }
    out
}

fn shapes(rng: &mut ChaCha8Rng, side: usize, count: usize) -> Vec<f64> {
    let mut out = vec![rng.gen::<f64>(); side * side];
    for _ in 0..count {
        let level: f64 = rng.gen();
        let cx = rng.gen_range(0.0..side as f64);
        let cy = rng.gen_range(0.0..side as f64);
        let r = rng.gen_range(4.0..28.0);
        let disk = rng.gen_bool(0.5);
        for y in 0..side {
            for x in 0..side {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let inside = if disk {
                    dx * dx + dy * dy <= r * r
                } else {
                    dx.abs() <= r && dy.abs() <= r * 0.6
                };
                if inside {
                    out[y * side + x] = level;
                }
            }
        }
    }
    out
}

fn gratings(rng: &mut ChaCha8Rng, side: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let theta = rng.gen_range(0.0..std::f64::consts::PI);
            let freq = rng.gen_range(0.05..0.45);
            (theta.cos() * freq, theta.sin() * freq, rng.gen_range(0.0..6.3))
        })
        .collect();
    (0..side * side)
        .map(|i| {
            let (x, y) = ((i % side) as f64, (i / side) as f64);
            let s: f64 = waves
                .iter()
                .map(|&(u, v, ph)| (std::f64::consts::TAU * (u * x + v * y) + ph).sin())
                .sum();
            0.5 + s / 6.0
        })
        .collect()
}

fn voronoi(rng: &mut ChaCha8Rng, side: usize, sites: usize) -> Vec<f64> {
    let pts: Vec<(f64, f64, f64)> = (0..sites)
        .map(|_| {
            (
                rng.gen_range(0.0..side as f64),
                rng.gen_range(0.0..side as f64),
                rng.gen(),
            )
        })
        .collect();
    (0..side * side)
        .map(|i| {
            let (x, y) = ((i % side) as f64, (i / side) as f64);
            pts.iter()
                .map(|&(px, py, v)| ((px - x).powi(2) + (py - y).powi(2), v))
                .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
                .1
        })
        .collect()
}

fn checker(rng: &mut ChaCha8Rng, side: usize) -> Vec<f64> {
    let cell = rng.gen_range(2..7);
    let (lo, hi) = (rng.gen_range(0.0..0.4), rng.gen_range(0.6..1.0));
    (0..side * side)
        .map(|i| {
            let (x, y) = (i % side, i / side);
            if (x / cell + y / cell) % 2 == 0 {
                lo
            } else {
                hi
            }
        })
        .collect()
}

/// Occluding disks and squares with radii drawn from a `r^-3` law, painted
/// front to back until the canvas is covered. Scale-invariant and edge-rich,
/// so its spectrum falls off like that of natural photographs.
fn dead_leaves(rng: &mut ChaCha8Rng, side: usize, r_min: f64, r_max: f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; side * side];
    let mut open = side * side;
    let (a, b) = (r_min.powi(-2), r_max.powi(-2));
    let mut leaves = 0usize;
    while open > 0 && leaves < 200 * side * side {
        leaves += 1;
        // inverse CDF of p(r) ∝ r^-3 on [r_min, r_max]
        let r = (a - rng.gen::<f64>() * (a - b)).powf(-0.5);
        let level: f64 = rng.gen();
        let disk = rng.gen_bool(0.5);
        let cx = rng.gen_range(-r..side as f64 + r);
        let cy = rng.gen_range(-r..side as f64 + r);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let y0 = (cy - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(side);
        let y1 = ((cy + r).ceil() as usize).min(side);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let inside = if disk { dx * dx + dy * dy <= r * r } else { dx.abs().max(dy.abs()) <= r };
                let px = &mut out[y * side + x];
                if inside && px.is_nan() {
                    *px = level;
                    open -= 1;
                }
            }
        }
    }
    out.iter().map(|v| if v.is_nan() { 0.5 } else { *v }).collect()
}

/// Texture number `index` of the corpus generated from `seed`.
pub fn texture(index: usize, seed: u64) -> Image {
    let side = CORPUS_SIDE;
    // feature density is fixed per 160×160 block
    let k = side / 160;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let base = match index % 5 {
        0 => {
            let cells = rng.gen_range(6..24) * k;
            value_noise(&mut rng, side, cells)
        }
        1 => shapes(&mut rng, side, 40 * k * k),
        2 => gratings(&mut rng, side),
        3 => voronoi(&mut rng, side, 60 * k * k),
        _ => checker(&mut rng, side),
    };
    let leaves = dead_leaves(&mut rng, side, 0.5, 100.0);
    let mix = rng.gen_range(0.75..0.95);
    let detail = value_noise(&mut rng, side, side / 2);
    let grain_amp = rng.gen_range(0.0..0.03);
    let data = base
        .iter()
        .zip(&leaves)
        .zip(&detail)
        .map(|((&b, &l), &d)| {
            let g: f64 = rng.gen::<f64>() - 0.5;
            let v = (1.0 - mix) * b + mix * l;
            ((1.0 - grain_amp) * v + grain_amp * (0.5 * d + g)).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(side, side, 1, data).expect("square texture")
}

/// The full corpus as `(file name, image)` pairs.
pub fn desk_corpus(seed: u64) -> Vec<(String, Image)> {
    (0..CORPUS_SIZE)
        .map(|i| (format!("texture_{i:02}.png"), texture(i, seed)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{mine_sharp_patches, DEFAULT_THRESHOLD};

    #[test]
    fn deterministic_and_in_range() {
        let a = texture(3, 7);
        assert_eq!(a, texture(3, 7));
        assert_ne!(a, texture(3, 8));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn corpus_is_mostly_sharp() {
        let mined: usize = desk_corpus(0)
            .iter()
            .map(|(_, img)| mine_sharp_patches(img, DEFAULT_THRESHOLD).len())
            .sum();
        // 100 tiles per texture
        assert!(mined >= 500, "only {mined} sharp tiles");
    }
}

