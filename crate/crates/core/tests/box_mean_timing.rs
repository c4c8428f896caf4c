use std::time::{Duration, Instant};

use defocus_core::imgcore::box_mean;
use defocus_core::Image;

fn best_of(runs: usize, f: impl Fn()) -> Duration {
    (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn box_mean_cost_does_not_grow_with_radius() {
    let img = Image::from_fn(512, 512, |x, y| ((x * 31 + y * 17) % 255) as f64 / 255.0);
    box_mean(&img, 1).unwrap();
    let small = best_of(7, || {
        box_mean(&img, 1).unwrap();
    });
    let large = best_of(7, || {
        box_mean(&img, 32).unwrap();
    });
    let ratio = large.as_secs_f64() / small.as_secs_f64();
    assert!(ratio < 2.0, "r=32 took {ratio:.2}x as long as r=1");
}
