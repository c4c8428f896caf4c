use crate::{Error, Result};

/// Odd-length 1-D filter, applied separably along rows and columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::domain(
                "kernel",
                format!("size must be odd, got {}", taps.len()),
            ));
        }
        Ok(Kernel { taps })
    }

    pub fn identity() -> Self {
        Kernel { taps: vec![1.0] }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn size(&self) -> usize {
        self.taps.len()
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }
}

/// Sampled Gaussian truncated at ±ceil(3σ) and normalized to unit sum.
///
/// `sigma == 0` yields the unit impulse.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::domain(
            "sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    if sigma == 0.0 {
        return Ok(Kernel::identity());
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(Kernel { taps })
}
