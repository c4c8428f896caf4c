use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Thin-lens geometry, all distances in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LensConfig {
    pub focal_length: f64,
    pub aperture_diameter: f64,
    /// Distance of the plane in focus.
    pub focus_distance: f64,
    /// Distance of the imaged point.
    pub object_distance: f64,
}

impl LensConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("focal_length", self.focal_length),
            ("aperture_diameter", self.aperture_diameter),
            ("focus_distance", self.focus_distance),
            ("object_distance", self.object_distance),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(name, format!("must be positive, got {v}")));
            }
        }
        if self.focus_distance == self.focal_length {
            return Err(Error::domain(
                "focus_distance",
                "equals the focal length; the circle of confusion is undefined",
            ));
        }
        Ok(())
    }
}

/// Circle-of-confusion diameter `A·f·|S2−S1| / (S2·|S1−f|)` in millimetres.
pub fn coc_diameter(cfg: &LensConfig) -> Result<f64> {
    cfg.validate()?;
    let LensConfig {
        focal_length: f,
        aperture_diameter: a,
        focus_distance: s1,
        object_distance: s2,
    } = *cfg;
    Ok(a * f * (s2 - s1).abs() / (s2 * (s1 - f).abs()))
}
