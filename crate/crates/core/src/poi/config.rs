use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orientation::OrientationMethod;

/// Step-halving search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub precision_mm: f64,
    pub initial_step_mm: f64,
    pub max_iterations: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self { precision_mm: 0.05, initial_step_mm: 4.0, max_iterations: 200 }
    }
}

impl BisectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.precision_mm > 0.0) || !(self.initial_step_mm > 0.0) {
            return Err(Error::InvalidConfig("bisection precision and step must be positive".into()));
        }
        if self.precision_mm >= self.initial_step_mm {
            return Err(Error::InvalidConfig(format!(
                "bisection precision {} mm must be below the initial step {} mm",
                self.precision_mm, self.initial_step_mm
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Ray marching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayConfig {
    pub march_step_mm: f64,
    /// Longest distance sampled along a ray; `None` uses the diagonal of the
    /// vertebra's bounding box.
    pub max_travel_mm: Option<f64>,
}

impl Default for RayConfig {
    fn default() -> Self {
        Self { march_step_mm: 0.25, max_travel_mm: None }
    }
}

impl RayConfig {
    pub fn validate(&self, min_spacing: f64) -> Result<()> {
        if !(self.march_step_mm > 0.0) {
            return Err(Error::InvalidConfig("ray march step must be positive".into()));
        }
        if self.march_step_mm > min_spacing + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "ray march step {} mm exceeds the finest voxel spacing {min_spacing} mm",
                self.march_step_mm
            )));
        }
        if let Some(t) = self.max_travel_mm {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig("max ray travel must be positive".into()));
            }
        }
        Ok(())
    }
}

/// How the vertebra-dependent factor rescales the lateral shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMode {
    /// Base shift divided by the factor: smaller offsets toward the neck.
    #[default]
    Divide,
    /// Base shift multiplied by the factor.
    Multiply,
}

impl fmt::Display for ShiftMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftMode::Divide => "divide",
            ShiftMode::Multiply => "multiply",
        })
    }
}

impl FromStr for ShiftMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "divide" => Ok(ShiftMode::Divide),
            "multiply" => Ok(ShiftMode::Multiply),
            _ => Err(format!("unknown shift mode '{s}' (expected divide or multiply)")),
        }
    }
}

/// Everything [`extract_all`](crate::poi::extract_all) needs besides the spine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ExtractionConfig {
    pub method: OrientationMethod,
    pub ray: RayConfig,
    pub bisection: BisectionConfig,
    pub shift_mode: ShiftMode,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let b = BisectionConfig::default();
        assert_eq!((b.precision_mm, b.initial_step_mm, b.max_iterations), (0.05, 4.0, 200));
        b.validate().unwrap();
        let r = RayConfig::default();
        assert_eq!(r.march_step_mm, 0.25);
        r.validate(0.8).unwrap();
        assert!(r.validate(0.2).is_err());
        assert_eq!(ShiftMode::default(), ShiftMode::Divide);
        assert_eq!(ExtractionConfig::default().method, OrientationMethod::Projection2d);
    }

    #[test]
    fn rejects_inverted_precision() {
        let b = BisectionConfig { precision_mm: 5.0, ..Default::default() };
        assert!(b.validate().is_err());
        let b = BisectionConfig { precision_mm: 0.0, ..Default::default() };
        assert!(b.validate().is_err());
    }
}
