//! Trajectory descriptors and the axis-aligned boxes they live in.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 3;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = ["avg_speed", "formation_error", "heading_variance"];

/// Low-dimensional descriptor of a team trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// m/s
    pub avg_speed: f64,
    /// meters
    pub formation_error: f64,
    /// circular variance of yaw increments, in [0, 1]
    pub heading_variance: f64,
}

impl FeatureVector {
    pub const fn new(avg_speed: f64, formation_error: f64, heading_variance: f64) -> Self {
        Self {
            avg_speed,
            formation_error,
            heading_variance,
        }
    }

    pub fn to_array(self) -> [f64; FEATURE_DIM] {
        [self.avg_speed, self.formation_error, self.heading_variance]
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        match values {
            [a, b, c] => Ok(Self::new(*a, *b, *c)),
            _ => Err(Error::Dimension {
                context: "feature vector",
                expected: FEATURE_DIM,
                actual: values.len(),
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Lexicographic order under `f64::total_cmp`.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (a, b) = (self.to_array(), other.to_array());
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl From<[f64; FEATURE_DIM]> for FeatureVector {
    fn from(v: [f64; FEATURE_DIM]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Per-dimension `[lower, upper]` bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBox {
    pub lower: [f64; FEATURE_DIM],
    pub upper: [f64; FEATURE_DIM],
}

impl FeasibleBox {
    pub fn new(lower: [f64; FEATURE_DIM], upper: [f64; FEATURE_DIM]) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for d in 0..FEATURE_DIM {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "box dimension {d} needs finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &[f64; FEATURE_DIM]) -> bool {
        (0..FEATURE_DIM).all(|d| v[d] >= self.lower[d] && v[d] <= self.upper[d])
    }

    pub fn contains_features(&self, f: &FeatureVector) -> bool {
        self.contains(&f.to_array())
    }

    pub fn clamp(&self, v: [f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|d| v[d].clamp(self.lower[d], self.upper[d]))
    }

    pub fn center(&self) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|d| 0.5 * (self.lower[d] + self.upper[d]))
    }

    pub fn half_width(&self) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|d| 0.5 * (self.upper[d] - self.lower[d]))
    }

    /// Affine map of the box onto `[-1, 1]^d`.
    pub fn to_unit(&self, v: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let (c, h) = (self.center(), self.half_width());
        std::array::from_fn(|d| (v[d] - c[d]) / h[d])
    }

    pub fn from_unit(&self, u: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let (c, h) = (self.center(), self.half_width());
        std::array::from_fn(|d| c[d] + h[d] * u[d])
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|d| rng.random_range(self.lower[d]..=self.upper[d]))
    }
}
