//! Synthetic trust rater.
//!
//! A closed-form ground-truth trust function over features, plus seeded noise
//! on level ratings (Gaussian before snapping) and on preferences (label flip).
//! Stands in for human raters in benchmarks and scripted sessions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};
use crate::rng::{Seed, StlRng};
use crate::trust::{DemarcationSet, PreferenceLabel, TrustLevel, TrustScorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrustFunction {
    /// `bias + weights . psi`
    Affine { bias: f64, weights: [f64; FEATURE_DIM] },
    /// `base + (peak - base) * exp(-sum(((psi - center) / widths)^2))`
    Radial {
        center: [f64; FEATURE_DIM],
        widths: [f64; FEATURE_DIM],
        peak: f64,
        base: f64,
    },
    /// Linear interpolation over `[x, y]` knots of one feature, flat beyond the ends.
    Piecewise { feature: usize, knots: Vec<[f64; 2]> },
    /// `low + (high - low) * exp(-((speed - speed_center) / speed_width)^2) * clamp(bias + weights . psi, 0, 1)`
    Composite {
        speed_center: f64,
        speed_width: f64,
        bias: f64,
        weights: [f64; FEATURE_DIM],
        low: f64,
        high: f64,
    },
}

impl TrustFunction {
    fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Self::Affine { bias, weights } => bias.is_finite() && finite(weights),
            Self::Radial {
                center,
                widths,
                peak,
                base,
            } => {
                finite(center)
                    && widths.iter().all(|w| w.is_finite() && *w > 0.0)
                    && peak.is_finite()
                    && base.is_finite()
            }
            Self::Piecewise { feature, knots } => {
                *feature < FEATURE_DIM
                    && !knots.is_empty()
                    && knots.iter().all(|k| finite(k))
                    && knots.windows(2).all(|w| w[0][0] < w[1][0])
            }
            Self::Composite {
                speed_center,
                speed_width,
                bias,
                weights,
                low,
                high,
            } => {
                speed_center.is_finite()
                    && *speed_width > 0.0
                    && bias.is_finite()
                    && finite(weights)
                    && finite(&[*low, *high])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trust function coefficients: {self:?}")))
        }
    }

    /// Unclamped value.
    fn eval(&self, psi: &FeatureVector) -> f64 {
        let x = psi.to_array();
        let dot = |w: &[f64; FEATURE_DIM]| w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        match self {
            Self::Affine { bias, weights } => bias + dot(weights),
            Self::Radial {
                center,
                widths,
                peak,
                base,
            } => {
                let r2: f64 = (0..FEATURE_DIM).map(|d| ((x[d] - center[d]) / widths[d]).powi(2)).sum();
                base + (peak - base) * (-r2).exp()
            }
            Self::Piecewise { feature, knots } => {
                let v = x[*feature];
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if v <= first[0] {
                    return first[1];
                }
                if v >= last[0] {
                    return last[1];
                }
                let k = knots
                    .windows(2)
                    .find(|w| v <= w[1][0])
                    .expect("v lies inside the knot range");
                let t = (v - k[0][0]) / (k[1][0] - k[0][0]);
                k[0][1] + t * (k[1][1] - k[0][1])
            }
            Self::Composite {
                speed_center,
                speed_width,
                bias,
                weights,
                low,
                high,
            } => {
                let speed = (-((psi.avg_speed - speed_center) / speed_width).powi(2)).exp();
                let quality = (bias + dot(weights)).clamp(0.0, 1.0);
                low + (high - low) * speed * quality
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSpec {
    pub trust_function: TrustFunction,
    pub level_noise_std: f64,
    /// Probability of flipping a preference label, in `[0, 0.5)`.
    pub preference_noise: f64,
    pub seed: Seed,
}

impl Default for OracleSpec {
    /// Benchmark rater: trust peaks at a moderate speed and falls with formation
    /// error and heading variance. Absolute ratings are noisier than comparisons.
    fn default() -> Self {
        Self {
            trust_function: TrustFunction::Composite {
                speed_center: 7.0,
                speed_width: 5.0,
                bias: 1.2,
                weights: [0.0, -0.04, -0.5],
                low: -1.0,
                high: 1.0,
            },
            level_noise_std: 0.15,
            preference_noise: 0.05,
            seed: Seed(0),
        }
    }
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        self.trust_function.validate()?;
        if !(self.level_noise_std.is_finite() && self.level_noise_std >= 0.0) {
            return Err(Error::Config(format!(
                "level_noise_std must be >= 0, got {}",
                self.level_noise_std
            )));
        }
        if !(0.0..0.5).contains(&self.preference_noise) {
            return Err(Error::Config(format!(
                "preference_noise must lie in [0, 0.5), got {}",
                self.preference_noise
            )));
        }
        Ok(())
    }

    pub fn noiseless(mut self) -> Self {
        self.level_noise_std = 0.0;
        self.preference_noise = 0.0;
        self
    }
}

/// Ground-truth trust in `[-1, 1]`.
pub fn true_trust(spec: &OracleSpec, psi: &FeatureVector) -> f64 {
    spec.trust_function.eval(psi).clamp(-1.0, 1.0)
}

/// A rater instance with its own noise stream.
#[derive(Debug, Clone)]
pub struct Oracle {
    spec: OracleSpec,
    rng: StlRng,
}

impl Oracle {
    pub fn new(spec: OracleSpec) -> Result<Self> {
        spec.validate()?;
        let rng = spec.seed.derive("oracle").rng();
        Ok(Self { spec, rng })
    }

    /// Same rater with a different noise stream.
    pub fn with_seed(spec: &OracleSpec, seed: Seed) -> Result<Self> {
        Self::new(OracleSpec { seed, ..spec.clone() })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn true_trust(&self, psi: &FeatureVector) -> f64 {
        true_trust(&self.spec, psi)
    }

    /// The noisy pre-snap value. Always consumes one normal draw.
    pub fn noisy_trust(&mut self, psi: &FeatureVector) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        (self.true_trust(psi) + self.spec.level_noise_std * z).clamp(-1.0, 1.0)
    }

    pub fn rate_level(&mut self, psi: &FeatureVector, demarcations: &DemarcationSet) -> TrustLevel {
        let v = self.noisy_trust(psi);
        demarcations.snap(v)
    }

    /// Prefers the higher true trust; exact ties go to the lexicographically
    /// larger feature vector. Always consumes one uniform draw.
    pub fn rate_preference(&mut self, psi_p: &FeatureVector, psi_q: &FeatureVector) -> PreferenceLabel {
        let (tp, tq) = (self.true_trust(psi_p), self.true_trust(psi_q));
        let truth = if tp > tq {
            PreferenceLabel::First
        } else if tq > tp {
            PreferenceLabel::Second
        } else if psi_p.lex_cmp(psi_q).is_ge() {
            PreferenceLabel::First
        } else {
            PreferenceLabel::Second
        };
        let u: f64 = self.rng.random();
        if u < self.spec.preference_noise {
            truth.swapped()
        } else {
            truth
        }
    }
}

impl TrustScorer for OracleSpec {
    fn raw(&self, psi: &FeatureVector) -> f64 {
        true_trust(self, psi)
    }
}
