use serde::{Deserialize, Serialize};

use super::ControlParams;
use crate::error::{Error, Result};
use crate::features::{FeasibleBox, FeatureVector};

/// Monotone feature-response curves of the simulator.
///
/// - speed: identity;
/// - formation error: `|spacing - nominal| * (n + 1) / 3`, the mean `|i - j|`
///   over slot pairs of an `n`-robot line;
/// - heading variance: `1 - exp(-sigma^2)`, the circular variance of the
///   difference of two independent wrapped normals with std `sigma`.
///
/// Turn transients (formation re-forming after a waypoint) perturb the
/// whole-trajectory features by a few percent; the curves describe cruise
/// behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCalibration {
    pub team_size: usize,
    pub nominal_spacing: f64,
}

impl FeatureCalibration {
    pub fn new(team_size: usize, nominal_spacing: f64) -> Self {
        Self {
            team_size,
            nominal_spacing,
        }
    }

    fn mean_slot_gap(&self) -> f64 {
        (self.team_size as f64 + 1.0) / 3.0
    }

    pub fn expected_features(&self, params: &ControlParams) -> FeatureVector {
        FeatureVector::new(
            params.commanded_speed,
            (params.formation_spacing - self.nominal_spacing).abs() * self.mean_slot_gap(),
            1.0 - (-params.heading_noise_std.powi(2)).exp(),
        )
    }

    /// Image of a control box with spacing at or above the nominal spacing.
    pub fn feature_box(&self, control_box: &FeasibleBox) -> FeasibleBox {
        let lo = self.expected_features(&ControlParams::from_array(control_box.lower));
        let hi = self.expected_features(&ControlParams::from_array(control_box.upper));
        FeasibleBox {
            lower: lo.to_array(),
            upper: hi.to_array(),
        }
    }

    /// Control parameters whose cruise features reproduce `target`.
    pub fn params_for_features(&self, target: &FeatureVector, feature_box: &FeasibleBox) -> Result<ControlParams> {
        if !target.is_finite() || !feature_box.contains_features(target) {
            return Err(Error::OutOfBox(target.to_array()));
        }
        if target.heading_variance >= 1.0 {
            return Err(Error::OutOfBox(target.to_array()));
        }
        Ok(ControlParams {
            commanded_speed: target.avg_speed,
            formation_spacing: self.nominal_spacing + target.formation_error / self.mean_slot_gap(),
            heading_noise_std: (-(1.0 - target.heading_variance).ln()).max(0.0).sqrt(),
        })
    }
}
