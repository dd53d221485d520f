//! The trust function: an MLP over scaled features, with demarcation snapping,
//! pairwise preference probabilities and distinction degree.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeasibleBox, FeatureVector, FEATURE_DIM};
use crate::nn::{self, Checkpoint, NetworkSpec, ParamVector, Trace};
use crate::rng::Seed;

/// Ordered discrete trust values that ratings snap to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DemarcationSet(Vec<f64>);

impl Default for DemarcationSet {
    fn default() -> Self {
        Self(vec![-1.0, -0.5, 0.0, 0.5, 1.0])
    }
}

impl TryFrom<Vec<f64>> for DemarcationSet {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<DemarcationSet> for Vec<f64> {
    fn from(d: DemarcationSet) -> Self {
        d.0
    }
}

impl DemarcationSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("demarcation set needs at least 2 values".into()));
        }
        if values.iter().any(|v| !v.is_finite() || !(-1.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("demarcations must lie in [-1, 1]: {values:?}")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "demarcations must be strictly increasing: {values:?}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn contains(&self, v: f64) -> bool {
        self.0.contains(&v)
    }

    /// Validates that `value` is one of the demarcations.
    pub fn level(&self, value: f64) -> Result<TrustLevel> {
        if self.contains(value) {
            Ok(TrustLevel(value))
        } else {
            Err(Error::Config(format!("{value} is not a demarcation of {:?}", self.0)))
        }
    }

    /// Nearest demarcation; ties go to the smaller value.
    pub fn snap(&self, raw: f64) -> TrustLevel {
        let mut best = self.0[0];
        let mut best_dist = (raw - best).abs();
        for &d in &self.0[1..] {
            let dist = (raw - d).abs();
            if dist < best_dist {
                best = d;
                best_dist = dist;
            }
        }
        TrustLevel(best)
    }

    pub fn nearest_distance(&self, raw: f64) -> f64 {
        self.0.iter().map(|d| (raw - d).abs()).fold(f64::INFINITY, f64::min)
    }

    /// Nearest demarcation with the signed offset `raw - d`.
    pub fn nearest_offset(&self, raw: f64) -> f64 {
        raw - self.snap(raw).value()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.0.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn max_half_gap(&self) -> f64 {
        self.0.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(0.0, f64::max)
    }
}

/// A rating value drawn from a [`DemarcationSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrustLevel(f64);

impl TrustLevel {
    /// Bypasses membership checks; for levels already known to be valid.
    #[cfg(test)]
    pub(crate) fn new_unchecked(value: f64) -> Self {
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// One-hot comparison label `(I, I')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceLabel {
    First,
    Second,
}

impl PreferenceLabel {
    pub fn from_pair(i: u8, i_prime: u8) -> Result<Self> {
        match (i, i_prime) {
            (1, 0) => Ok(Self::First),
            (0, 1) => Ok(Self::Second),
            _ => Err(Error::Config(format!(
                "preference label must be one-hot, got ({i}, {i_prime})"
            ))),
        }
    }

    pub fn as_pair(self) -> (u8, u8) {
        match self {
            Self::First => (1, 0),
            Self::Second => (0, 1),
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Self::First => Self::Second,
            Self::Second => Self::First,
        }
    }
}

/// Anything that maps features to a raw trust score in `[-1, 1]`.
pub trait TrustScorer {
    fn raw(&self, psi: &FeatureVector) -> f64;
}

/// Two-way softmax `(e^a, e^b) / (e^a + e^b)`.
pub fn softmax2(a: f64, b: f64) -> (f64, f64) {
    let p = 1.0 / (1.0 + (b - a).exp());
    (p, 1.0 - p)
}

pub fn preference_prob<S: TrustScorer + ?Sized>(model: &S, psi_p: &FeatureVector, psi_q: &FeatureVector) -> (f64, f64) {
    softmax2(model.raw(psi_p), model.raw(psi_q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistinctionLevel {
    #[serde(rename = "0.0")]
    Zero,
    #[serde(rename = "0.5")]
    Half,
    #[serde(rename = "1.0")]
    One,
}

impl DistinctionLevel {
    pub fn value(self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Half => 0.5,
            Self::One => 1.0,
        }
    }
}

/// Bucket edges for the distinction degree: `raw_delta < zero_below` is level
/// 0.0, `< half_below` is 0.5, anything else 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistinctionThresholds {
    pub zero_below: f64,
    pub half_below: f64,
}

impl Default for DistinctionThresholds {
    fn default() -> Self {
        Self {
            zero_below: 0.05,
            half_below: 0.15,
        }
    }
}

impl DistinctionThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.zero_below >= 0.0 && self.zero_below <= self.half_below && self.half_below.is_finite()) {
            return Err(Error::Config(format!(
                "distinction thresholds need 0 <= zero_below <= half_below, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distinction {
    pub raw_delta: f64,
    pub level: DistinctionLevel,
}

pub fn distinction_of_raw(raw: f64, demarcations: &DemarcationSet, thresholds: &DistinctionThresholds) -> Distinction {
    let raw_delta = demarcations.nearest_distance(raw);
    let level = if raw_delta == 0.0 || raw_delta < thresholds.zero_below {
        DistinctionLevel::Zero
    } else if raw_delta < thresholds.half_below {
        DistinctionLevel::Half
    } else {
        DistinctionLevel::One
    };
    Distinction { raw_delta, level }
}

pub fn distinction_degree<S: TrustScorer + ?Sized>(
    model: &S,
    psi: &FeatureVector,
    demarcations: &DemarcationSet,
    thresholds: &DistinctionThresholds,
) -> Distinction {
    distinction_of_raw(model.raw(psi), demarcations, thresholds)
}

/// The learned trust function `f: features -> [-1, 1]`.
///
/// Features are mapped affinely from `input_box` onto `[-1, 1]^3` before they
/// reach the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustModel {
    spec: NetworkSpec,
    params: ParamVector,
    input_box: FeasibleBox,
    demarcations: DemarcationSet,
}

impl TrustModel {
    pub fn new(
        spec: NetworkSpec,
        params: ParamVector,
        input_box: FeasibleBox,
        demarcations: DemarcationSet,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.input_dim != FEATURE_DIM {
            return Err(Error::Dimension {
                context: "trust model input",
                expected: FEATURE_DIM,
                actual: spec.input_dim,
            });
        }
        params.check_spec(&spec)?;
        input_box.validate()?;
        Ok(Self {
            spec,
            params,
            input_box,
            demarcations,
        })
    }

    pub fn init(spec: NetworkSpec, input_box: FeasibleBox, demarcations: DemarcationSet, seed: Seed) -> Result<Self> {
        let params = ParamVector::init(&spec, seed);
        Self::new(spec, params, input_box, demarcations)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn input_box(&self) -> &FeasibleBox {
        &self.input_box
    }

    pub fn demarcations(&self) -> &DemarcationSet {
        &self.demarcations
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        params.check_spec(&self.spec)?;
        Ok(Self { params, ..self.clone() })
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub(crate) fn network_input(&self, psi: &FeatureVector) -> [f64; FEATURE_DIM] {
        self.input_box.to_unit(&psi.to_array())
    }

    pub(crate) fn trace(&self, psi: &FeatureVector) -> Trace {
        nn::forward_trace_unchecked(&self.params, &self.spec, &self.network_input(psi))
    }

    pub fn predict_raw(&self, psi: &FeatureVector) -> f64 {
        self.trace(psi).output()
    }

    /// Raw prediction and its gradient with respect to the (unscaled) features.
    pub fn raw_with_feature_grad(&self, psi: &FeatureVector) -> (f64, [f64; FEATURE_DIM]) {
        let trace = self.trace(psi);
        let mut scratch = self.params.zeros_like();
        let mut g = [0.0; FEATURE_DIM];
        nn::backward_into(&self.params, &self.spec, &trace, 1.0, &mut scratch, Some(&mut g));
        let h = self.input_box.half_width();
        (trace.output(), std::array::from_fn(|d| g[d] / h[d]))
    }

    pub fn snap_to_level(&self, raw: f64) -> TrustLevel {
        self.demarcations.snap(raw)
    }

    pub fn predict_level(&self, psi: &FeatureVector) -> TrustLevel {
        self.snap_to_level(self.predict_raw(psi))
    }

    pub fn preference_prob(&self, psi_p: &FeatureVector, psi_q: &FeatureVector) -> (f64, f64) {
        preference_prob(self, psi_p, psi_q)
    }

    pub fn distinction_degree(&self, psi: &FeatureVector, thresholds: &DistinctionThresholds) -> Distinction {
        distinction_degree(self, psi, &self.demarcations, thresholds)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec: self.spec.clone(),
            metadata: vec![
                ("demarcations".into(), self.demarcations.values().to_vec()),
                ("input_lower".into(), self.input_box.lower.to_vec()),
                ("input_upper".into(), self.input_box.upper.to_vec()),
            ],
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let meta = |name: &str| {
            ck.metadata(name)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks `{name}` metadata")))
        };
        let demarcations = DemarcationSet::new(meta("demarcations")?)?;
        let lower = FeatureVector::from_slice(&meta("input_lower")?)?.to_array();
        let upper = FeatureVector::from_slice(&meta("input_upper")?)?.to_array();
        Self::new(ck.spec, ck.params, FeasibleBox::new(lower, upper)?, demarcations)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        nn::save_params(path, &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(nn::load_params(path)?)
    }
}

impl TrustScorer for TrustModel {
    fn raw(&self, psi: &FeatureVector) -> f64 {
        self.predict_raw(psi)
    }
}

impl<S: TrustScorer + ?Sized> TrustScorer for &S {
    fn raw(&self, psi: &FeatureVector) -> f64 {
        (**self).raw(psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box() -> FeasibleBox {
        FeasibleBox::new([0.0; 3], [1.0; 3]).unwrap()
    }

    struct Constant(f64);
    impl TrustScorer for Constant {
        fn raw(&self, _: &FeatureVector) -> f64 {
            self.0
        }
    }

    /// Scores by the first feature, plus a constant bias.
    struct Shifted(f64);
    impl TrustScorer for Shifted {
        fn raw(&self, psi: &FeatureVector) -> f64 {
            psi.avg_speed + self.0
        }
    }

    #[test]
    fn snapping_examples() {
        let d = DemarcationSet::default();
        assert_eq!(d.snap(0.6).value(), 0.5);
        assert_eq!(d.snap(-1.0).value(), -1.0);
        assert_eq!(d.snap(0.25).value(), 0.0);
        assert_eq!(d.snap(-0.75).value(), -1.0);
        for &v in d.values() {
            assert_eq!(d.snap(v).value(), v);
        }
    }

    #[test]
    fn demarcation_validation() {
        assert!(DemarcationSet::new(vec![0.0]).is_err());
        assert!(DemarcationSet::new(vec![0.0, 0.0]).is_err());
        assert!(DemarcationSet::new(vec![-2.0, 0.0]).is_err());
        assert!(DemarcationSet::new(vec![-1.0, 1.0]).is_ok());
        assert!(DemarcationSet::default().level(0.3).is_err());
    }

    #[test]
    fn preference_label_pairs() {
        assert_eq!(PreferenceLabel::from_pair(1, 0).unwrap(), PreferenceLabel::First);
        assert_eq!(PreferenceLabel::Second.as_pair(), (0, 1));
        assert!(PreferenceLabel::from_pair(1, 1).is_err());
        assert!(PreferenceLabel::from_pair(0, 0).is_err());
    }

    #[test]
    fn zero_model_predicts_zero() {
        let spec = NetworkSpec::default();
        let m = TrustModel::new(
            spec.clone(),
            ParamVector::zeros(&spec),
            unit_box(),
            DemarcationSet::default(),
        )
        .unwrap();
        assert_eq!(m.predict_raw(&FeatureVector::new(0.2, 0.9, 0.4)), 0.0);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax2(0.3, 0.3), (0.5, 0.5));
        let (p, q) = softmax2(1.0, -1.0);
        let e = std::f64::consts::E;
        assert!((p - e / (e + 1.0 / e)).abs() < 1e-12);
        assert!((p - 0.8808).abs() < 1e-4 && (q - 0.1192).abs() < 1e-4);
        let (p2, q2) = softmax2(-1.0, 1.0);
        assert!((p2 - q).abs() < 1e-15 && (q2 - p).abs() < 1e-15);
    }

    #[test]
    fn distinction_examples() {
        let d = DemarcationSet::default();
        let t = DistinctionThresholds::default();
        let exact = distinction_degree(&Constant(0.5), &FeatureVector::new(0.0, 0.0, 0.0), &d, &t);
        assert_eq!(exact.raw_delta, 0.0);
        assert_eq!(exact.level, DistinctionLevel::Zero);
        let mid = distinction_degree(&Constant(0.25), &FeatureVector::new(0.0, 0.0, 0.0), &d, &t);
        assert_eq!(mid.raw_delta, 0.25);
        assert_eq!(mid.raw_delta, d.max_half_gap());
        assert_eq!(mid.level, DistinctionLevel::One);
        assert_eq!(distinction_of_raw(0.1, &d, &t).level, DistinctionLevel::Half);
    }

    #[test]
    fn checkpoint_round_trip_preserves_model() {
        let m = TrustModel::init(NetworkSpec::default(), unit_box(), DemarcationSet::default(), Seed(7)).unwrap();
        let back = TrustModel::from_checkpoint(Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn feature_gradient_matches_differences() {
        let b = FeasibleBox::new([2.0, 0.0, 0.0], [12.0, 20.0, 0.8]).unwrap();
        let m = TrustModel::init(NetworkSpec::default(), b, DemarcationSet::default(), Seed(5)).unwrap();
        let psi = [6.0, 7.0, 0.3];
        let (_, g) = m.raw_with_feature_grad(&psi.into());
        for d in 0..3 {
            let h = 1e-5 * b.half_width()[d];
            let mut hi = psi;
            let mut lo = psi;
            hi[d] += h;
            lo[d] -= h;
            let num = (m.predict_raw(&hi.into()) - m.predict_raw(&lo.into())) / (2.0 * h);
            assert!(
                (num - g[d]).abs() <= 1e-8 + 1e-4 * num.abs(),
                "dim {d}: {num} vs {}",
                g[d]
            );
        }
    }

    proptest! {
        #[test]
        fn output_strictly_bounded(seed in any::<u64>(), x in prop::array::uniform3(-5.0f64..5.0)) {
            let m = TrustModel::init(NetworkSpec::default(), unit_box(), DemarcationSet::default(), Seed(seed)).unwrap();
            let y = m.predict_raw(&x.into());
            prop_assert!(y > -1.0 && y < 1.0);
        }

        #[test]
        fn preference_probabilities(a in -1.0f64..1.0, b in -1.0f64..1.0, shift in -5.0f64..5.0) {
            let (p, q) = softmax2(a, b);
            prop_assert!((p + q - 1.0).abs() < 1e-12);
            if a > b { prop_assert!(p > 0.5); }
            let (qs, ps) = softmax2(b, a);
            prop_assert!((p - ps).abs() < 1e-15 && (q - qs).abs() < 1e-15);
            prop_assert!(a <= b || p > 0.5);
            let x = FeatureVector::new(a, 0.0, 0.0);
            let y = FeatureVector::new(b, 0.0, 0.0);
            let base = preference_prob(&Shifted(0.0), &x, &y);
            let moved = preference_prob(&Shifted(shift), &x, &y);
            prop_assert!((base.0 - moved.0).abs() < 1e-12);
        }

        #[test]
        fn distinction_delta_bounded(raw in -1.0f64..=1.0) {
            let d = DemarcationSet::default();
            let dist = distinction_of_raw(raw, &d, &DistinctionThresholds::default());
            prop_assert!(dist.raw_delta >= 0.0 && dist.raw_delta <= d.max_half_gap());
            let snapped = d.snap(raw).value();
            prop_assert_eq!(d.snap(snapped).value(), snapped);
        }
    }
}
