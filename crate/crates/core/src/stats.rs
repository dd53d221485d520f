//! Two-sample tests and summary statistics.
//!
//! [`ks2d`] is the Fasano–Franceschini two-dimensional Kolmogorov–Smirnov test.
//! Each point of either sample splits the plane into four quadrants; the
//! statistic is the largest difference between the two samples' quadrant
//! fractions, averaged over the two choices of which sample supplies the
//! origins. A point on a quadrant boundary counts as "not greater" on that
//! axis, so an origin point falls in its own lower-left quadrant. The p-value
//! uses the correlation-adjusted asymptotic Kolmogorov distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeasibleBox, FeatureVector};
use crate::rng::Seed;
use crate::trust::{DistinctionLevel, DistinctionThresholds, TrustModel};

pub const KS2D_MIN_SAMPLE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ks2dResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub sample_sizes: (usize, usize),
}

/// Pearson correlation; 0 when either coordinate has zero variance.
pub fn pearson(points: &[[f64; 2]]) -> f64 {
    let n = points.len() as f64;
    if points.is_empty() {
        return 0.0;
    }
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Kolmogorov survival function `Q(l) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 l^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda.is_nan() || lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Dual series converges fast for small arguments.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let mut cdf = 0.0;
        let mut j = 1;
        loop {
            let term = y.powi(j * j);
            cdf += term;
            if term < 1e-17 * cdf.max(f64::MIN_POSITIVE) || j > 100 {
                break;
            }
            j += 2;
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = sign * (a * f64::from(j * j)).exp();
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Quadrant fractions `(a, b, c, d)` of `sample` around an origin:
/// a = (x > x0, y > y0), b = (x <= x0, y > y0), c = (x <= x0, y <= y0), d = (x > x0, y <= y0).
pub type Quadrants = [f64; 4];

fn fractions(n: usize, both_le: usize, x_le: usize, y_le: usize) -> Quadrants {
    let c = both_le;
    let b = x_le - c;
    let d = y_le - c;
    let a = n - b - c - d;
    let nf = n as f64;
    [a as f64 / nf, b as f64 / nf, c as f64 / nf, d as f64 / nf]
}

/// Counts, for every origin, how many sample points lie at or below it on each axis.
struct Dominance {
    n: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Points sorted by x, with their y rank.
    by_x: Vec<(f64, usize)>,
}

impl Dominance {
    fn new(sample: &[[f64; 2]]) -> Self {
        let mut xs: Vec<f64> = sample.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = sample.iter().map(|p| p[1]).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let mut by_x: Vec<(f64, usize)> = sample
            .iter()
            .map(|p| (p[0], ys.partition_point(|&y| y <= p[1])))
            .collect();
        by_x.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            n: sample.len(),
            xs,
            ys,
            by_x,
        }
    }

    /// Quadrant fractions around every origin in `origins`, in input order.
    fn quadrants(&self, origins: &[[f64; 2]]) -> Vec<Quadrants> {
        let mut order: Vec<usize> = (0..origins.len()).collect();
        order.sort_by(|&i, &j| origins[i][0].total_cmp(&origins[j][0]));
        // Fenwick tree over y ranks 1..=n.
        let mut tree = vec![0usize; self.n + 1];
        let mut out = vec![[0.0; 4]; origins.len()];
        let mut next = 0;
        for &i in &order {
            let [x0, y0] = origins[i];
            while next < self.n && self.by_x[next].0 <= x0 {
                let mut k = self.by_x[next].1;
                while k <= self.n {
                    tree[k] += 1;
                    k += k & k.wrapping_neg();
                }
                next += 1;
            }
            let mut k = self.ys.partition_point(|&y| y <= y0);
            let mut both = 0;
            while k > 0 {
                both += tree[k];
                k &= k - 1;
            }
            let x_le = self.xs.partition_point(|&x| x <= x0);
            let y_le = self.ys.partition_point(|&y| y <= y0);
            out[i] = fractions(self.n, both, x_le, y_le);
        }
        out
    }
}

fn max_discrepancy(p: &[Quadrants], q: &[Quadrants]) -> f64 {
    p.iter()
        .zip(q)
        .flat_map(|(a, b)| (0..4).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max)
}

/// Combines the two one-sided statistics and correlations into a result.
pub fn ks2d_from_parts(d1: f64, d2: f64, r1: f64, r2: f64, n1: usize, n2: usize) -> Ks2dResult {
    let d = 0.5 * (d1 + d2);
    let sqen = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    let rr = (1.0 - 0.5 * (r1 * r1 + r2 * r2)).sqrt();
    let p = kolmogorov_q(d * sqen / (1.0 + rr * (0.25 - 0.75 / sqen)));
    Ks2dResult {
        d_statistic: d,
        p_value: p,
        sample_sizes: (n1, n2),
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < KS2D_MIN_SAMPLE {
        return Err(Error::SampleTooSmall {
            needed: KS2D_MIN_SAMPLE,
            got: n,
        });
    }
    Ok(())
}

/// Two-sample 2-D KS test in `O((n1 + n2) log(n1 + n2))`.
pub fn ks2d(sample1: &[[f64; 2]], sample2: &[[f64; 2]]) -> Result<Ks2dResult> {
    check_size(sample1.len())?;
    check_size(sample2.len())?;
    if sample1
        .iter()
        .chain(sample2)
        .any(|p| !(p[0].is_finite() && p[1].is_finite()))
    {
        return Err(Error::Config("ks2d samples must be finite".into()));
    }
    let (dom1, dom2) = (Dominance::new(sample1), Dominance::new(sample2));
    let d1 = max_discrepancy(&dom1.quadrants(sample1), &dom2.quadrants(sample1));
    let d2 = max_discrepancy(&dom1.quadrants(sample2), &dom2.quadrants(sample2));
    Ok(ks2d_from_parts(
        d1,
        d2,
        pearson(sample1),
        pearson(sample2),
        sample1.len(),
        sample2.len(),
    ))
}

/// Reference distribution for [`pairwise_axis_tests`].
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// A seeded uniform sample from the box, as large as the tested sample.
    UniformBox {
        feasible: FeasibleBox,
        seed: Seed,
    },
    Sample(Vec<FeatureVector>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTests {
    pub xy: Ks2dResult,
    pub xz: Ks2dResult,
    pub yz: Ks2dResult,
}

impl AxisTests {
    pub fn all_below(&self, alpha: f64) -> bool {
        [self.xy, self.xz, self.yz].iter().all(|r| r.p_value < alpha)
    }
}

fn project(features: &[FeatureVector], i: usize, j: usize) -> Vec<[f64; 2]> {
    features
        .iter()
        .map(|f| {
            let a = f.to_array();
            [a[i], a[j]]
        })
        .collect()
}

/// [`ks2d`] on each coordinate-pair projection against `reference`.
pub fn pairwise_axis_tests(features: &[FeatureVector], reference: &Reference) -> Result<AxisTests> {
    check_size(features.len())?;
    let drawn;
    let other: &[FeatureVector] = match reference {
        Reference::UniformBox { feasible, seed } => {
            let mut rng = seed.derive("uniform-reference").rng();
            drawn = (0..features.len())
                .map(|_| feasible.sample_uniform(&mut rng).into())
                .collect::<Vec<FeatureVector>>();
            &drawn
        }
        Reference::Sample(s) => s,
    };
    let test = |i, j| ks2d(&project(features, i, j), &project(other, i, j));
    Ok(AxisTests {
        xy: test(0, 1)?,
        xz: test(0, 2)?,
        yz: test(1, 2)?,
    })
}

/// Counts per distinction level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistinctionHistogram {
    pub one: usize,
    pub half: usize,
    pub zero: usize,
}

impl DistinctionHistogram {
    pub fn total(&self) -> usize {
        self.one + self.half + self.zero
    }
}

pub fn distinction_histogram(
    model: &TrustModel,
    features: &[FeatureVector],
    thresholds: &DistinctionThresholds,
) -> DistinctionHistogram {
    let mut h = DistinctionHistogram::default();
    for f in features {
        match model.distinction_degree(f, thresholds).level {
            DistinctionLevel::One => h.one += 1,
            DistinctionLevel::Half => h.half += 1,
            DistinctionLevel::Zero => h.zero += 1,
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std })
}
