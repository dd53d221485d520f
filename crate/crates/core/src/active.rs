//! Query synthesis.
//!
//! A query is a feature vector chosen to minimize
//! `confidence(f(psi)) + diversity_weight * max_j cos(psi, pool_j)` over the
//! feasible box. The confidence term is the distance from the raw prediction to
//! the nearest demarcation (or, in midpoint mode, the nearest midpoint between
//! adjacent demarcations). Descent runs in unit coordinates `[-1, 1]^3`, with
//! projection onto the box after every step and backtracking so an iterate
//! never gets worse. Queries are produced one at a time; each accepted query
//! joins the pool before the next one is synthesized.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeasibleBox, FeatureVector, FEATURE_DIM};
use crate::rng::Seed;
use crate::trust::TrustModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    NearestDemarcation,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub diversity_weight: f64,
    pub restarts: usize,
    pub steps: usize,
    /// Initial step length in unit coordinates.
    pub step_size: f64,
    pub confidence_mode: ConfidenceMode,
    /// Map features onto `[-1, 1]` by the box before taking cosines.
    pub normalize_similarity: bool,
    pub seed: Seed,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            diversity_weight: 0.5,
            restarts: 32,
            steps: 200,
            step_size: 0.1,
            confidence_mode: ConfidenceMode::NearestDemarcation,
            normalize_similarity: true,
            seed: Seed(0),
        }
    }
}

/// Halvings tried before a descent run stops.
const MAX_BACKTRACKS: usize = 12;

impl QueryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.diversity_weight.is_finite() && self.diversity_weight >= 0.0) {
            return Err(Error::Config(format!(
                "diversity_weight must be >= 0, got {}",
                self.diversity_weight
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Config(format!("step_size must be > 0, got {}", self.step_size)));
        }
        Ok(())
    }
}

/// Feature vectors already owned by the learner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingPool {
    features: Vec<FeatureVector>,
}

impl TrainingPool {
    pub fn new(features: Vec<FeatureVector>) -> Self {
        Self { features }
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn push(&mut self, f: FeatureVector) {
        self.features.push(f);
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

fn dot(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Plain cosine of the raw vectors; a zero vector has similarity 0 to everything.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> f64 {
    cosine(&a.to_array(), &b.to_array())
}

fn embed(psi: &FeatureVector, normalize: Option<&FeasibleBox>) -> [f64; FEATURE_DIM] {
    match normalize {
        Some(b) => b.to_unit(&psi.to_array()),
        None => psi.to_array(),
    }
}

/// Largest cosine similarity between `psi` and any pool member, optionally
/// after mapping both onto `[-1, 1]^3` by `normalize`.
pub fn pool_similarity(psi: &FeatureVector, pool: &TrainingPool, normalize: Option<&FeasibleBox>) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::Empty("training pool"));
    }
    let u = embed(psi, normalize);
    Ok(pool
        .features
        .iter()
        .map(|p| cosine(&u, &embed(p, normalize)))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Signed offset from `raw` to the nearest target; ties go to the smaller target.
fn nearest_offset(raw: f64, targets: &[f64]) -> f64 {
    let mut best = raw - targets[0];
    for t in &targets[1..] {
        let off = raw - t;
        if off.abs() < best.abs() {
            best = off;
        }
    }
    best
}

/// Everything needed to evaluate the objective in unit coordinates.
struct Objective<'a> {
    model: &'a TrustModel,
    pool: Vec<[f64; FEATURE_DIM]>,
    feasible: &'a FeasibleBox,
    targets: Vec<f64>,
    weight: f64,
    normalize: bool,
}

impl<'a> Objective<'a> {
    fn new(model: &'a TrustModel, pool: &TrainingPool, feasible: &'a FeasibleBox, config: &QueryConfig) -> Self {
        let targets = match config.confidence_mode {
            ConfidenceMode::NearestDemarcation => model.demarcations().values().to_vec(),
            ConfidenceMode::Midpoint => model.demarcations().midpoints(),
        };
        let mut obj = Self {
            model,
            pool: Vec::with_capacity(pool.len()),
            feasible,
            targets,
            weight: config.diversity_weight,
            normalize: config.normalize_similarity,
        };
        for f in pool.features() {
            obj.add(f);
        }
        obj
    }

    fn add(&mut self, f: &FeatureVector) {
        let e = self.embed_features(&f.to_array());
        self.pool.push(e);
    }

    fn embed_features(&self, psi: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        if self.normalize {
            self.feasible.to_unit(psi)
        } else {
            *psi
        }
    }

    /// Max similarity and the pool index attaining it.
    fn similarity(&self, e: &[f64; FEATURE_DIM]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (j, p) in self.pool.iter().enumerate() {
            let s = cosine(e, p);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, j));
            }
        }
        best
    }

    fn value_at(&self, psi: &FeatureVector) -> (f64, f64) {
        let raw = self.model.predict_raw(psi);
        let conf = nearest_offset(raw, &self.targets).abs();
        let sim = self
            .similarity(&self.embed_features(&psi.to_array()))
            .map_or(0.0, |s| s.0);
        (conf + self.weight * sim, sim)
    }

    fn value(&self, x: &[f64; FEATURE_DIM]) -> f64 {
        self.value_at(&self.feasible.from_unit(x).into()).0
    }

    /// Objective and its subgradient with respect to unit coordinates.
    fn value_and_grad(&self, x: &[f64; FEATURE_DIM]) -> (f64, [f64; FEATURE_DIM]) {
        let psi_arr = self.feasible.from_unit(x);
        let psi: FeatureVector = psi_arr.into();
        let h = self.feasible.half_width();
        let (raw, dfdpsi) = self.model.raw_with_feature_grad(&psi);
        let off = nearest_offset(raw, &self.targets);
        let sign = if off > 0.0 {
            1.0
        } else if off < 0.0 {
            -1.0
        } else {
            0.0
        };
        let mut grad: [f64; FEATURE_DIM] = std::array::from_fn(|d| sign * dfdpsi[d] * h[d]);
        let mut value = off.abs();

        let e = self.embed_features(&psi_arr);
        if let Some((sim, j)) = self.similarity(&e) {
            value += self.weight * sim;
            let p = &self.pool[j];
            let (ne, np) = (dot(&e, &e).sqrt(), dot(p, p).sqrt());
            if ne > 0.0 && np > 0.0 {
                let c = dot(&e, p) / (ne * np);
                for d in 0..FEATURE_DIM {
                    let de = p[d] / (ne * np) - c * e[d] / (ne * ne);
                    // de/dx is 1 in normalized coordinates, half_width otherwise.
                    let chain = if self.normalize { 1.0 } else { h[d] };
                    grad[d] += self.weight * de * chain;
                }
            }
        }
        (value, grad)
    }
}

/// `confidence(f(psi)) + diversity_weight * pool_similarity(psi)`.
///
/// With an empty pool the diversity term is 0.
pub fn query_objective(
    model: &TrustModel,
    psi: &FeatureVector,
    pool: &TrainingPool,
    feasible: &FeasibleBox,
    config: &QueryConfig,
) -> Result<f64> {
    if !psi.is_finite() || !feasible.contains_features(psi) {
        return Err(Error::OutOfBox(psi.to_array()));
    }
    Ok(Objective::new(model, pool, feasible, config).value_at(psi).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedQuery {
    pub features: FeatureVector,
    pub objective: f64,
    /// Objective at the start of the winning restart.
    pub start_objective: f64,
    /// Similarity to the pool as it stood when this query was produced.
    pub pool_similarity: f64,
}

struct Run {
    x: [f64; FEATURE_DIM],
    value: f64,
    start_value: f64,
}

fn project(x: [f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
    x.map(|v| v.clamp(-1.0, 1.0))
}

fn descend(obj: &Objective, start: [f64; FEATURE_DIM], config: &QueryConfig) -> Option<Run> {
    let mut x = project(start);
    let mut value = obj.value(&x);
    if !value.is_finite() {
        return None;
    }
    let start_value = value;
    for _ in 0..config.steps {
        let (v, g) = obj.value_and_grad(&x);
        if !v.is_finite() || g.iter().any(|c| !c.is_finite()) {
            return None;
        }
        let norm = dot(&g, &g).sqrt();
        if norm == 0.0 {
            break;
        }
        let mut eta = config.step_size;
        let mut moved = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand = project(std::array::from_fn(|d| x[d] - eta * g[d] / norm));
            let cv = obj.value(&cand);
            if !cv.is_finite() {
                return None;
            }
            if cv < value {
                x = cand;
                value = cv;
                moved = true;
                break;
            }
            eta *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Some(Run { x, value, start_value })
}

/// Produces `count` queries inside `feasible`, each the best of
/// `config.restarts` projected descent runs from uniform random starts.
pub fn synthesize_queries(
    model: &TrustModel,
    pool: &TrainingPool,
    feasible: &FeasibleBox,
    config: &QueryConfig,
    count: usize,
) -> Result<Vec<SynthesizedQuery>> {
    config.validate()?;
    feasible.validate()?;
    if count == 0 {
        return Err(Error::Config("query count must be at least 1".into()));
    }
    let mut obj = Objective::new(model, pool, feasible, config);
    let root = config.seed.derive("synthesize");
    let mut out = Vec::with_capacity(count);
    for q in 0..count {
        let qseed = root.index(q as u64);
        let runs: Vec<Option<Run>> = (0..config.restarts)
            .into_par_iter()
            .map(|r| {
                let mut rng = qseed.index(r as u64).rng();
                let start = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
                descend(&obj, start, config)
            })
            .collect();
        // Lowest objective wins; the earliest restart breaks ties.
        let best = runs
            .into_iter()
            .flatten()
            .reduce(|a, b| if b.value < a.value { b } else { a })
            .ok_or(Error::SynthesisFailed)?;
        let features: FeatureVector = feasible.clamp(feasible.from_unit(&best.x)).into();
        let (objective, similarity) = obj.value_at(&features);
        out.push(SynthesizedQuery {
            features,
            objective,
            start_objective: best.start_value,
            pool_similarity: similarity,
        });
        obj.add(&features);
    }
    Ok(out)
}

/// Greedily pairs up `candidates` so that each pair's preference probability
/// under `model` is as close to 1/2 as possible, i.e. the two predicted trust
/// values are as close as possible. Pairs are disjoint; at most `count` are
/// returned, in selection order. Ties go to the lower index pair.
pub fn select_uncertain_pairs(model: &TrustModel, candidates: &[FeatureVector], count: usize) -> Vec<(usize, usize)> {
    let raw: Vec<f64> = candidates.iter().map(|c| model.predict_raw(c)).collect();
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(raw.len() * raw.len().saturating_sub(1) / 2);
    for i in 0..raw.len() {
        for j in i + 1..raw.len() {
            all.push(((raw[i] - raw[j]).abs(), i, j));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = vec![false; raw.len()];
    let mut out = Vec::with_capacity(count);
    for (_, i, j) in all {
        if out.len() == count {
            break;
        }
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// `count` uniform samples from the box, for comparison against synthesized queries.
pub fn random_queries(feasible: &FeasibleBox, count: usize, seed: Seed) -> Vec<FeatureVector> {
    let mut rng = seed.derive("random-queries").rng();
    (0..count).map(|_| feasible.sample_uniform(&mut rng).into()).collect()
}

#[cfg(test)]
mod tests;
