//! Seeded ablation runs.
//!
//! Every run draws its data from one root seed. Samples are nested across
//! settings: the 40 initial random labels are shared by every setting, the
//! large-random setting adds 20 more random labels, the active setting adds
//! 20 synthesized ones, and the preference setting adds 40 random pairs on top
//! of the large-random level data. All settings start from the same network
//! initialization and are scored on the same held-out set, which comes from its
//! own stream and never overlaps the training data.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{pool_similarity, random_queries, select_uncertain_pairs, synthesize_queries, TrainingPool};
use crate::config::{ExperimentConfig, PairSelection};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::oracle::Oracle;
use crate::rng::Seed;
use crate::sim::{extract_features, simulate};
use crate::stats::{mean_std, pairwise_axis_tests, AxisTests, MeanStd, Reference, KS2D_MIN_SAMPLE};
use crate::train::{
    evaluate, train_level, train_preference, LevelDataset, LevelRecord, PreferenceDataset, PreferenceRecord,
};
use crate::trust::TrustModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationSetting {
    /// Initial random labels only.
    SmallRandom,
    /// Initial plus extra random labels.
    LargeRandom,
    /// Initial random labels plus synthesized queries.
    Active,
    /// Same level data as `LargeRandom`, no preferences.
    LevelOnly,
    /// `LevelOnly` followed by preference learning.
    WithPreference,
}

impl AblationSetting {
    pub const ALL: [AblationSetting; 5] = [
        Self::SmallRandom,
        Self::LargeRandom,
        Self::Active,
        Self::LevelOnly,
        Self::WithPreference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SmallRandom => "small-random",
            Self::LargeRandom => "large-random",
            Self::Active => "active",
            Self::LevelOnly => "level-only",
            Self::WithPreference => "with-preference",
        }
    }
}

impl fmt::Display for AblationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation setting `{s}`")))
    }
}

/// Features a simulated flight actually exhibits when commanded to hit `target`.
///
/// The target is clamped into the feature box, converted to control
/// parameters, flown, and measured.
pub fn realize(target: &FeatureVector, config: &ExperimentConfig, seed: Seed, id: &str) -> Result<FeatureVector> {
    let fbox = config.feature_box();
    let clamped: FeatureVector = fbox.clamp(target.to_array()).into();
    let params = config.sim.calibration().params_for_features(&clamped, &fbox)?;
    let traj = simulate(&params, &config.sim, seed, id)?;
    extract_features(&traj, &config.sim.reference_pattern())
}

/// Draws targets and labels for one run.
struct Sampler<'a> {
    config: &'a ExperimentConfig,
    seed: Seed,
    /// Label with the noise-free rater.
    clean: bool,
}

impl Sampler<'_> {
    fn features(&self, targets: Vec<FeatureVector>, stream: &str) -> Result<Vec<FeatureVector>> {
        if !self.config.budget.realize {
            return Ok(targets);
        }
        let root = self.seed.derive(stream).derive("realize");
        targets
            .iter()
            .enumerate()
            .map(|(i, t)| realize(t, self.config, root.index(i as u64), &format!("{stream}-{i}")))
            .collect()
    }

    fn random_features(&self, n: usize, stream: &str) -> Result<Vec<FeatureVector>> {
        let targets = random_queries(&self.config.feature_box(), n, self.seed.derive(stream));
        self.features(targets, stream)
    }

    fn rater(&self, stream: &str) -> Result<Oracle> {
        let seed = Seed(self.config.oracle.seed.0 ^ self.seed.derive(stream).derive("oracle").0);
        if self.clean {
            Oracle::with_seed(&self.config.oracle.clone().noiseless(), seed)
        } else {
            Oracle::with_seed(&self.config.oracle, seed)
        }
    }

    fn levels(&self, features: Vec<FeatureVector>, stream: &str) -> Result<LevelDataset> {
        let mut rater = self.rater(stream)?;
        let dem = &self.config.demarcations;
        Ok(LevelDataset::new(
            features
                .into_iter()
                .enumerate()
                .map(|(i, features)| LevelRecord {
                    trajectory_id: format!("{stream}-{i}"),
                    label: rater.rate_level(&features, dem),
                    features,
                })
                .collect(),
        ))
    }

    fn random_levels(&self, n: usize, stream: &str) -> Result<LevelDataset> {
        let f = self.random_features(n, stream)?;
        self.levels(f, stream)
    }

    fn label_pairs(
        &self,
        pairs: impl Iterator<Item = (FeatureVector, FeatureVector)>,
        stream: &str,
    ) -> Result<PreferenceDataset> {
        let mut rater = self.rater(stream)?;
        Ok(PreferenceDataset::new(
            pairs
                .enumerate()
                .map(|(i, (first, second))| PreferenceRecord {
                    pair_id: format!("{stream}-{i}"),
                    first,
                    second,
                    label: rater.rate_preference(&first, &second),
                })
                .collect(),
        ))
    }

    fn random_pairs(&self, n: usize, stream: &str) -> Result<PreferenceDataset> {
        let f = self.random_features(2 * n, stream)?;
        self.label_pairs(f.chunks_exact(2).map(|c| (c[0], c[1])), stream)
    }

    /// Training pairs for preference learning, formed per the configured selection rule.
    fn training_pairs(&self, model: &TrustModel, stream: &str) -> Result<PreferenceDataset> {
        let budget = &self.config.budget;
        match budget.pair_selection {
            PairSelection::Random => self.random_pairs(budget.preference_pairs, stream),
            PairSelection::Uncertain => {
                let f = self.random_features(budget.pair_candidates, stream)?;
                let chosen = select_uncertain_pairs(model, &f, budget.preference_pairs);
                self.label_pairs(chosen.into_iter().map(|(i, j)| (f[i], f[j])), stream)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub level_accuracy: Option<f64>,
    pub preference_accuracy: Option<f64>,
    pub level_labels: usize,
    pub preference_labels: usize,
}

/// The untrained model every setting of a seed starts from.
pub fn initial_model(config: &ExperimentConfig, seed: Seed) -> Result<TrustModel> {
    TrustModel::init(
        config.network.clone(),
        config.feature_box(),
        config.demarcations.clone(),
        seed.derive("init"),
    )
}

fn stl_config(config: &ExperimentConfig, seed: Seed) -> crate::train::StlConfig {
    let mut stl = config.stl.clone();
    stl.train.seed = seed.derive("train");
    stl
}

fn concat(a: &LevelDataset, b: &LevelDataset) -> LevelDataset {
    LevelDataset::new(a.records.iter().chain(&b.records).cloned().collect())
}

/// Synthesizes, realizes, and labels `n` queries against `model`, with `pool` as the
/// training pool. `round` keeps the seed streams of successive rounds apart.
fn active_levels(
    sampler: &Sampler,
    model: &TrustModel,
    pool: &LevelDataset,
    n: usize,
    round: usize,
) -> Result<(LevelDataset, Vec<FeatureVector>)> {
    let config = sampler.config;
    let mut query = config.query.clone();
    query.seed = sampler.seed.derive("query").index(round as u64);
    let pool = TrainingPool::new(pool.features());
    let targets: Vec<FeatureVector> = synthesize_queries(model, &pool, &config.feature_box(), &query, n)?
        .into_iter()
        .map(|q| q.features)
        .collect();
    let stream = format!("active-{round}");
    let realized = sampler.features(targets.clone(), &stream)?;
    Ok((sampler.levels(realized, &stream)?, targets))
}

/// Grows `initial` by `extra` actively chosen labels over `rounds` rounds, retraining
/// from `init` before each round. Returns the final dataset.
fn active_learning(
    sampler: &Sampler,
    init: &TrustModel,
    initial: &LevelDataset,
    stl: &crate::train::StlConfig,
    extra: usize,
    rounds: usize,
) -> Result<LevelDataset> {
    let mut data = initial.clone();
    for round in 0..rounds {
        let n = extra * (round + 1) / rounds - extra * round / rounds;
        if n == 0 {
            continue;
        }
        let model = train_level(init, &data, stl)?.model;
        let (batch, _) = active_levels(sampler, &model, &data, n, round)?;
        data = concat(&data, &batch);
    }
    Ok(data)
}

/// Held-out level and preference sets shared by every setting of a seed,
/// drawn from their own seed streams.
pub fn held_out(config: &ExperimentConfig, seed: Seed) -> Result<(LevelDataset, PreferenceDataset)> {
    let tester = Sampler {
        config,
        seed,
        clean: config.budget.noiseless_test,
    };
    let levels = tester.random_levels(config.budget.test_levels, "test-levels")?;
    let pairs = tester.random_pairs(config.budget.test_pairs, "test-pairs")?;
    Ok((levels, pairs))
}

/// Runs one setting for one seed.
pub fn run_setting(setting: AblationSetting, config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let root = Seed(seed);
    let sampler = Sampler {
        config,
        seed: root,
        clean: false,
    };
    let budget = &config.budget;
    let initial = sampler.random_levels(budget.initial_levels, "initial")?;
    let (test_levels, test_pairs) = held_out(config, root)?;
    let init = initial_model(config, root)?;
    let stl = stl_config(config, root);

    let (model, levels, prefs) = match setting {
        AblationSetting::SmallRandom => (train_level(&init, &initial, &stl)?.model, initial.len(), 0),
        AblationSetting::LargeRandom | AblationSetting::LevelOnly | AblationSetting::WithPreference => {
            let data = concat(&initial, &sampler.random_levels(budget.extra_levels, "extra")?);
            let theta_a = train_level(&init, &data, &stl)?.model;
            if setting == AblationSetting::WithPreference {
                let pairs = sampler.training_pairs(&theta_a, "pairs")?;
                let theta_b = train_preference(&theta_a, &pairs, &stl)?.model;
                (theta_b, data.len(), pairs.len())
            } else {
                (theta_a, data.len(), 0)
            }
        }
        AblationSetting::Active => {
            let data = active_learning(
                &sampler,
                &init,
                &initial,
                &stl,
                budget.extra_levels,
                budget.active_rounds,
            )?;
            (train_level(&init, &data, &stl)?.model, data.len(), 0)
        }
    };
    let ev = evaluate(&model, &config.demarcations, &test_levels, &test_pairs);
    Ok(RunRecord {
        seed,
        level_accuracy: ev.level_accuracy,
        preference_accuracy: ev.preference_accuracy,
        level_labels: levels,
        preference_labels: prefs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub setting: AblationSetting,
    pub runs: Vec<RunRecord>,
    pub level_accuracy: Option<MeanStd>,
    pub preference_accuracy: Option<MeanStd>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    fn new(setting: AblationSetting, runs: Vec<RunRecord>, config: &ExperimentConfig) -> Self {
        let collect = |f: fn(&RunRecord) -> Option<f64>| -> Option<MeanStd> {
            let v: Option<Vec<f64>> = runs.iter().map(f).collect();
            v.and_then(|v| mean_std(&v))
        };
        Self {
            setting,
            level_accuracy: collect(|r| r.level_accuracy),
            preference_accuracy: collect(|r| r.preference_accuracy),
            runs,
            config: config.clone(),
        }
    }

    /// One JSON object per line: a header with the config, one line per run, then the summary.
    pub fn to_jsonl(&self) -> Result<String> {
        let line = |v: serde_json::Value| serde_json::to_string(&v).map_err(|e| Error::Config(e.to_string()));
        let mut out = line(serde_json::json!({
            "kind": "config",
            "setting": self.setting,
            "config": self.config,
        }))?;
        out.push('\n');
        for r in &self.runs {
            out.push_str(&line(
                serde_json::json!({ "kind": "run", "setting": self.setting, "run": r }),
            )?);
            out.push('\n');
        }
        out.push_str(&line(serde_json::json!({
            "kind": "summary",
            "setting": self.setting,
            "runs": self.runs.len(),
            "level_accuracy": self.level_accuracy,
            "preference_accuracy": self.preference_accuracy,
        }))?);
        out.push('\n');
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        let mut out = String::from("setting,seed,level_accuracy,preference_accuracy,level_labels,preference_labels\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.setting,
                r.seed,
                opt(r.level_accuracy),
                opt(r.preference_accuracy),
                r.level_labels,
                r.preference_labels
            ));
        }
        out
    }
}

/// Fixed-width table of mean ± std per setting.
pub fn summary_table(reports: &[ExperimentReport]) -> String {
    let cell = |m: Option<MeanStd>| m.map_or("-".to_string(), |m| format!("{:.3} ± {:.3}", m.mean, m.std));
    let mut out = format!("{:<22} {:>5} {:>15} {:>15}\n", "setting", "runs", "level", "preference");
    for r in reports {
        out.push_str(&format!(
            "{:<22} {:>5} {:>15} {:>15}\n",
            r.setting.name(),
            r.runs.len(),
            cell(r.level_accuracy),
            cell(r.preference_accuracy)
        ));
    }
    out
}

/// Runs `setting` once per seed, in parallel; the report lists runs in seed order.
pub fn run_ablation(setting: AblationSetting, config: &ExperimentConfig, seeds: &[u64]) -> Result<ExperimentReport> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            run_setting(setting, config, seed).map_err(|e| Error::Run {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::new(setting, runs, config))
}

/// Diversity and distinction of one synthesized batch against an equal-size random batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRun {
    pub seed: u64,
    /// Mean max-cosine similarity to the initial training pool.
    pub active_similarity: f64,
    pub random_similarity: f64,
    /// Mean distance of the model output to the nearest demarcation.
    pub active_delta: f64,
    pub random_delta: f64,
    /// Axis-pair KS tests of the synthesized batch against the random batch,
    /// when the batches are large enough.
    pub axis_tests: Option<AxisTests>,
    pub active: Vec<FeatureVector>,
    pub random: Vec<FeatureVector>,
}

/// Trains on the initial random labels, synthesizes `extra_levels` queries and
/// compares them with the same number of uniform samples from the box.
pub fn diversity_run(config: &ExperimentConfig, seed: u64) -> Result<DiversityRun> {
    config.validate()?;
    let root = Seed(seed);
    let sampler = Sampler {
        config,
        seed: root,
        clean: false,
    };
    let initial = sampler.random_levels(config.budget.initial_levels, "initial")?;
    let model = train_level(&initial_model(config, root)?, &initial, &stl_config(config, root))?.model;
    let n = config.budget.extra_levels;
    let mut query = config.query.clone();
    query.seed = root.derive("query");
    let fbox = config.feature_box();
    let pool = TrainingPool::new(initial.features());
    let active: Vec<FeatureVector> = synthesize_queries(&model, &pool, &fbox, &query, n)?
        .into_iter()
        .map(|q| q.features)
        .collect();
    let random = random_queries(&fbox, n, root.derive("random-batch"));

    let normalize = query.normalize_similarity.then_some(&fbox);
    let mean_sim = |batch: &[FeatureVector]| -> Result<f64> {
        let mut s = 0.0;
        for f in batch {
            s += pool_similarity(f, &pool, normalize)?;
        }
        Ok(s / batch.len() as f64)
    };
    let mean_delta = |batch: &[FeatureVector]| {
        batch
            .iter()
            .map(|f| model.distinction_degree(f, &config.thresholds).raw_delta)
            .sum::<f64>()
            / batch.len() as f64
    };
    Ok(DiversityRun {
        seed,
        active_similarity: mean_sim(&active)?,
        random_similarity: mean_sim(&random)?,
        active_delta: mean_delta(&active),
        random_delta: mean_delta(&random),
        axis_tests: if n >= KS2D_MIN_SAMPLE {
            Some(pairwise_axis_tests(&active, &Reference::Sample(random.clone()))?)
        } else {
            None
        },
        active,
        random,
    })
}

#[cfg(test)]
mod tests;
