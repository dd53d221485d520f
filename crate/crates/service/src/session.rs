//! Single-operator labeling session: model, label pools, pending queries.
//!
//! All state changes go through `&mut Session`; the HTTP layer serializes
//! access. Labels are appended and synced to the dataset files before a
//! submission is acknowledged.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use stl_api::{LabelPayload, Metrics, PoolSizes, QueryDescriptor, QueryItem, QueryKind, Task};
use stl_core::active::{random_queries, select_uncertain_pairs, synthesize_queries, TrainingPool};
use stl_core::config::{ExperimentConfig, PairSelection};
use stl_core::harness::{held_out, initial_model};
use stl_core::sim::{extract_features, load_trajectory, save_trajectory, simulate, Trajectory};
use stl_core::stats::distinction_histogram;
use stl_core::train::{
    append_level_record, append_preference_record, evaluate, read_level_dataset, read_preference_dataset, train_level,
    train_preference, LevelDataset, LevelRecord, PreferenceDataset, PreferenceRecord, StlConfig,
};
use stl_core::trust::{PreferenceLabel, TrustModel};
use stl_core::{FeatureVector, Seed};

use crate::error::ServiceError;

const LEVELS_FILE: &str = "levels.tsv";
const PREFERENCES_FILE: &str = "preferences.tsv";
const MODEL_FILE: &str = "model.ckpt";
const THETA_A_FILE: &str = "theta_a.ckpt";
const TRAJECTORY_DIR: &str = "trajectories";

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Unlabeled trajectories flown at startup for preference queries.
    pub unlabeled: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            config: ExperimentConfig::default(),
            seed: 0,
            unlabeled: 40,
        }
    }
}

#[derive(Debug, Clone)]
struct Pending {
    kind: QueryKind,
    items: Vec<(String, FeatureVector)>,
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub task: Task,
    pub final_loss: f64,
}

pub struct Session {
    dir: PathBuf,
    config: ExperimentConfig,
    seed: Seed,
    init: TrustModel,
    model: TrustModel,
    theta_a: Option<TrustModel>,
    trained: bool,
    levels: LevelDataset,
    preferences: PreferenceDataset,
    test_levels: LevelDataset,
    test_pairs: PreferenceDataset,
    /// Unlabeled trajectories not yet used in a labeled pair.
    unlabeled: Vec<(String, FeatureVector)>,
    pending: BTreeMap<String, Pending>,
    answered: BTreeSet<String>,
    queries_issued: u64,
    flights: u64,
    revision: u64,
}

/// Flies the parameters that should produce `target` and measures the result.
fn fly(
    config: &ExperimentConfig,
    target: &FeatureVector,
    seed: Seed,
    id: &str,
) -> stl_core::Result<(Trajectory, FeatureVector)> {
    let fbox = config.feature_box();
    let clamped: FeatureVector = fbox.clamp(target.to_array()).into();
    let params = config.sim.calibration().params_for_features(&clamped, &fbox)?;
    let traj = simulate(&params, &config.sim, seed, id)?;
    let features = extract_features(&traj, &config.sim.reference_pattern())?;
    Ok((traj, features))
}

fn pair_id(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

impl Session {
    /// Opens `dir`, creating it if needed. Existing label files and
    /// checkpoints are picked up; pending queries from earlier runs are not.
    pub fn open(dir: impl Into<PathBuf>, options: SessionOptions) -> Result<Self, ServiceError> {
        let dir = dir.into();
        let SessionOptions {
            config,
            seed,
            unlabeled,
        } = options;
        config.validate()?;
        let seed = Seed(seed);
        let traj_dir = dir.join(TRAJECTORY_DIR);
        fs::create_dir_all(&traj_dir).map_err(|e| ServiceError::io(&traj_dir, e))?;

        let levels = match dir.join(LEVELS_FILE) {
            p if p.exists() => read_level_dataset(&p, &config.demarcations)?,
            _ => LevelDataset::default(),
        };
        let preferences = match dir.join(PREFERENCES_FILE) {
            p if p.exists() => read_preference_dataset(&p)?,
            _ => PreferenceDataset::default(),
        };
        let used: BTreeSet<&str> = preferences.records.iter().flat_map(|r| r.pair_id.split('|')).collect();

        let mut pool = Vec::with_capacity(unlabeled);
        let targets = random_queries(&config.feature_box(), unlabeled, seed.derive("unlabeled"));
        for (i, t) in targets.iter().enumerate() {
            let id = format!("u-{i:04}");
            let (traj, f) = fly(&config, t, seed.derive("unlabeled-flight").index(i as u64), &id)?;
            save_trajectory(traj_dir.join(format!("{id}.traj")), &traj)?;
            if !used.contains(id.as_str()) {
                pool.push((id, f));
            }
        }
        let flights = fs::read_dir(&traj_dir)
            .map_err(|e| ServiceError::io(&traj_dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with("q-"))
            .count() as u64;

        let init = initial_model(&config, seed)?;
        let theta_a = match dir.join(THETA_A_FILE) {
            p if p.exists() => Some(TrustModel::load(&p)?),
            _ => None,
        };
        let (model, trained) = match dir.join(MODEL_FILE) {
            p if p.exists() => (TrustModel::load(&p)?, true),
            _ => (init.clone(), false),
        };
        let (test_levels, test_pairs) = held_out(&config, seed)?;
        fs::write(dir.join("config.toml"), config.to_toml()?)
            .map_err(|e| ServiceError::io(dir.join("config.toml"), e))?;

        Ok(Self {
            dir,
            config,
            seed,
            init,
            model,
            theta_a,
            trained,
            levels,
            preferences,
            test_levels,
            test_pairs,
            unlabeled: pool,
            pending: BTreeMap::new(),
            answered: BTreeSet::new(),
            queries_issued: 0,
            flights,
            revision: 0,
        })
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &TrustModel {
        &self.model
    }

    pub fn levels(&self) -> &LevelDataset {
        &self.levels
    }

    pub fn preferences(&self) -> &PreferenceDataset {
        &self.preferences
    }

    pub fn pools(&self) -> PoolSizes {
        PoolSizes {
            levels: self.levels.len(),
            preferences: self.preferences.len(),
        }
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    fn item(&self, id: &str, f: FeatureVector) -> QueryItem {
        QueryItem {
            trajectory_id: id.to_owned(),
            features: f,
            prediction: self.model.predict_raw(&f),
            target: None,
        }
    }

    fn register(&mut self, kind: QueryKind, items: Vec<QueryItem>) -> QueryDescriptor {
        self.queries_issued += 1;
        let query_id = format!("query-{:06}", self.queries_issued);
        let pending = Pending {
            kind,
            items: items.iter().map(|i| (i.trajectory_id.clone(), i.features)).collect(),
        };
        self.pending.insert(query_id.clone(), pending);
        self.revision += 1;
        QueryDescriptor { query_id, kind, items }
    }

    /// Issues the next query and marks it pending.
    pub fn next_query(&mut self, kind: QueryKind) -> Result<QueryDescriptor, ServiceError> {
        match kind {
            QueryKind::Level => self.next_level_query(),
            QueryKind::Preference => self.next_preference_query(),
        }
    }

    fn next_level_query(&mut self) -> Result<QueryDescriptor, ServiceError> {
        let n = self.flights;
        let mut pool = TrainingPool::new(self.levels.features());
        for p in self.pending.values().filter(|p| p.kind == QueryKind::Level) {
            pool.push(p.items[0].1);
        }
        let mut query = self.config.query.clone();
        query.seed = self.seed.derive("query").index(n);
        let target = synthesize_queries(&self.model, &pool, &self.config.feature_box(), &query, 1)?
            .remove(0)
            .features;
        let id = format!("q-{n:04}");
        let (traj, f) = fly(&self.config, &target, self.seed.derive("query-flight").index(n), &id)?;
        save_trajectory(self.trajectory_path(&id), &traj)?;
        self.flights += 1;
        let mut item = self.item(&id, f);
        item.target = Some(target);
        Ok(self.register(QueryKind::Level, vec![item]))
    }

    fn next_preference_query(&mut self) -> Result<QueryDescriptor, ServiceError> {
        let reserved: BTreeSet<&str> = self
            .pending
            .values()
            .flat_map(|p| p.items.iter().map(|(id, _)| id.as_str()))
            .collect();
        let free: Vec<&(String, FeatureVector)> = self
            .unlabeled
            .iter()
            .filter(|(id, _)| !reserved.contains(id.as_str()))
            .collect();
        if free.len() < 2 {
            return Err(ServiceError::Exhausted(QueryKind::Preference));
        }
        let (i, j) = match self.config.budget.pair_selection {
            PairSelection::Uncertain => {
                let feats: Vec<FeatureVector> = free.iter().map(|(_, f)| *f).collect();
                select_uncertain_pairs(&self.model, &feats, 1)[0]
            }
            PairSelection::Random => {
                let mut rng = self.seed.derive("pairs").index(self.queries_issued).rng();
                let picked = sample(&mut rng, free.len(), 2);
                (picked.index(0), picked.index(1))
            }
        };
        let items = vec![self.item(&free[i].0, free[i].1), self.item(&free[j].0, free[j].1)];
        Ok(self.register(QueryKind::Preference, items))
    }

    /// Stores a label for a pending query.
    pub fn submit(&mut self, query_id: &str, payload: &LabelPayload) -> Result<PoolSizes, ServiceError> {
        let Some(pending) = self.pending.get(query_id) else {
            return Err(if self.answered.contains(query_id) {
                ServiceError::Duplicate(query_id.to_owned())
            } else {
                ServiceError::UnknownQuery(query_id.to_owned())
            });
        };
        if pending.kind != payload.kind() {
            return Err(ServiceError::KindMismatch {
                expected: pending.kind,
                got: payload.kind(),
            });
        }
        match *payload {
            LabelPayload::Level { level } => {
                let label = self
                    .config
                    .demarcations
                    .level(level)
                    .map_err(|e| ServiceError::InvalidLabel(e.to_string()))?;
                let (id, features) = pending.items[0].clone();
                let record = LevelRecord {
                    trajectory_id: id,
                    features,
                    label,
                };
                append_level_record(self.dir.join(LEVELS_FILE), &record)?;
                self.levels.push(record);
            }
            LabelPayload::Preference { label } => {
                let label = PreferenceLabel::from_pair(label[0], label[1])
                    .map_err(|e| ServiceError::InvalidLabel(e.to_string()))?;
                let (a, fa) = pending.items[0].clone();
                let (b, fb) = pending.items[1].clone();
                let record = PreferenceRecord {
                    pair_id: pair_id(&a, &b),
                    first: fa,
                    second: fb,
                    label,
                };
                append_preference_record(self.dir.join(PREFERENCES_FILE), &record)?;
                self.preferences.push(record);
                self.unlabeled.retain(|(id, _)| *id != a && *id != b);
            }
        }
        self.pending.remove(query_id);
        self.answered.insert(query_id.to_owned());
        self.revision += 1;
        Ok(self.pools())
    }

    fn stl(&self) -> StlConfig {
        let mut stl = self.config.stl.clone();
        stl.train.seed = self.seed.derive("train");
        stl
    }

    /// Retrains stage `a` from the initial model on all level labels, or
    /// stage `b` from the last stage-`a` model on all preference labels.
    /// On error the model is unchanged.
    pub fn retrain(&mut self, task: Task) -> Result<RetrainOutcome, ServiceError> {
        let stl = self.stl();
        let outcome = match task {
            Task::A => {
                if self.levels.is_empty() {
                    return Err(ServiceError::EmptyPool(QueryKind::Level));
                }
                let out = train_level(&self.init, &self.levels, &stl)?;
                out.model.save(self.dir.join(THETA_A_FILE))?;
                self.theta_a = Some(out.model.clone());
                out
            }
            Task::B => {
                let theta_a = self.theta_a.as_ref().ok_or(ServiceError::NotTrained)?;
                if self.preferences.is_empty() {
                    return Err(ServiceError::EmptyPool(QueryKind::Preference));
                }
                train_preference(theta_a, &self.preferences, &stl)?
            }
        };
        outcome.model.save(self.dir.join(MODEL_FILE))?;
        self.model = outcome.model;
        self.trained = true;
        self.revision += 1;
        Ok(RetrainOutcome {
            task,
            final_loss: outcome.history.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Held-out evaluation of the current model.
    pub fn metrics(&self) -> Metrics {
        let ev = evaluate(
            &self.model,
            &self.config.demarcations,
            &self.test_levels,
            &self.test_pairs,
        );
        let histogram = distinction_histogram(&self.model, &self.test_levels.features(), &self.config.thresholds);
        Metrics {
            revision: self.revision,
            level_accuracy: ev.level_accuracy,
            preference_accuracy: ev.preference_accuracy,
            histogram,
            sample_count: histogram.total(),
            pools: self.pools(),
            trained: self.trained,
            demarcations: self.config.demarcations.values().to_vec(),
        }
    }

    fn trajectory_path(&self, id: &str) -> PathBuf {
        self.dir.join(TRAJECTORY_DIR).join(format!("{id}.traj"))
    }

    /// Loads a stored trajectory; ids are restricted to what the session writes.
    pub fn trajectory(&self, id: &str) -> Result<Trajectory, ServiceError> {
        trajectory_from_dir(&self.dir, id)
    }
}

/// Reads trajectory `id` from a session directory without touching session state.
pub fn trajectory_from_dir(dir: &Path, id: &str) -> Result<Trajectory, ServiceError> {
    let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    let path = dir.join(TRAJECTORY_DIR).join(format!("{id}.traj"));
    if !valid || !path.exists() {
        return Err(ServiceError::NotFound(id.to_owned()));
    }
    Ok(load_trajectory(&path)?)
}
