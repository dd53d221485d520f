//! Experiment configuration, loaded from TOML.
//!
//! Every section is optional and falls back to its default, so an empty file
//! is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::active::QueryConfig;
use crate::error::{Error, Result};
use crate::features::FeasibleBox;
use crate::nn::NetworkSpec;
use crate::oracle::OracleSpec;
use crate::sim::SimConfig;
use crate::train::StlConfig;
use crate::trust::{DemarcationSet, DistinctionThresholds};

/// How training pairs for preference learning are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSelection {
    /// Consecutive random samples.
    Random,
    /// From a random candidate set, the disjoint pairs the level model finds
    /// hardest to order (preference probability closest to 1/2).
    Uncertain,
}

/// Label budgets for one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    /// Random level labels every setting starts from.
    pub initial_levels: usize,
    /// Extra level labels: random in the large-random setting, synthesized in the active one.
    pub extra_levels: usize,
    /// Retrain-and-synthesize rounds the extra active labels are split across.
    pub active_rounds: usize,
    pub preference_pairs: usize,
    pub pair_selection: PairSelection,
    /// Candidate trajectories drawn for uncertain pair selection.
    pub pair_candidates: usize,
    pub test_levels: usize,
    pub test_pairs: usize,
    /// Turn target features into simulated trajectories before labeling.
    pub realize: bool,
    /// Score held-out data against the noise-free rater.
    pub noiseless_test: bool,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            initial_levels: 40,
            extra_levels: 20,
            active_rounds: 1,
            preference_pairs: 40,
            pair_selection: PairSelection::Uncertain,
            pair_candidates: 200,
            test_levels: 40,
            test_pairs: 40,
            realize: true,
            noiseless_test: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub stl: StlConfig,
    pub query: QueryConfig,
    pub oracle: OracleSpec,
    pub sim: SimConfig,
    pub demarcations: DemarcationSet,
    pub thresholds: DistinctionThresholds,
    pub budget: BudgetConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.stl.validate()?;
        self.query.validate()?;
        self.oracle.validate()?;
        self.sim.validate()?;
        self.thresholds.validate()?;
        if self.budget.active_rounds == 0 {
            return Err(Error::Config("active_rounds must be at least 1".into()));
        }
        if self.budget.pair_selection == PairSelection::Uncertain
            && self.budget.pair_candidates < 2 * self.budget.preference_pairs
        {
            return Err(Error::Config(format!(
                "pair_candidates ({}) must be at least twice preference_pairs ({})",
                self.budget.pair_candidates, self.budget.preference_pairs
            )));
        }
        if self.budget.initial_levels == 0 {
            return Err(Error::Config("initial_levels must be at least 1".into()));
        }
        Ok(())
    }

    pub fn feature_box(&self) -> FeasibleBox {
        self.sim.feature_box()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
