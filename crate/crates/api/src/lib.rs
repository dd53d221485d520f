//! Wire types of the labeling service.
//!
//! Every response body carries the session `revision`, which strictly
//! increases with each mutation (query issued, label stored, model retrained).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stl_core::sim::{RobotState, Vec3};
use stl_core::stats::DistinctionHistogram;
use stl_core::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Level,
    Preference,
}

impl QueryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Level => "level",
            Self::Preference => "preference",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "level" => Ok(Self::Level),
            "preference" => Ok(Self::Preference),
            other => Err(format!("unknown query kind `{other}`")),
        }
    }
}

/// Training stage: `a` fits trust levels, `b` fits preferences on top of `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    A,
    B,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            other => Err(format!("unknown task `{other}`, expected `a` or `b`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rater {
    Human,
    Oracle,
}

/// One trajectory shown to the rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub trajectory_id: String,
    /// Features measured on the flown trajectory.
    pub features: FeatureVector,
    /// Current model output for these features.
    pub prediction: f64,
    /// Synthesized features the flight was commanded to exhibit, for active queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<FeatureVector>,
}

/// A pending question: one item for a level query, two (A then B) for a preference query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDescriptor {
    pub query_id: String,
    pub kind: QueryKind,
    pub items: Vec<QueryItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub revision: u64,
    pub query: QueryDescriptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelPayload {
    /// One of the demarcation values.
    Level { level: f64 },
    /// One-hot `(I, I')`: `[1, 0]` prefers A, `[0, 1]` prefers B.
    Preference { label: [u8; 2] },
}

impl LabelPayload {
    pub fn kind(&self) -> QueryKind {
        match self {
            Self::Level { .. } => QueryKind::Level,
            Self::Preference { .. } => QueryKind::Preference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub query_id: String,
    pub payload: LabelPayload,
    pub rater: Rater,
    /// Client-side submission time, seconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSizes {
    pub levels: usize,
    pub preferences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAck {
    pub revision: u64,
    pub pools: PoolSizes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainRequest {
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainResponse {
    pub revision: u64,
    pub task: Task,
    /// Training loss after the last epoch.
    pub final_loss: f64,
    /// True if the request waited for another retrain to finish first.
    pub queued: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub revision: u64,
    /// Held-out accuracies of the current model; absent for an empty test set.
    pub level_accuracy: Option<f64>,
    pub preference_accuracy: Option<f64>,
    /// Distinction degrees of the held-out level inputs.
    pub histogram: DistinctionHistogram,
    pub sample_count: usize,
    pub pools: PoolSizes,
    pub trained: bool,
    /// The trust levels a level label may take.
    pub demarcations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPayload {
    pub revision: u64,
    pub id: String,
    pub team_size: usize,
    pub dt: f64,
    pub targets: Vec<Vec3>,
    /// Step-major team states.
    pub steps: Vec<Vec<RobotState>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub revision: u64,
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownQuery,
    Duplicate,
    KindMismatch,
    InvalidLabel,
    Exhausted,
    NotTrained,
    EmptyPool,
    NotFound,
    BadRequest,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub revision: u64,
    pub error: ErrorCode,
    pub message: String,
}
