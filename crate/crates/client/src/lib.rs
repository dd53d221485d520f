//! Thin async client for the labeling service, plus a loop that answers
//! queries with a synthetic rater in place of a human.

use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use stl_api::{
    ErrorBody, Health, LabelAck, LabelPayload, LabelSubmission, Metrics, QueryDescriptor, QueryKind, QueryResponse,
    Rater, RetrainRequest, RetrainResponse, Task, TrajectoryPayload,
};
use stl_core::oracle::Oracle;
use stl_core::trust::DemarcationSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    #[error("service returned {status}: {message}")]
    Api {
        status: StatusCode,
        body: Option<ErrorBody>,
        message: String,
    },
}

impl ClientError {
    /// Structured error body, if the service sent one.
    pub fn body(&self) -> Option<&ErrorBody> {
        match self {
            Self::Api { body, .. } => body.as_ref(),
            Self::Http(_) => None,
        }
    }
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let body: Option<ErrorBody> = serde_json::from_str(&text).ok();
        let message = body.as_ref().map_or(text, |b| b.message.clone());
        Err(ClientError::Api { status, body, message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::decode(self.http.post(self.url(path)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/api/health").await
    }

    pub async fn next_query(&self, kind: QueryKind) -> Result<QueryResponse> {
        self.get(&format!("/api/query?kind={kind}")).await
    }

    pub async fn submit(&self, submission: &LabelSubmission) -> Result<LabelAck> {
        self.post("/api/label", submission).await
    }

    pub async fn retrain(&self, task: Task) -> Result<RetrainResponse> {
        self.post("/api/retrain", &RetrainRequest { task }).await
    }

    pub async fn metrics(&self) -> Result<Metrics> {
        self.get("/api/metrics").await
    }

    pub async fn trajectory(&self, id: &str) -> Result<TrajectoryPayload> {
        self.get(&format!("/api/trajectory/{id}")).await
    }
}

/// The rater's answer to `query`, judged on the measured features.
pub fn oracle_answer(oracle: &mut Oracle, query: &QueryDescriptor, demarcations: &DemarcationSet) -> LabelPayload {
    match query.kind {
        QueryKind::Level => LabelPayload::Level {
            level: oracle.rate_level(&query.items[0].features, demarcations).value(),
        },
        QueryKind::Preference => {
            let (i, ip) = oracle
                .rate_preference(&query.items[0].features, &query.items[1].features)
                .as_pair();
            LabelPayload::Preference { label: [i, ip] }
        }
    }
}

/// Fetches and answers `count` queries of `kind` with `oracle`. Returns the
/// answered queries in order.
pub async fn drive_with_oracle(
    client: &Client,
    oracle: &mut Oracle,
    demarcations: &DemarcationSet,
    kind: QueryKind,
    count: usize,
) -> Result<Vec<(QueryDescriptor, LabelPayload, LabelAck)>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let query = client.next_query(kind).await?.query;
        let payload = oracle_answer(oracle, &query, demarcations);
        let ack = client
            .submit(&LabelSubmission {
                query_id: query.query_id.clone(),
                payload,
                rater: Rater::Oracle,
                timestamp: 0,
            })
            .await?;
        out.push((query, payload, ack));
    }
    Ok(out)
}
