use std::net::SocketAddr;

use stl_api::{QueryKind, Task};
use stl_client::{drive_with_oracle, Client};
use stl_core::config::ExperimentConfig;
use stl_core::oracle::Oracle;
use stl_core::train::LevelDataset;
use stl_core::Seed;
use stl_service::{router, AppState, Session, SessionOptions};
use tokio::sync::oneshot;

struct Running {
    client: Client,
    stop: Option<oneshot::Sender<()>>,
    _dir: tempfile::TempDir,
    dir: std::path::PathBuf,
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

fn quick_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.query.restarts = 8;
    c.query.steps = 60;
    c
}

async fn start(config: ExperimentConfig, seed: u64, unlabeled: usize) -> Running {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    let session = tokio::task::spawn_blocking({
        let path = path.clone();
        move || {
            Session::open(
                path,
                SessionOptions {
                    config,
                    seed,
                    unlabeled,
                },
            )
            .unwrap()
        }
    })
    .await
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    let app = router(AppState::new(session), None);
    tokio::spawn(stl_service::serve(listener, app, async {
        let _ = rx.await;
    }));
    Running {
        client: Client::new(format!("http://{addr}")),
        stop: Some(tx),
        _dir: dir,
        dir: path,
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn oracle_labels_through_the_api_match_direct_labeling() {
    let config = quick_config();
    let dem = config.demarcations.clone();
    let run = start(config.clone(), 11, 0).await;
    let mut oracle = Oracle::with_seed(&config.oracle, Seed(5)).unwrap();
    let answered = drive_with_oracle(&run.client, &mut oracle, &dem, QueryKind::Level, 100)
        .await
        .unwrap();
    assert_eq!(answered.last().unwrap().2.pools.levels, 100);

    // Same rater stream applied in-process to the served features.
    let mut direct = Oracle::with_seed(&config.oracle, Seed(5)).unwrap();
    let expected: Vec<f64> = answered
        .iter()
        .map(|(q, _, _)| direct.rate_level(&q.items[0].features, &dem).value())
        .collect();
    let stored: LevelDataset = stl_core::train::read_level_dataset(run.dir.join("levels.tsv"), &dem).unwrap();
    let got: Vec<f64> = stored.records.iter().map(|r| r.label.value()).collect();
    assert_eq!(got, expected);
    for ((q, _, _), r) in answered.iter().zip(&stored.records) {
        assert_eq!(r.features, q.items[0].features);
        assert_eq!(r.trajectory_id, q.items[0].trajectory_id);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn twenty_labels_and_a_retrain_beat_the_untrained_model() {
    let config = quick_config();
    let dem = config.demarcations.clone();
    let mut improved = 0;
    for seed in 0..10u64 {
        let run = start(config.clone(), seed, 0).await;
        let before = run.client.metrics().await.unwrap();
        let mut oracle = Oracle::with_seed(&config.oracle, Seed(seed).derive("rater")).unwrap();
        drive_with_oracle(&run.client, &mut oracle, &dem, QueryKind::Level, 20)
            .await
            .unwrap();
        let r = run.client.retrain(Task::A).await.unwrap();
        let after = run.client.metrics().await.unwrap();
        assert_eq!(after.revision, r.revision);
        assert!(after.revision > before.revision);
        if after.level_accuracy.unwrap() > before.level_accuracy.unwrap() {
            improved += 1;
        }
    }
    assert!(improved >= 8, "improved in {improved}/10 sessions");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn preference_loop_and_errors_round_trip() {
    let config = quick_config();
    let dem = config.demarcations.clone();
    let run = start(config.clone(), 2, 6).await;
    let health = run.client.health().await.unwrap();
    assert_eq!(health.status, "ok");

    let err = run.client.retrain(Task::B).await.unwrap_err();
    assert_eq!(err.body().unwrap().error, stl_api::ErrorCode::NotTrained);

    let mut oracle = Oracle::with_seed(&config.oracle, Seed(1)).unwrap();
    drive_with_oracle(&run.client, &mut oracle, &dem, QueryKind::Level, 5)
        .await
        .unwrap();
    let prefs = drive_with_oracle(&run.client, &mut oracle, &dem, QueryKind::Preference, 3)
        .await
        .unwrap();
    for (_, payload, _) in &prefs {
        let stl_api::LabelPayload::Preference { label } = payload else {
            panic!("{payload:?}")
        };
        assert_eq!(label[0] + label[1], 1);
    }
    let err = run.client.next_query(QueryKind::Preference).await.unwrap_err();
    assert_eq!(err.body().unwrap().error, stl_api::ErrorCode::Exhausted);

    run.client.retrain(Task::A).await.unwrap();
    let b = run.client.retrain(Task::B).await.unwrap();
    assert_eq!(b.task, Task::B);
    let m = run.client.metrics().await.unwrap();
    assert_eq!(m.pools.preferences, 3);
    assert!(m.preference_accuracy.is_some());

    let t = run.client.trajectory(&prefs[0].0.items[0].trajectory_id).await.unwrap();
    assert!(t.steps.iter().all(|s| s.len() == t.team_size));
}
