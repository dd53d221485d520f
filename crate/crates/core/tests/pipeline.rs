use stl_core::active::{random_queries, synthesize_queries, TrainingPool};
use stl_core::config::ExperimentConfig;
use stl_core::harness::{held_out, initial_model, run_ablation, AblationSetting};
use stl_core::oracle::Oracle;
use stl_core::sim::{extract_features, load_trajectory, save_trajectory, simulate};
use stl_core::train::{
    read_level_dataset, read_preference_dataset, train_level, train_preference, write_level_dataset,
    write_preference_dataset, LevelDataset, LevelRecord, PreferenceDataset, PreferenceRecord,
};
use stl_core::trust::TrustModel;
use stl_core::Seed;

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.stl.train.epochs = 30;
    c.query.restarts = 4;
    c.query.steps = 40;
    c.budget.initial_levels = 12;
    c.budget.extra_levels = 6;
    c.budget.preference_pairs = 6;
    c.budget.pair_candidates = 20;
    c.budget.test_levels = 10;
    c.budget.test_pairs = 10;
    c
}

#[test]
fn files_round_trip_through_the_whole_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::default();
    let fbox = config.feature_box();
    let mut rater = Oracle::new(config.oracle.clone()).unwrap();

    let targets = random_queries(&fbox, 24, Seed(5));
    let mut features = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        let params = config.sim.calibration().params_for_features(t, &fbox).unwrap();
        let traj = simulate(&params, &config.sim, Seed(5).index(i as u64), format!("t{i}")).unwrap();
        let path = dir.path().join(format!("t{i}.traj"));
        save_trajectory(&path, &traj).unwrap();
        let back = load_trajectory(&path).unwrap();
        assert_eq!(back, traj);
        features.push(extract_features(&back, &config.sim.reference_pattern()).unwrap());
    }

    let levels = LevelDataset::new(
        features
            .iter()
            .enumerate()
            .map(|(i, f)| LevelRecord {
                trajectory_id: format!("t{i}"),
                features: *f,
                label: rater.rate_level(f, &config.demarcations),
            })
            .collect(),
    );
    let prefs = PreferenceDataset::new(
        features
            .chunks_exact(2)
            .enumerate()
            .map(|(i, c)| PreferenceRecord {
                pair_id: format!("p{i}"),
                first: c[0],
                second: c[1],
                label: rater.rate_preference(&c[0], &c[1]),
            })
            .collect(),
    );
    let (lp, pp) = (dir.path().join("l.tsv"), dir.path().join("p.tsv"));
    write_level_dataset(&lp, &levels).unwrap();
    write_preference_dataset(&pp, &prefs).unwrap();
    assert_eq!(read_level_dataset(&lp, &config.demarcations).unwrap(), levels);
    assert_eq!(read_preference_dataset(&pp).unwrap(), prefs);

    let init = initial_model(&config, Seed(5)).unwrap();
    let theta_a = train_level(&init, &levels, &config.stl).unwrap().model;
    let theta_b = train_preference(&theta_a, &prefs, &config.stl).unwrap().model;
    let ck = dir.path().join("b.ckpt");
    theta_b.save(&ck).unwrap();
    let loaded = TrustModel::load(&ck).unwrap();
    for f in &features {
        assert_eq!(loaded.predict_raw(f), theta_b.predict_raw(f));
    }

    let pool = TrainingPool::new(levels.features());
    let q = synthesize_queries(&loaded, &pool, &fbox, &config.query, 3).unwrap();
    assert_eq!(q.len(), 3);
    assert!(q.iter().all(|q| fbox.contains_features(&q.features)));
}

#[test]
fn ablations_are_reproducible() {
    let config = small();
    let a = run_ablation(AblationSetting::Active, &config, &[3, 4]).unwrap();
    let b = run_ablation(AblationSetting::Active, &config, &[3, 4]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_eq!(a.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), [3, 4]);
    assert!(a.runs.iter().all(|r| r.level_labels == 18 && r.preference_labels == 0));
}

#[test]
fn held_out_sets_do_not_depend_on_the_setting() {
    let config = small();
    let (l1, p1) = held_out(&config, Seed(9)).unwrap();
    let (l2, p2) = held_out(&config, Seed(9)).unwrap();
    assert_eq!((l1.len(), p1.len()), (10, 10));
    assert_eq!(l1, l2);
    assert_eq!(p1, p2);
    let (l3, _) = held_out(&config, Seed(10)).unwrap();
    assert_ne!(l1, l3);
}
