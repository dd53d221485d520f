use super::*;
use crate::config::PairSelection;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.stl.train.epochs = 20;
    cfg.query.restarts = 4;
    cfg.query.steps = 20;
    cfg.budget.test_levels = 20;
    cfg.budget.test_pairs = 20;
    cfg
}

#[test]
fn setting_names_round_trip() {
    for s in AblationSetting::ALL {
        assert_eq!(s.name().parse::<AblationSetting>().unwrap(), s);
        assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
    }
    assert!("no-such-setting".parse::<AblationSetting>().is_err());
}

#[test]
fn realized_features_follow_the_target() {
    let cfg = ExperimentConfig::default();
    let fbox = cfg.feature_box();
    let target: FeatureVector = fbox.center().into();
    let got = realize(&target, &cfg, Seed(1), "x").unwrap();
    assert!((got.avg_speed - target.avg_speed).abs() / target.avg_speed < 0.15);
    assert!((got.formation_error - target.formation_error).abs() / target.formation_error < 0.2);
    // Out-of-box targets are clamped rather than rejected.
    let far = FeatureVector::new(1e3, -5.0, 0.0);
    assert!(realize(&far, &cfg, Seed(1), "y").is_ok());
}

#[test]
fn budgets_are_respected() {
    let cfg = small();
    let expect = [
        (AblationSetting::SmallRandom, 40, 0),
        (AblationSetting::LargeRandom, 60, 0),
        (AblationSetting::Active, 60, 0),
        (AblationSetting::LevelOnly, 60, 0),
        (AblationSetting::WithPreference, 60, 40),
    ];
    for (setting, levels, prefs) in expect {
        let r = run_setting(setting, &cfg, 3).unwrap();
        assert_eq!((r.level_labels, r.preference_labels), (levels, prefs), "{setting}");
        let acc = r.level_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn level_only_settings_agree() {
    let cfg = small();
    let a = run_setting(AblationSetting::LargeRandom, &cfg, 4).unwrap();
    let b = run_setting(AblationSetting::LevelOnly, &cfg, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reports_are_reproducible() {
    let cfg = small();
    let a = run_ablation(AblationSetting::Active, &cfg, &[1, 2]).unwrap();
    let b = run_ablation(AblationSetting::Active, &cfg, &[1, 2]).unwrap();
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.runs.len(), 2);
    assert_eq!(a.runs[0].seed, 1);
    let jsonl = a.to_jsonl().unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].contains("\"kind\":\"config\""));
    assert!(lines[3].contains("\"kind\":\"summary\""));
    assert_eq!(a.to_csv().lines().count(), 3);
    let table = summary_table(&[a]);
    assert!(table.contains("active"));
}

#[test]
fn single_run_has_zero_std() {
    let r = run_ablation(AblationSetting::SmallRandom, &small(), &[7]).unwrap();
    assert_eq!(r.level_accuracy.unwrap().std, 0.0);
    assert_eq!(r.level_accuracy.unwrap().mean, r.runs[0].level_accuracy.unwrap());
}

#[test]
fn run_failures_carry_the_seed() {
    let mut cfg = small();
    cfg.stl.train.learning_rate_a = f64::MAX;
    let err = run_ablation(AblationSetting::SmallRandom, &cfg, &[5]).unwrap_err();
    assert!(matches!(err, Error::Run { seed: 5, .. }), "{err:?}");
}

#[test]
fn empty_seed_list_is_rejected() {
    assert!(run_ablation(AblationSetting::SmallRandom, &small(), &[]).is_err());
}

#[test]
fn diversity_run_is_consistent() {
    let cfg = small();
    let d = diversity_run(&cfg, 2).unwrap();
    assert_eq!(d.active.len(), 20);
    assert_eq!(d.random.len(), 20);
    let fbox = cfg.feature_box();
    assert!(d.active.iter().all(|f| fbox.contains_features(f)));
    assert!(d.axis_tests.is_some());
    assert_eq!(diversity_run(&cfg, 2).unwrap(), d);
}

#[test]
fn pair_selection_and_rounds_keep_budgets() {
    let mut cfg = small();
    cfg.budget.pair_selection = PairSelection::Random;
    let r = run_setting(AblationSetting::WithPreference, &cfg, 5).unwrap();
    assert_eq!(r.preference_labels, 40);
    cfg.budget.active_rounds = 3;
    let r = run_setting(AblationSetting::Active, &cfg, 5).unwrap();
    assert_eq!(r.level_labels, 60);
}

#[test]
fn bad_budgets_are_rejected() {
    let mut cfg = ExperimentConfig::default();
    cfg.budget.active_rounds = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::default();
    cfg.budget.pair_candidates = 2 * cfg.budget.preference_pairs - 1;
    assert!(cfg.validate().is_err());
}
