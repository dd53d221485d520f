//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p stl-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use stl_core::active::random_queries;
use stl_core::config::ExperimentConfig;
use stl_core::harness::{diversity_run, run_ablation, AblationSetting, ExperimentReport};
use stl_core::nn::{Activation, NetworkSpec, ParamVector};
use stl_core::oracle::{Oracle, OracleSpec};
use stl_core::sim::{cruise_stats, extract_features, simulate, ControlParams, SimConfig};
use stl_core::stats::{ks2d, Quadrants};
use stl_core::train::{
    level_loss, preference_loss, train_level, train_preference, LevelDataset, LevelRecord, PreferenceDataset,
    PreferenceRecord, StlConfig,
};
use stl_core::trust::{DemarcationSet, PreferenceLabel, TrustModel};
use stl_core::{FeasibleBox, Seed};

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (
        t < limit,
        format!("{:.1}s (limit {}s)", t.as_secs_f64(), limit.as_secs()),
    )
}

// ---------------------------------------------------------------- data

fn feature_box() -> FeasibleBox {
    SimConfig::default().feature_box()
}

fn model(spec: NetworkSpec, seed: u64) -> TrustModel {
    TrustModel::init(spec, feature_box(), DemarcationSet::default(), Seed(seed)).unwrap()
}

fn level_data(n: usize, seed: u64, oracle: &OracleSpec) -> LevelDataset {
    let features = random_queries(&feature_box(), n, Seed(seed).derive("levels"));
    let mut rater = Oracle::with_seed(oracle, Seed(seed)).unwrap();
    let dem = DemarcationSet::default();
    LevelDataset::new(
        features
            .into_iter()
            .enumerate()
            .map(|(i, features)| LevelRecord {
                trajectory_id: format!("t{i}"),
                label: rater.rate_level(&features, &dem),
                features,
            })
            .collect(),
    )
}

fn pref_data(n: usize, seed: u64, oracle: &OracleSpec) -> PreferenceDataset {
    let f = random_queries(&feature_box(), 2 * n, Seed(seed).derive("pairs"));
    let mut rater = Oracle::with_seed(oracle, Seed(seed)).unwrap();
    PreferenceDataset::new(
        f.chunks_exact(2)
            .enumerate()
            .map(|(i, c)| PreferenceRecord {
                pair_id: format!("p{i}"),
                first: c[0],
                second: c[1],
                label: rater.rate_preference(&c[0], &c[1]),
            })
            .collect(),
    )
}

// ---------------------------------------------------------------- gradients

fn random_spec(rng: &mut impl Rng) -> NetworkSpec {
    let depth = rng.random_range(1..=3);
    let hidden = (0..depth).map(|_| rng.random_range(2..=32)).collect();
    NetworkSpec::new(3, hidden, Activation::Tanh).unwrap()
}

/// Worst relative error between the analytic gradient and central differences
/// with step 1e-5. The relative denominator is floored at 1e-6 so vanishing
/// components are judged by a 1e-10 absolute error.
fn worst_fd_error(m: &TrustModel, analytic: &ParamVector, loss: impl Fn(&TrustModel) -> f64) -> f64 {
    let h = 1e-5;
    let base = m.params().clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut plus = base.clone();
        plus.values_mut()[k] += h;
        let mut minus = base.clone();
        minus.values_mut()[k] -= h;
        let numeric = (loss(&m.with_params(plus).unwrap()) - loss(&m.with_params(minus).unwrap())) / (2.0 * h);
        let a = analytic.values()[k];
        let err = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs());
        let rel = err / scale.max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let oracle = OracleSpec::default();
    let mut rng = Seed(11).rng();
    let configs = 20u64;
    let (mut level_worst, mut pref_worst): (f64, f64) = (0.0, 0.0);
    for case in 0..configs {
        // The first configuration is the default network.
        let spec = if case == 0 {
            NetworkSpec::default()
        } else {
            random_spec(&mut rng)
        };
        let m = model(spec.clone(), 100 + case);
        let levels = level_data(rng.random_range(1..=8), 200 + case, &oracle);
        let g = level_loss(&m, &levels.records).unwrap().gradient;
        level_worst = level_worst.max(worst_fd_error(&m, &g, |mm| {
            level_loss(mm, &levels.records).unwrap().loss
        }));

        let frozen = model(spec, 300 + case);
        let pairs = pref_data(rng.random_range(1..=8), 400 + case, &oracle);
        let lwf = [0.1, 1.0, 10.0][case as usize % 3];
        let g = preference_loss(&m, &frozen, &pairs.records, lwf).unwrap().gradient;
        pref_worst = pref_worst.max(worst_fd_error(&m, &g, |mm| {
            preference_loss(mm, &frozen, &pairs.records, lwf).unwrap().loss
        }));
    }
    let (fast, time) = within(Duration::from_secs(30), start);
    outcome(
        level_worst <= 1e-4 && pref_worst <= 1e-4 && fast,
        format!(
            "{configs} configs per loss, worst rel err level {level_worst:.2e} preference {pref_worst:.2e} (tol 1e-4), {time}"
        ),
    )
}

fn loss_structure() -> Outcome {
    let oracle = OracleSpec::default();
    let mut max_retention: f64 = 0.0;
    for seed in 0..10 {
        let m = model(NetworkSpec::default(), seed);
        let pairs = pref_data(20, seed, &oracle);
        for lwf in [0.1, 1.0, 10.0] {
            let out = preference_loss(&m, &m, &pairs.records, lwf).unwrap();
            max_retention = max_retention.max(out.retention.abs());
        }
    }
    let spec = NetworkSpec::default();
    let zero = TrustModel::new(
        spec.clone(),
        ParamVector::zeros(&spec),
        feature_box(),
        DemarcationSet::default(),
    )
    .unwrap();
    let mut worst_ce: f64 = 0.0;
    for (k, label) in [PreferenceLabel::First, PreferenceLabel::Second]
        .into_iter()
        .enumerate()
    {
        let f = random_queries(&feature_box(), 2, Seed(k as u64));
        let rec = PreferenceRecord {
            pair_id: "p".into(),
            first: f[0],
            second: f[1],
            label,
        };
        let out = preference_loss(&zero, &zero, &[rec], 1.0).unwrap();
        worst_ce = worst_ce.max((out.cross_entropy - std::f64::consts::LN_2).abs());
    }
    outcome(
        max_retention == 0.0 && worst_ce < 1e-9,
        format!(
            "retention at the frozen model {max_retention:e} (want exactly 0), |CE - ln 2| {worst_ce:.1e} (tol 1e-9)"
        ),
    )
}

fn retention_monotone() -> Outcome {
    let oracle = OracleSpec::default();
    let mut drift = [0.0; 3];
    for seed in 0..3 {
        let levels = level_data(60, 20 + seed, &oracle);
        let theta_a = train_level(
            &model(NetworkSpec::default(), 20 + seed),
            &levels,
            &StlConfig::default(),
        )
        .unwrap()
        .model;
        let pairs = pref_data(40, 30 + seed, &oracle);
        let inputs = levels.features();
        for (k, lwf) in [0.1, 1.0, 10.0].into_iter().enumerate() {
            let cfg = StlConfig {
                lwf_weight: lwf,
                ..StlConfig::default()
            };
            let theta_b = train_preference(&theta_a, &pairs, &cfg).unwrap().model;
            let mean = inputs
                .iter()
                .map(|p| (theta_b.predict_raw(p) - theta_a.predict_raw(p)).abs())
                .sum::<f64>()
                / inputs.len() as f64;
            drift[k] += mean / 3.0;
        }
    }
    outcome(
        drift[0] >= drift[1] && drift[1] >= drift[2],
        format!(
            "mean |f_b - f_a| at lwf 0.1/1/10: {:.4} / {:.4} / {:.4} (3 seeds)",
            drift[0], drift[1], drift[2]
        ),
    )
}

// ---------------------------------------------------------------- ablations

fn mean(report: &ExperimentReport, preference: bool) -> f64 {
    let m = if preference {
        report.preference_accuracy
    } else {
        report.level_accuracy
    };
    m.expect("accuracy").mean
}

fn preference_ablation() -> Vec<(&'static str, Outcome)> {
    let start = Instant::now();
    let config = ExperimentConfig::default();
    let without = run_ablation(AblationSetting::LevelOnly, &config, &SEEDS).unwrap();
    let with = run_ablation(AblationSetting::WithPreference, &config, &SEEDS).unwrap();
    let (fast, time) = within(Duration::from_secs(300), start);
    let (l0, l1) = (mean(&without, false), mean(&with, false));
    let (p0, p1) = (mean(&without, true), mean(&with, true));
    vec![
        (
            "preference-helps",
            outcome(
                l1 >= l0 && p1 >= p0 && fast,
                format!("level {l0:.3} -> {l1:.3}, preference {p0:.3} -> {p1:.3} over 10 seeds, {time}"),
            ),
        ),
        (
            "preference-margin",
            outcome(
                p1 - p0 >= 0.02,
                format!(
                    "preference accuracy gain {:.1} points (expected >= 2)",
                    100.0 * (p1 - p0)
                ),
            ),
        ),
    ]
}

fn active_learning() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::default();
    let less = mean(
        &run_ablation(AblationSetting::SmallRandom, &config, &SEEDS).unwrap(),
        false,
    );
    let random = mean(
        &run_ablation(AblationSetting::LargeRandom, &config, &SEEDS).unwrap(),
        false,
    );
    let active = mean(&run_ablation(AblationSetting::Active, &config, &SEEDS).unwrap(), false);
    let (fast, time) = within(Duration::from_secs(600), start);
    outcome(
        active >= random - 0.02 && active > less && fast,
        format!("40 random {less:.3}, 60 random {random:.3}, 40 random + 20 active {active:.3} over 10 seeds, {time}"),
    )
}

fn diversity_and_distinction() -> Vec<(&'static str, Outcome)> {
    let config = ExperimentConfig::default();
    let runs: Vec<_> = SEEDS.iter().map(|&s| diversity_run(&config, s).unwrap()).collect();
    let lower = runs
        .iter()
        .filter(|r| r.active_similarity < r.random_similarity)
        .count();
    let n = runs.len() as f64;
    let active_delta = runs.iter().map(|r| r.active_delta).sum::<f64>() / n;
    let random_delta = runs.iter().map(|r| r.random_delta).sum::<f64>() / n;
    vec![
        (
            "batch-diversity",
            outcome(
                lower >= 8,
                format!("synthesized batch less similar to the pool than random in {lower}/10 seeds (need 8)"),
            ),
        ),
        (
            "distinction",
            outcome(
                active_delta <= random_delta,
                format!(
                    "mean distance to nearest demarcation: synthesized {active_delta:.4}, random {random_delta:.4}"
                ),
            ),
        ),
    ]
}

// ---------------------------------------------------------------- ks2d

fn uniform(n: usize, seed: u64, shift: f64) -> Vec<[f64; 2]> {
    let mut rng = Seed(seed).rng();
    (0..n)
        .map(|_| [rng.random::<f64>() + shift, rng.random::<f64>()])
        .collect()
}

fn lattice(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = Seed(seed).rng();
    (0..n)
        .map(|_| [f64::from(rng.random_range(0..8)), f64::from(rng.random_range(0..8))])
        .collect()
}

fn quadrant_fractions(o: [f64; 2], sample: &[[f64; 2]]) -> Quadrants {
    let mut c = [0usize; 4];
    for p in sample {
        let k = match (p[0] > o[0], p[1] > o[1]) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        };
        c[k] += 1;
    }
    c.map(|v| v as f64 / sample.len() as f64)
}

fn brute_d(s1: &[[f64; 2]], s2: &[[f64; 2]]) -> f64 {
    let side = |origins: &[[f64; 2]]| {
        origins.iter().fold(0.0f64, |d, &o| {
            let (f, g) = (quadrant_fractions(o, s1), quadrant_fractions(o, s2));
            (0..4).fold(d, |d, k| d.max((f[k] - g[k]).abs()))
        })
    };
    0.5 * (side(s1) + side(s2))
}

fn ks_checks() -> Vec<(&'static str, Outcome)> {
    let same = (0..10)
        .filter(|&s| {
            ks2d(&uniform(200, s, 0.0), &uniform(200, s + 1000, 0.0))
                .unwrap()
                .p_value
                > 0.1
        })
        .count();
    let shifted = (0..10)
        .filter(|&s| {
            ks2d(&uniform(200, s, 0.0), &uniform(200, s + 1000, 0.5))
                .unwrap()
                .p_value
                < 0.05
        })
        .count();
    let mut rng = Seed(1).rng();
    let mut mismatches = 0;
    let cases = 40u64;
    for case in 0..cases {
        let n1 = rng.random_range(10..=300);
        let n2 = rng.random_range(10..=300);
        let (s1, s2) = if case % 3 == 0 {
            (lattice(n1, case), lattice(n2, case + 100))
        } else {
            (uniform(n1, case, 0.0), uniform(n2, case + 100, 0.2 * (case % 2) as f64))
        };
        if ks2d(&s1, &s2).unwrap().d_statistic != brute_d(&s1, &s2) {
            mismatches += 1;
        }
    }
    vec![
        (
            "ks2d-same-distribution",
            outcome(same >= 8, format!("p > 0.1 in {same}/10 trials (need 8), n = 200")),
        ),
        (
            "ks2d-shifted",
            outcome(
                shifted >= 9,
                format!("p < 0.05 in {shifted}/10 trials (need 9), n = 200, shift 0.5"),
            ),
        ),
        (
            "ks2d-brute-force",
            outcome(
                mismatches == 0,
                format!("d differs from quadrant enumeration in {mismatches}/{cases} cases, n <= 300"),
            ),
        ),
    ]
}

// ---------------------------------------------------------------- simulator

fn sim_round_trip() -> Vec<(&'static str, Outcome)> {
    let cfg = SimConfig::default();
    let mut rng = Seed(21).rng();
    let (mut speed_worst, mut spacing_worst): (f64, f64) = (0.0, 0.0);
    let trials = 20;
    for k in 0..trials {
        let p = ControlParams::sample(&cfg.control_box, &mut rng);
        let traj = simulate(&p, &cfg, Seed(100 + k), "t").unwrap();
        let c = cruise_stats(&traj).expect("cruise segment");
        speed_worst = speed_worst.max((c.mean_speed - p.commanded_speed).abs() / p.commanded_speed);
        spacing_worst = spacing_worst.max((c.mean_spacing - p.formation_spacing).abs() / p.formation_spacing);
    }
    let (lo, hi) = (cfg.control_box.lower[2], cfg.control_box.upper[2]);
    let means: Vec<f64> = (0..10)
        .map(|i| {
            let sigma = lo + (hi - lo) * i as f64 / 9.0;
            let p = ControlParams {
                commanded_speed: 6.0,
                formation_spacing: 4.0,
                heading_noise_std: sigma,
            };
            (0..5)
                .map(|s| {
                    let traj = simulate(&p, &cfg, Seed(s), "t").unwrap();
                    extract_features(&traj, &cfg.reference_pattern())
                        .unwrap()
                        .heading_variance
                })
                .sum::<f64>()
                / 5.0
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    vec![
        (
            "sim-cruise",
            outcome(
                speed_worst < 0.1 && spacing_worst < 0.1,
                format!(
                    "worst relative error over {trials} flights: speed {:.2}%, spacing {:.2}% (tol 10%)",
                    100.0 * speed_worst,
                    100.0 * spacing_worst
                ),
            ),
        ),
        (
            "sim-heading-monotone",
            outcome(
                monotone,
                format!(
                    "mean heading variance over 10 noise levels x 5 seeds: {}",
                    means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" ")
                ),
            ),
        ),
    ]
}

// ---------------------------------------------------------------- CLI

const SMALL_CONFIG: &str = "\
[stl.train]
epochs = 40

[query]
restarts = 8
steps = 50

[budget]
initial_levels = 12
extra_levels = 6
preference_pairs = 6
pair_candidates = 20
test_levels = 12
test_pairs = 12
";

/// Stdout and (path, bytes) of every file a command wrote.
type CommandOutput = (String, Vec<(String, Vec<u8>)>);

/// Runs every command in `dir`.
fn run_pipeline(dir: &Path) -> Vec<CommandOutput> {
    let bin = env!("CARGO_BIN_EXE_stl");
    fs::write(dir.join("small.toml"), SMALL_CONFIG).unwrap();
    let steps: &[&[&str]] = &[
        &["--out", "default.toml", "config"],
        &["--seed", "3", "--out", "sim", "simulate", "--count", "16"],
        &[
            "--seed",
            "3",
            "--out",
            "levels.tsv",
            "label",
            "--features",
            "sim/features.tsv",
        ],
        &[
            "--seed",
            "3",
            "--out",
            "pairs.tsv",
            "label",
            "--features",
            "sim/features.tsv",
            "--kind",
            "preference",
        ],
        &[
            "--seed",
            "3",
            "--out",
            "clean.tsv",
            "label",
            "--features",
            "sim/features.tsv",
            "--noiseless",
        ],
        &[
            "--seed",
            "3",
            "--out",
            "a.ckpt",
            "train",
            "--task",
            "a",
            "--levels",
            "levels.tsv",
        ],
        &[
            "--seed",
            "3",
            "--out",
            "b.ckpt",
            "train",
            "--task",
            "b",
            "--preferences",
            "pairs.tsv",
            "--checkpoint",
            "a.ckpt",
        ],
        &[
            "--seed",
            "3",
            "--out",
            "active.tsv",
            "active-query",
            "--checkpoint",
            "a.ckpt",
            "--pool",
            "levels.tsv",
            "--count",
            "4",
        ],
        &[
            "--seed",
            "3",
            "--out",
            "random.tsv",
            "active-query",
            "--checkpoint",
            "a.ckpt",
            "--count",
            "4",
            "--random",
        ],
        &[
            "--out",
            "eval.json",
            "evaluate",
            "--checkpoint",
            "b.ckpt",
            "--levels",
            "clean.tsv",
            "--preferences",
            "pairs.tsv",
        ],
        &["--config", "small.toml", "--out", "ablation", "ablation", "--runs", "2"],
        &[
            "--config",
            "small.toml",
            "--out",
            "diversity.jsonl",
            "diversity",
            "--runs",
            "2",
        ],
    ];
    let mut results = Vec::new();
    for args in steps {
        let out = Command::new(bin).args(*args).current_dir(dir).output().unwrap();
        assert!(
            out.status.success(),
            "stl {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let target = dir.join(args[args.iter().position(|a| *a == "--out").unwrap() + 1]);
        let mut files = Vec::new();
        collect(&target, dir, &mut files);
        results.push((String::from_utf8(out.stdout).unwrap(), files));
    }
    results
}

fn collect(path: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for e in entries {
            collect(&e, root, out);
        }
    } else {
        let name = path.strip_prefix(root).unwrap().display().to_string();
        out.push((name, fs::read(path).unwrap()));
    }
}

fn cli_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = (run_pipeline(a.path()), run_pipeline(b.path()));
    let files: usize = first.iter().map(|(_, f)| f.len()).sum();
    let differing: Vec<String> = first
        .iter()
        .zip(&second)
        .flat_map(|((o1, f1), (o2, f2))| {
            let mut d = Vec::new();
            if o1 != o2 {
                d.push("stdout".to_string());
            }
            if f1 != f2 {
                d.extend(f1.iter().zip(f2).filter(|(x, y)| x != y).map(|(x, _)| x.0.clone()));
                if f1.len() != f2.len() {
                    d.push("file list".into());
                }
            }
            d
        })
        .collect();
    outcome(
        differing.is_empty() && files > 0,
        if differing.is_empty() {
            format!(
                "{} commands run twice, {files} output files and stdout byte-identical",
                first.len()
            )
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}

// ---------------------------------------------------------------- main

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report("gradient-fidelity", gradient_fidelity());
    report("loss-structure", loss_structure());
    report("retention-monotone", retention_monotone());
    for (n, o) in preference_ablation() {
        report(n, o);
    }
    report("active-learning", active_learning());
    for (n, o) in diversity_and_distinction() {
        report(n, o);
    }
    for (n, o) in ks_checks() {
        report(n, o);
    }
    for (n, o) in sim_round_trip() {
        report(n, o);
    }
    report("cli-determinism", cli_determinism());

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
