use rand::Rng;

use super::*;
use crate::nn::NetworkSpec;
use crate::sim::SimConfig;
use crate::trust::{DemarcationSet, DistinctionThresholds};

fn feasible() -> FeasibleBox {
    SimConfig::default().feature_box()
}

fn model(seed: u64) -> TrustModel {
    TrustModel::init(
        NetworkSpec::default(),
        feasible(),
        DemarcationSet::default(),
        Seed(seed),
    )
    .unwrap()
}

fn random_pool(n: usize, seed: u64) -> TrainingPool {
    TrainingPool::new(random_queries(&feasible(), n, Seed(seed)))
}

fn quick(seed: u64) -> QueryConfig {
    QueryConfig {
        restarts: 8,
        steps: 60,
        seed: Seed(seed),
        ..QueryConfig::default()
    }
}

#[test]
fn cosine_examples() {
    let a = FeatureVector::new(1.0, 2.0, 3.0);
    let b = FeatureVector::new(3.0, 2.0, 1.0);
    assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-15);
    assert!((cosine_similarity(&a, &b) - 10.0 / 14.0).abs() < 1e-15);
    let x = FeatureVector::new(1.0, 0.0, 0.0);
    let y = FeatureVector::new(0.0, 4.0, 0.0);
    assert_eq!(cosine_similarity(&x, &y), 0.0);
    assert_eq!(cosine_similarity(&x, &FeatureVector::new(0.0, 0.0, 0.0)), 0.0);
}

#[test]
fn pool_similarity_is_the_brute_force_max() {
    let b = feasible();
    let pool = random_pool(10, 1);
    let mut rng = Seed(2).rng();
    for _ in 0..50 {
        let psi: FeatureVector = b.sample_uniform(&mut rng).into();
        let u = b.to_unit(&psi.to_array());
        let brute = pool
            .features()
            .iter()
            .map(|p| cosine_similarity(&u.into(), &b.to_unit(&p.to_array()).into()))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(pool_similarity(&psi, &pool, Some(&b)).unwrap(), brute);
        let raw = pool
            .features()
            .iter()
            .map(|p| cosine_similarity(&psi, p))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(pool_similarity(&psi, &pool, None).unwrap(), raw);
    }
}

#[test]
fn pool_member_has_similarity_one() {
    let pool = random_pool(5, 3);
    let member = pool.features()[2];
    assert!((pool_similarity(&member, &pool, Some(&feasible())).unwrap() - 1.0).abs() < 1e-12);
    let single = TrainingPool::new(vec![pool.features()[0]]);
    let psi = pool.features()[1];
    assert_eq!(
        pool_similarity(&psi, &single, None).unwrap(),
        cosine_similarity(&psi, &single.features()[0])
    );
    assert!(matches!(
        pool_similarity(&psi, &TrainingPool::default(), None),
        Err(Error::Empty(_))
    ));
}

#[test]
fn objective_matches_scalar_recomputation() {
    let b = feasible();
    let dem = DemarcationSet::default();
    let mut rng = Seed(4).rng();
    for seed in 0..10 {
        let m = model(seed);
        let pool = random_pool(7, 100 + seed);
        let psi: FeatureVector = b.sample_uniform(&mut rng).into();
        for mode in [ConfidenceMode::NearestDemarcation, ConfidenceMode::Midpoint] {
            for normalize in [true, false] {
                let cfg = QueryConfig {
                    diversity_weight: rng.random_range(0.0..2.0),
                    confidence_mode: mode,
                    normalize_similarity: normalize,
                    ..QueryConfig::default()
                };
                let raw = m.predict_raw(&psi);
                let conf = match mode {
                    ConfidenceMode::NearestDemarcation => dem.nearest_distance(raw),
                    ConfidenceMode::Midpoint => dem
                        .midpoints()
                        .iter()
                        .map(|t| (raw - t).abs())
                        .fold(f64::INFINITY, f64::min),
                };
                let sim = pool_similarity(&psi, &pool, normalize.then_some(&b)).unwrap();
                let expect = conf + cfg.diversity_weight * sim;
                let got = query_objective(&m, &psi, &pool, &b, &cfg).unwrap();
                assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
            }
        }
    }
}

#[test]
fn zero_weight_objective_is_the_distinction_delta() {
    let b = feasible();
    let m = model(5);
    let cfg = QueryConfig {
        diversity_weight: 0.0,
        ..QueryConfig::default()
    };
    let pool = random_pool(4, 5);
    let mut rng = Seed(5).rng();
    for _ in 0..20 {
        let psi: FeatureVector = b.sample_uniform(&mut rng).into();
        let d = m.distinction_degree(&psi, &DistinctionThresholds::default());
        assert_eq!(query_objective(&m, &psi, &pool, &b, &cfg).unwrap(), d.raw_delta);
    }
}

#[test]
fn objective_at_a_demarcation_is_zero() {
    // A zero network predicts exactly 0, which is a demarcation.
    let spec = NetworkSpec::default();
    let m = TrustModel::new(
        spec.clone(),
        crate::nn::ParamVector::zeros(&spec),
        feasible(),
        DemarcationSet::default(),
    )
    .unwrap();
    let cfg = QueryConfig {
        diversity_weight: 0.0,
        ..QueryConfig::default()
    };
    let psi: FeatureVector = feasible().center().into();
    assert_eq!(
        query_objective(&m, &psi, &TrainingPool::default(), &feasible(), &cfg).unwrap(),
        0.0
    );
}

#[test]
fn out_of_box_objective_is_rejected() {
    let psi = FeatureVector::new(100.0, 0.0, 0.0);
    assert!(matches!(
        query_objective(
            &model(0),
            &psi,
            &TrainingPool::default(),
            &feasible(),
            &QueryConfig::default()
        ),
        Err(Error::OutOfBox(_))
    ));
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let b = feasible();
    let mut rng = Seed(6).rng();
    let mut checked = 0;
    for seed in 0..20 {
        let m = model(seed);
        let pool = random_pool(6, 200 + seed);
        for normalize in [true, false] {
            let cfg = QueryConfig {
                diversity_weight: 0.7,
                normalize_similarity: normalize,
                ..QueryConfig::default()
            };
            let obj = Objective::new(&m, &pool, &b, &cfg);
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.9..0.9));
            let (_, g) = obj.value_and_grad(&x);
            let h = 1e-6;
            let mut smooth = true;
            let mut numeric = [0.0; 3];
            for d in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[d] += h;
                xm[d] -= h;
                // Skip points where a kink (nearest target or argmax member) lies within the stencil.
                let kink = |y: &[f64; 3]| {
                    let psi: FeatureVector = b.from_unit(y).into();
                    let raw = m.predict_raw(&psi);
                    (
                        nearest_offset(raw, &obj.targets).signum(),
                        obj.similarity(&obj.embed_features(&psi.to_array())).map(|s| s.1),
                    )
                };
                if kink(&xp) != kink(&x) || kink(&xm) != kink(&x) {
                    smooth = false;
                }
                numeric[d] = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
            }
            if !smooth {
                continue;
            }
            checked += 1;
            for d in 0..3 {
                let err = (g[d] - numeric[d]).abs();
                assert!(
                    err <= 1e-8 || err <= 1e-4 * g[d].abs().max(numeric[d].abs()),
                    "{g:?} vs {numeric:?}"
                );
            }
        }
    }
    assert!(checked >= 20, "only {checked} smooth points");
}

#[test]
fn zero_steps_return_the_projected_start() {
    let b = feasible();
    let cfg = QueryConfig {
        restarts: 1,
        steps: 0,
        seed: Seed(9),
        ..QueryConfig::default()
    };
    let q = synthesize_queries(&model(9), &random_pool(3, 9), &b, &cfg, 1).unwrap();
    let mut rng = cfg.seed.derive("synthesize").index(0).index(0).rng();
    let start: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
    assert_eq!(q[0].features, FeatureVector::from(b.clamp(b.from_unit(&start))));
    assert_eq!(q[0].objective, q[0].start_objective);
}

#[test]
fn synthesized_queries_beat_random_samples() {
    let b = feasible();
    let m = model(10);
    let pool = random_pool(20, 10);
    let cfg = quick(10);
    let queries = synthesize_queries(&m, &pool, &b, &cfg, 20).unwrap();
    assert_eq!(queries.len(), 20);
    for q in &queries {
        assert!(b.contains_features(&q.features));
        assert!(q.objective <= q.start_objective + 1e-12);
    }
    let mean_q = queries
        .iter()
        .map(|q| query_objective(&m, &q.features, &pool, &b, &cfg).unwrap())
        .sum::<f64>()
        / 20.0;
    let randoms = random_queries(&b, 20, Seed(10));
    let mean_r = randoms
        .iter()
        .map(|r| query_objective(&m, r, &pool, &b, &cfg).unwrap())
        .sum::<f64>()
        / 20.0;
    assert!(mean_q < mean_r, "{mean_q} vs {mean_r}");
}

#[test]
fn zero_weight_queries_have_small_distinction() {
    let b = feasible();
    let th = DistinctionThresholds::default();
    for seed in 0..10 {
        let m = model(seed);
        let cfg = QueryConfig {
            diversity_weight: 0.0,
            ..quick(seed)
        };
        let queries = synthesize_queries(&m, &random_pool(10, seed), &b, &cfg, 10).unwrap();
        let mean_q = queries
            .iter()
            .map(|q| m.distinction_degree(&q.features, &th).raw_delta)
            .sum::<f64>()
            / 10.0;
        let mean_r = random_queries(&b, 10, Seed(seed))
            .iter()
            .map(|r| m.distinction_degree(r, &th).raw_delta)
            .sum::<f64>()
            / 10.0;
        assert!(mean_q <= mean_r, "seed {seed}: {mean_q} vs {mean_r}");
    }
}

#[test]
fn later_queries_stay_less_crowded_than_random_draws() {
    // The first query takes the largest gap, so absolute similarity must rise as
    // the pool fills; compare each query with a random draw against the same pool.
    let b = feasible();
    for seed in 0..5 {
        let start = random_pool(40, seed);
        let queries = synthesize_queries(&model(seed), &start, &b, &quick(seed), 20).unwrap();
        let randoms = random_queries(&b, 20, Seed(1000 + seed));
        let mut pool = start.clone();
        let (mut sq, mut sr) = (0.0, 0.0);
        for (q, r) in queries.iter().zip(&randoms) {
            sq += q.pool_similarity;
            sr += pool_similarity(r, &pool, Some(&b)).unwrap();
            pool.push(q.features);
        }
        assert!(sq < sr, "seed {seed}: {sq} vs {sr}");
    }
}

#[test]
fn synthesis_is_deterministic() {
    let b = feasible();
    let a = synthesize_queries(&model(11), &random_pool(5, 11), &b, &quick(11), 5).unwrap();
    let c = synthesize_queries(&model(11), &random_pool(5, 11), &b, &quick(11), 5).unwrap();
    assert_eq!(a, c);
}

#[test]
fn bad_configs_are_rejected() {
    let b = feasible();
    let m = model(0);
    let pool = TrainingPool::default();
    assert!(synthesize_queries(&m, &pool, &b, &QueryConfig::default(), 0).is_err());
    let cfg = QueryConfig {
        restarts: 0,
        ..QueryConfig::default()
    };
    assert!(matches!(
        synthesize_queries(&m, &pool, &b, &cfg, 1),
        Err(Error::Config(_))
    ));
}

#[test]
fn empty_pool_synthesis_works() {
    let q = synthesize_queries(&model(12), &TrainingPool::default(), &feasible(), &quick(12), 3).unwrap();
    assert_eq!(q.len(), 3);
    // The first query has nothing to compare against.
    assert_eq!(q[0].pool_similarity, 0.0);
}

#[test]
fn uncertain_pairs_are_greedy_closest_and_disjoint() {
    let m = model(8);
    let candidates = random_queries(&feasible(), 12, Seed(3));
    let raw: Vec<f64> = candidates.iter().map(|c| m.predict_raw(c)).collect();
    let gap = |(i, j): (usize, usize)| (raw[i] - raw[j]).abs();
    let pairs = select_uncertain_pairs(&m, &candidates, 5);
    assert_eq!(pairs.len(), 5);
    let mut used = vec![false; candidates.len()];
    for &(i, j) in &pairs {
        // Nothing among the still-unused candidates is closer.
        for a in 0..candidates.len() {
            for b in a + 1..candidates.len() {
                if !used[a] && !used[b] {
                    assert!(gap((i, j)) <= gap((a, b)));
                }
            }
        }
        assert!(!used[i] && !used[j]);
        used[i] = true;
        used[j] = true;
    }
    assert_eq!(select_uncertain_pairs(&m, &candidates, 100).len(), 6);
    assert!(select_uncertain_pairs(&m, &candidates[..1], 3).is_empty());
}
