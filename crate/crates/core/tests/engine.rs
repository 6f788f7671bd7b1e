use proptest::prelude::*;

use asugs::data::generate_grid_mixture;
use asugs::engine::{self, Engine};
use asugs::rng::{stream, Purpose};
use asugs::{EngineConfig, Error, PriorConfig, Selection};

fn config_strategy() -> impl Strategy<Value = EngineConfig> {
    (
        any::<bool>(),
        prop::option::of(0.1..5.0f64),
        0.0..0.05f64,
        0.0..0.1f64,
        1u64..40,
        any::<u64>(),
        0.2..5.0f64,
    )
        .prop_map(
            |(sample, fixed, prune, merge, period, seed, lambda)| EngineConfig {
                lambda,
                selection: if sample {
                    Selection::Sample
                } else {
                    Selection::Argmax
                },
                fixed_alpha: fixed,
                prune_eps: prune,
                merge_eps: merge,
                maintenance_period: period,
                seed,
                prior: PriorConfig::isotropic(2, 0.05, 4.0, 0.1),
            },
        )
}

fn stream_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_and_book_invariants(config in config_strategy(), ys in stream_strategy()) {
        let mut engine = Engine::new(config).unwrap();
        for (i, y) in ys.iter().enumerate() {
            let rec = engine.observe(y).unwrap();
            prop_assert_eq!(rec.index, i as u64 + 1);
            let total: f64 = rec.q.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(rec.q.iter().all(|&q| (0.0..=1.0).contains(&q)));
            prop_assert!(rec.alpha > 0.0);

            let book = engine.book();
            prop_assert_eq!(book.n(), i as u64 + 1);
            prop_assert_eq!(book.assigned() + book.dropped(), book.n());
            prop_assert_eq!(engine.concentration().k, book.len());
            prop_assert!(!book.is_empty());
        }
        let (book, conc) = engine.finish();
        prop_assert_eq!(conc.k, book.len());
        prop_assert_eq!(book.assigned() + book.dropped(), ys.len() as u64);
        let ids: Vec<u64> = book.clusters().iter().map(|c| c.id).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn runs_are_deterministic(config in config_strategy(), ys in stream_strategy()) {
        let a = engine::run(&ys, &config).unwrap();
        let b = engine::run(&ys, &config).unwrap();
        prop_assert_eq!(a.steps, b.steps);
        prop_assert_eq!(a.conc, b.conc);
    }

    #[test]
    fn fixed_alpha_argmax_ignores_seed(ys in stream_strategy(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let base = EngineConfig::sugs(2, 1.0).with_prior(PriorConfig::isotropic(2, 0.05, 4.0, 0.1));
        let a = engine::run(&ys, &base.clone().with_seed(s1)).unwrap();
        let b = engine::run(&ys, &base.with_seed(s2)).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
    }
}

#[test]
fn first_observation_opens_a_cluster() {
    let mut engine = Engine::new(EngineConfig::asugs(2)).unwrap();
    let rec = engine.observe(&[0.5, 0.5]).unwrap();
    assert!(rec.innovation);
    assert_eq!(rec.q, vec![1.0]);
    assert_eq!(rec.alpha, 1.0);
    assert!(rec.log_lr.is_none());
}

#[test]
fn adaptive_alpha_follows_class_count() {
    let truth = generate_grid_mixture(2, 0.025, 1.0).unwrap();
    let data = truth.sample(400, &mut stream(1, Purpose::TrainData, 0));
    let config = EngineConfig::asugs(2)
        .with_prior(PriorConfig::isotropic(2, 0.01, 20.0, 0.04))
        .with_seed(1);
    let run = engine::run(&data.rows, &config).unwrap();
    for pair in run.steps.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let expected = prev.k as f64 / (config.lambda + (prev.index as f64).ln());
        assert!((cur.alpha - expected).abs() < 1e-12, "step {}", cur.index);
    }
}

#[test]
fn bad_input_is_reported_with_its_position() {
    let ys = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0]];
    match engine::run(&ys, &EngineConfig::asugs(2)) {
        Err(Error::Step { index, source }) => {
            assert_eq!(index, 3);
            assert!(matches!(
                *source,
                Error::DimensionMismatch {
                    expected: 2,
                    got: 1
                }
            ));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        engine::run::<Vec<f64>>(&[], &EngineConfig::asugs(2)),
        Err(Error::EmptyStream)
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut config = EngineConfig::asugs(2);
    config.lambda = 0.0;
    assert!(matches!(
        Engine::new(config),
        Err(Error::InvalidConfig {
            field: "lambda",
            ..
        })
    ));
    let mut config = EngineConfig::asugs(2);
    config.maintenance_period = 0;
    assert!(matches!(
        Engine::new(config),
        Err(Error::InvalidConfig {
            field: "maintenance_period",
            ..
        })
    ));
    assert!(Engine::new(EngineConfig::sugs(2, -1.0)).is_err());
}

#[test]
fn separated_clusters_are_found_without_maintenance() {
    let truth = generate_grid_mixture(2, 0.025, 1.0).unwrap();
    let data = truth.sample(500, &mut stream(5, Purpose::TrainData, 0));
    let config = EngineConfig::sugs(2, 1.0).with_prior(PriorConfig::isotropic(2, 0.01, 20.0, 0.04));
    let run = engine::run(&data.rows, &config).unwrap();
    assert_eq!(run.book.len(), 4);
    // each fitted cluster sits on one grid point
    for c in run.book.clusters() {
        let nearest = truth
            .means()
            .iter()
            .map(|m| (m - c.post.mu()).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.05, "{nearest}");
    }
}
