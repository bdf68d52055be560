mod common;

use std::sync::OnceLock;

use dppsd::channel::{bits_diff, draw_channel_instance, Constellation};
use dppsd::dpp::{
    dpp_detect, dpp_detect_prepared, se_sd_detect_prepared, BaselineRadius, DetectorConfig, LambdaSchedule,
    PreparedInstance,
};
use dppsd::numerics::{substream_rng, ComplexMatrix};
use dppsd::predictor::{generate_dataset, train, DatasetSpec, RbfnModel, TrainerConfig};
use dppsd::search::{conventional_radius, reduced_squared_radius, subtree_min_metric};

const N: usize = 8;

fn model_8() -> &'static RbfnModel {
    static CELL: OnceLock<RbfnModel> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = DatasetSpec {
            n_t: N,
            n_r: N,
            constellation: Constellation::qpsk(),
            snr_range_db: (4.0, 14.0),
            sample_count: 8000,
            seed: 404,
            noise_variance_override: None,
        };
        let data = generate_dataset(&spec).unwrap();
        let config = TrainerConfig {
            max_epochs: 300,
            ..TrainerConfig::default()
        };
        train(&data, &config).unwrap().0
    })
}

fn lambdas(snr: f64) -> (f64, f64) {
    LambdaSchedule::published().with_alias(N, 16).lookup(N, snr).unwrap()
}

fn conventional_reduced(prep: &PreparedInstance, noise_variance: f64) -> f64 {
    let f = conventional_radius(noise_variance, prep.n_r, 0.999);
    reduced_squared_radius(f, prep.residual).sqrt()
}

fn root_minima(prep: &PreparedInstance, c: &Constellation) -> Vec<f64> {
    (0..c.len())
        .map(|q| subtree_min_metric(&mut prep.problem(c, f64::INFINITY).unwrap(), q))
        .collect()
}

#[test]
fn noiseless_instances_are_recovered() {
    let c = Constellation::qpsk();
    let model = model_8();
    let mut cut_short = 0;
    for t in 0..200 {
        let snr = [5.0, 7.0, 9.0, 11.0, 13.0][t % 5];
        let mut rng = substream_rng(61, 0, t as u64);
        let inst = draw_channel_instance(N, N, &c, snr, &mut rng).unwrap();
        let clean = inst.h.mul_vec(&inst.x_true);
        let (l1, l2) = lambdas(snr);
        let sigma2 = inst.noise_variance;

        let no_stop = DetectorConfig {
            enable_early_termination: false,
            ..DetectorConfig::full(l1, l2)
        };
        let r = dpp_detect(&clean, &inst.h, sigma2, model, &no_stop, &c).unwrap();
        assert_eq!(r.indices, inst.x_indices, "trial {t} without termination");

        let r = dpp_detect(&clean, &inst.h, sigma2, model, &DetectorConfig::full(l1, l2), &c).unwrap();
        let true_root = inst.x_indices[N - 1];
        if r.root_order[..r.subtrees_searched].contains(&true_root) {
            assert_eq!(r.indices, inst.x_indices, "trial {t}");
        } else {
            // termination fired before the true sub-tree was reached
            assert!(r.terminated_early, "trial {t}");
            cut_short += 1;
        }
    }
    eprintln!("noiseless: {cut_short}/200 stopped before the true sub-tree");
    // a sane ordering puts the clean point's sub-tree first almost always
    assert!(cut_short < 20, "{cut_short} of 200 noiseless trials cut short");
}

#[test]
fn infinite_lambdas_reduce_to_conventional_search() {
    let c = Constellation::qpsk();
    let model = model_8();
    let inf = f64::INFINITY;
    for case in common::corpus(N, &[5.0, 7.0, 9.0, 11.0], 1000, 71) {
        let sigma2 = case.inst.noise_variance;
        let se = se_sd_detect_prepared(&case.prep, sigma2, &c, BaselineRadius::default()).unwrap();
        let full = dpp_detect_prepared(&case.prep, sigma2, model, &DetectorConfig::full(inf, inf), &c).unwrap();
        assert!((full.metric - se.metric).abs() < 1e-9, "{} vs {}", full.metric, se.metric);
        assert_eq!(full.used_fallback, se.used_fallback);
        assert!(!full.terminated_early);
        assert_eq!(full.subtrees_searched, c.len());

        let plain = DetectorConfig {
            enable_nn_ordering: false,
            enable_early_termination: false,
            ..DetectorConfig::full(inf, inf)
        };
        let same = dpp_detect_prepared(&case.prep, sigma2, model, &plain, &c).unwrap();
        assert_eq!(same.indices, se.indices);
        assert_eq!(same.tree_ops, se.tree_ops);
        assert_eq!(same.nodes_visited, se.nodes_visited);
    }
}

#[test]
fn learned_radius_never_exceeds_conventional() {
    let c = Constellation::qpsk();
    let model = model_8();
    for case in common::corpus(N, &[5.0, 9.0, 13.0], 300, 72) {
        let sigma2 = case.inst.noise_variance;
        let conv = conventional_reduced(&case.prep, sigma2);
        for l1 in [1.0, 1.2, 1.7, 3.0, 1e6] {
            let r = dpp_detect_prepared(&case.prep, sigma2, model, &DetectorConfig::radius_only(l1), &c).unwrap();
            assert!(r.initial_radius <= conv, "{} > {conv}", r.initial_radius);
            assert!(r.initial_radius >= 0.0);
        }
    }
}

#[test]
fn fallback_exactly_when_searched_subtrees_are_empty() {
    let c = Constellation::qpsk();
    let model = model_8();
    let mut fallbacks = 0;
    for case in common::corpus(N, &[4.0, 5.0], 300, 73) {
        let sigma2 = case.inst.noise_variance;
        for config in [DetectorConfig::full(1.0, 1.0), DetectorConfig::radius_only(1.0)] {
            let r = dpp_detect_prepared(&case.prep, sigma2, model, &config, &c).unwrap();
            assert_eq!(r.solution.len(), N);
            let searched = &r.root_order[..r.subtrees_searched];
            let minima = root_minima(&case.prep, &c);
            let best_inside = searched.iter().map(|&q| minima[q]).fold(f64::INFINITY, f64::min);
            let r0_sq = r.initial_radius * r.initial_radius;
            if r.used_fallback {
                fallbacks += 1;
                assert!(best_inside > r0_sq);
                assert_eq!(r.indices, case.prep.zero_forcing(&c));
            } else {
                assert!(r.metric <= r0_sq);
                assert!((r.metric - best_inside).abs() < 1e-9);
            }
        }
    }
    // λ₁ = 1 at low SNR must actually exercise the fallback path
    assert!(fallbacks > 0);
}

#[test]
fn terminated_search_is_exact_over_searched_subtrees() {
    let c = Constellation::qpsk();
    let model = model_8();
    let mut terminated = 0;
    for case in common::corpus(N, &[5.0, 7.0, 9.0, 11.0], 400, 74) {
        let sigma2 = case.inst.noise_variance;
        let (l1, l2) = lambdas(9.0);
        let r = dpp_detect_prepared(&case.prep, sigma2, model, &DetectorConfig::full(l1, l2), &c).unwrap();
        if !r.terminated_early {
            continue;
        }
        terminated += 1;
        assert!(r.subtrees_searched < c.len());
        let minima = root_minima(&case.prep, &c);
        let best = r.root_order[..r.subtrees_searched]
            .iter()
            .map(|&q| minima[q])
            .fold(f64::INFINITY, f64::min);
        if best <= r.initial_radius * r.initial_radius {
            assert!(!r.used_fallback);
            assert!((r.metric - best).abs() < 1e-9, "{} vs {best}", r.metric);
        } else {
            assert!(r.used_fallback);
        }
    }
    assert!(terminated > 0);
}

#[test]
fn larger_lambdas_search_at_least_as_much() {
    let c = Constellation::qpsk();
    let model = model_8();
    let grid = [1.0, 1.1, 1.3, 1.6, 2.0, 3.0];
    let corpus = common::corpus(N, &[5.0, 7.0, 9.0, 11.0], 1000, 75);
    let mut errors_by_l1 = vec![0u64; grid.len()];
    let mut errors_by_l2 = vec![0u64; grid.len()];
    for case in &corpus {
        let sigma2 = case.inst.noise_variance;
        let run = |l1: f64, l2: f64| dpp_detect_prepared(&case.prep, sigma2, model, &DetectorConfig::full(l1, l2), &c).unwrap();
        let mut prev: Option<(usize, f64)> = None;
        for (k, &l1) in grid.iter().enumerate() {
            let r = run(l1, 1.4);
            errors_by_l1[k] += bits_diff(&r.solution, &case.inst.x_true, &c).unwrap();
            if let Some((count, metric)) = prev {
                assert!(r.subtrees_searched >= count);
                if !r.used_fallback {
                    assert!(r.metric <= metric + 1e-12);
                }
            }
            prev = Some((r.subtrees_searched, if r.used_fallback { f64::INFINITY } else { r.metric }));
        }
        let mut prev: Option<(usize, f64)> = None;
        for (k, &l2) in grid.iter().enumerate() {
            let r = run(1.4, l2);
            errors_by_l2[k] += bits_diff(&r.solution, &case.inst.x_true, &c).unwrap();
            if let Some((count, metric)) = prev {
                assert!(r.subtrees_searched >= count);
                if !r.used_fallback {
                    assert!(r.metric <= metric + 1e-12);
                }
            }
            prev = Some((r.subtrees_searched, if r.used_fallback { f64::INFINITY } else { r.metric }));
        }
    }
    for w in errors_by_l1.windows(2).chain(errors_by_l2.windows(2)) {
        assert!(w[1] <= w[0], "bit errors {errors_by_l1:?} / {errors_by_l2:?}");
    }
}

#[test]
fn network_cost_is_fixed_per_call() {
    let c = Constellation::qpsk();
    for n in [4usize, 8, 16] {
        let model = RbfnModel::zeros(n, 4);
        let (i, h, s) = ((2 * n + 2) as u64, (2 * n + 8) as u64, 4u64);
        let inference = model.inference_cost();
        assert_eq!(inference.complex_mults, h * i + s * h + h);
        assert_eq!(inference.complex_adds, h * i + s * h + s + h);

        let features = n as u64 + (n * (n + 1) / 2) as u64;
        let mut seen = None;
        for case in common::corpus(n, &[6.0, 12.0], 10, 76) {
            let r = dpp_detect_prepared(&case.prep, case.inst.noise_variance, &model, &DetectorConfig::ordering_only(), &c)
                .unwrap();
            assert_eq!(r.nn_ops.complex_mults, features + i + inference.complex_mults);
            assert_eq!(r.nn_ops.complex_adds, features + i + inference.complex_adds);
            assert_eq!(*seen.get_or_insert(r.nn_ops), r.nn_ops);
        }
        let prep = PreparedInstance::new(&vec![dppsd::Complex64::new(0.0, 0.0); n], &ComplexMatrix::identity(n)).unwrap();
        let se = se_sd_detect_prepared(&prep, 1.0, &c, BaselineRadius::default()).unwrap();
        assert_eq!(se.nn_ops.total(), 0);
    }
}
