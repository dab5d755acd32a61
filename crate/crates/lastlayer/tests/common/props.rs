//! Property suites for every module's invariants, written as plain functions
//! so the per-module test targets and the acceptance gate can run the same
//! checks with an explicit case count.
//!
//! Each property runs under a deterministically seeded proptest runner (the
//! seed is derived from the property name), so a passing suite stays passing:
//! there is no run-to-run input drift.

use lastlayer::data::{bootstrap_resample, load_idx, split_by_class, write_idx, ClassSplit, Dataset};
use lastlayer::inference::{
    classify, confidence_histogram, predictive_posterior, q_entropy_confidence, sr_confidence,
    std_confidence, ConfidenceKind, PredictionRecord,
};
use lastlayer::metrics::{aupr, aurc, auroc, calibration, coverage_and_risk, ood_evaluate};
use lastlayer::network::{
    extract_features, softmax, train_from, Architecture, NetworkParams, OptimizerKind, TrainConfig,
};
use lastlayer::samplers::{
    bootstrap_ensemble, mc_dropout_build, run_chain, run_chain_on_target, sgd_step, sgld_step,
    synthetic_classification, ChainSettings, SamplerConfig, SamplerKind, Scope,
    StochasticGradientTarget,
};
use lastlayer::Result as LlResult;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestError, TestRng, TestRunner};

use super::brute;
use super::fd;

pub type PropResult = std::result::Result<(), String>;

/// A named property suite: every function takes the number of cases to run.
pub type Suite = Vec<(&'static str, fn(u32) -> PropResult)>;

/// Deterministic 32-byte runner seed derived from the property name.
fn rng_seed(name: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
    for (i, slot) in out.iter_mut().enumerate() {
        for &b in name.as_bytes() {
            acc = (acc ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
        }
        acc = acc.wrapping_add(i as u64);
        *slot = (acc >> ((i % 8) * 8)) as u8;
    }
    out
}

fn run<S>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>,
) -> PropResult
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &rng_seed(name));
    let mut runner = TestRunner::new_with_rng(config, rng);
    runner.run(&strategy, test).map_err(|e| match e {
        TestError::Fail(reason, value) => format!("{name}: {reason} for input {value:?}"),
        TestError::Abort(reason) => format!("{name}: aborted: {reason}"),
    })
}

// ---------------------------------------------------------------- data --

/// Dataset plus a valid class split whose two sides are both guaranteed to
/// be populated (one example of each side is appended).
fn split_input() -> impl Strategy<Value = (Dataset, ClassSplit)> {
    (3..=6usize)
        .prop_flat_map(|k| {
            (
                Just(k),
                prop::collection::btree_set(0..k, 2..k),
                prop::collection::vec(0..k, 0..30),
            )
        })
        .prop_map(|(k, in_set, mut labels)| {
            let forced_in = *in_set.iter().next().expect("at least two classes");
            let forced_out = (0..k).find(|c| !in_set.contains(c)).expect("out side non-empty");
            labels.push(forced_in);
            labels.push(forced_out);
            let n = labels.len();
            // Identity features: row i is (2i, 2i+1), so examples can be
            // traced through the split by value.
            let feats = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
            let ds = Dataset::new(feats, labels, k).expect("valid by construction");
            let split = ClassSplit::new(in_set, k).expect("valid by construction");
            (ds, split)
        })
}

pub fn prop_split_partition(cases: u32) -> PropResult {
    run("class split partitions the dataset", cases, split_input(), |(ds, split)| {
        let (in_ds, out_ds) = split_by_class(&ds, &split).expect("both sides populated");
        prop_assert_eq!(in_ds.len() + out_ds.len(), ds.len());
        let source_feats = ds.features();
        let mut seen = Vec::new();
        for (side, keeps_labels) in [(&in_ds, false), (&out_ds, true)] {
            let mut prev = None;
            for i in 0..side.len() {
                let (row, label) = side.example(i);
                let source = row[0] as usize / 2;
                prop_assert!(source < ds.len());
                prop_assert_eq!(row, source_feats.row(source));
                if keeps_labels {
                    prop_assert_eq!(label, ds.labels()[source]);
                }
                // order within each side is source order
                prop_assert!(prev.map_or(true, |p| p < source));
                prev = Some(source);
                seen.push(source);
            }
        }
        seen.sort_unstable();
        let everyone: Vec<usize> = (0..ds.len()).collect();
        prop_assert_eq!(seen, everyone);
        prop_assert_eq!(out_ds.num_classes(), ds.num_classes());
        Ok(())
    })
}

pub fn prop_relabel_bijection(cases: u32) -> PropResult {
    run("in-side relabeling is the ascending bijection", cases, split_input(), |(ds, split)| {
        let (in_ds, _) = split_by_class(&ds, &split).expect("both sides populated");
        let in_sorted: Vec<usize> = split.in_classes().collect();
        prop_assert_eq!(in_ds.num_classes(), in_sorted.len());
        for i in 0..in_ds.len() {
            let (row, dense) = in_ds.example(i);
            let original = ds.labels()[row[0] as usize / 2];
            prop_assert!(dense < in_sorted.len());
            prop_assert_eq!(in_sorted[dense], original);
            prop_assert_eq!(split.dense_label(original), Some(dense));
        }
        Ok(())
    })
}

fn dataset_strategy(max_n: usize) -> impl Strategy<Value = Dataset> {
    (1..=max_n, 1..=4usize, 2..=4usize).prop_flat_map(|(n, d, k)| {
        (prop::collection::vec(-4.0..4.0f64, n * d), prop::collection::vec(0..k, n)).prop_map(
            move |(vals, labels)| {
                let feats = Array2::from_shape_vec((n, d), vals).expect("n*d values");
                Dataset::new(feats, labels, k).expect("valid by construction")
            },
        )
    })
}

pub fn prop_bootstrap_rows_are_copies(cases: u32) -> PropResult {
    run(
        "bootstrap rows are bitwise copies of source rows",
        cases,
        (dataset_strategy(25), any::<u64>()),
        |(ds, seed)| {
            let sample = bootstrap_resample(&ds, seed);
            prop_assert_eq!(sample.len(), ds.len());
            prop_assert_eq!(sample.num_classes(), ds.num_classes());
            for i in 0..sample.len() {
                let (row, label) = sample.example(i);
                let found = (0..ds.len()).any(|j| {
                    let (src, src_label) = ds.example(j);
                    src_label == label
                        && row.iter().zip(src.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
                });
                prop_assert!(found, "resampled row {} not found in the source", i);
            }
            prop_assert_eq!(bootstrap_resample(&ds, seed), sample);
            Ok(())
        },
    )
}

pub fn prop_idx_roundtrip(cases: u32) -> PropResult {
    let input = (1..=10usize, 1..=4usize, 1..=4usize).prop_flat_map(|(n, r, c)| {
        (
            Just((n, r, c)),
            prop::collection::vec(0..=255u8, n * r * c),
            prop::collection::vec(0..=9usize, n),
        )
    });
    run("idx files round-trip bitwise", cases, input, |((n, r, c), pixels, labels)| {
        let feats: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
        let ds = Dataset::new(
            Array2::from_shape_vec((n, r * c), feats).expect("n*r*c values"),
            labels,
            10,
        )
        .expect("valid by construction");
        let dir = tempfile::tempdir().expect("tempdir");
        let images = dir.path().join("imgs.idx3");
        let labels_path = dir.path().join("labels.idx1");
        write_idx(&ds, &images, &labels_path, r, c).expect("exact pixel values");
        let back = load_idx(&images, &labels_path)
            .expect("own writer output")
            .with_num_classes(10)
            .expect("labels are digits");
        prop_assert_eq!(&back, &ds);
        // writing the loaded dataset again reproduces the files byte for byte
        let images2 = dir.path().join("rt.idx3");
        let labels2 = dir.path().join("rt.idx1");
        write_idx(&back, &images2, &labels2, r, c).expect("round-tripped values");
        prop_assert_eq!(std::fs::read(&images).unwrap(), std::fs::read(&images2).unwrap());
        prop_assert_eq!(std::fs::read(&labels_path).unwrap(), std::fs::read(&labels2).unwrap());
        Ok(())
    })
}

pub fn data_suite() -> Suite {
    vec![
        ("data: class split partitions the dataset", prop_split_partition),
        ("data: in-side relabeling is the ascending bijection", prop_relabel_bijection),
        ("data: bootstrap rows are bitwise copies", prop_bootstrap_rows_are_copies),
        ("data: idx files round-trip bitwise", prop_idx_roundtrip),
    ]
}

// ------------------------------------------------------------- network --

pub fn prop_softmax_normalized_and_shift_invariant(cases: u32) -> PropResult {
    run(
        "softmax normalizes and ignores logit shifts",
        cases,
        (prop::collection::vec(-30.0..30.0f64, 1..=8), -40.0..40.0f64),
        |(logits, shift)| {
            let z = Array1::from_vec(logits);
            let p = softmax(z.view());
            prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            let shifted = softmax((&z + shift).view());
            for (a, b) in p.iter().zip(shifted.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            Ok(())
        },
    )
}

pub fn prop_gradient_matches_finite_differences(cases: u32) -> PropResult {
    let input = (
        1..=5usize,
        prop::collection::vec(1..=5usize, 0..=2),
        2..=4usize,
        1..=4usize,
        any::<u64>(),
    );
    run(
        "analytic gradients match central finite differences",
        cases,
        input,
        |(input_dim, hidden, classes, batch, seed)| {
            let mut sizes = vec![input_dim];
            sizes.extend(hidden);
            sizes.push(classes);
            let err = fd::fd_max_rel_err(&sizes, batch, seed);
            prop_assert!(err <= 1e-5, "relative error {} for {:?}", err, sizes);
            Ok(())
        },
    )
}

pub fn prop_zero_learning_rate_is_identity(cases: u32) -> PropResult {
    let input = (
        2..=12usize,
        1..=3usize,
        2..=3usize,
        prop::option::of(1..=4usize),
        1..=8usize,
        1..=2usize,
        any::<bool>(),
        any::<u64>(),
        any::<u64>(),
    );
    run(
        "zero learning rate leaves parameters untouched",
        cases,
        input,
        |(n, d, k, hidden, batch_size, epochs, adam, data_seed, param_seed)| {
            let ds = synthetic_classification(n, d, k, data_seed).expect("valid dims");
            let mut sizes = vec![d];
            sizes.extend(hidden);
            sizes.push(k);
            let arch = Architecture::new(sizes).expect("valid sizes");
            let init = NetworkParams::init(&arch, param_seed);
            let cfg = TrainConfig {
                learning_rate: 0.0,
                batch_size,
                epochs,
                optimizer: if adam { OptimizerKind::Adam } else { OptimizerKind::Sgd },
                seed: data_seed ^ param_seed,
            };
            let out = train_from(init.clone(), &ds, &cfg).expect("finite training");
            prop_assert_eq!(out.params, init);
            Ok(())
        },
    )
}

pub fn prop_detached_head_reproduces_network(cases: u32) -> PropResult {
    let input = (
        2..=10usize,
        1..=4usize,
        prop::collection::vec(1..=4usize, 1..=2),
        2..=4usize,
        any::<u64>(),
        any::<u64>(),
    );
    run(
        "detached last layer on extracted features reproduces the network",
        cases,
        input,
        |(n, d, hidden, k, data_seed, param_seed)| {
            let ds = synthetic_classification(n, d, k, data_seed).expect("valid dims");
            let mut sizes = vec![d];
            sizes.extend(hidden);
            sizes.push(k);
            let arch = Architecture::new(sizes).expect("valid sizes");
            let params = NetworkParams::init(&arch, param_seed);
            let feats = extract_features(&params, &ds).expect("has hidden layers");
            let head = params.detach_last_layer();
            let full = params.forward_batch(ds.features()).expect("dims match").probs;
            let via_head = head.forward_batch(feats.features()).expect("dims match").probs;
            prop_assert_eq!(full, via_head);
            Ok(())
        },
    )
}

pub fn network_suite() -> Suite {
    vec![
        ("network: softmax normalizes and ignores shifts", prop_softmax_normalized_and_shift_invariant),
        ("network: gradients match finite differences", prop_gradient_matches_finite_differences),
        ("network: zero learning rate is the identity", prop_zero_learning_rate_is_identity),
        ("network: detached head reproduces the network", prop_detached_head_reproduces_network),
    ]
}

// ------------------------------------------------------------ samplers --

struct CountingTarget {
    dim: usize,
    n: usize,
    calls: usize,
}

impl StochasticGradientTarget for CountingTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_data(&self) -> usize {
        self.n
    }

    fn loglik_grad(&mut self, _theta: &[f64], _batch: &[usize], grad: &mut [f64]) -> LlResult<f64> {
        self.calls += 1;
        grad.fill(0.0);
        Ok(0.0)
    }

    fn prior_grad(&mut self, _theta: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
    }
}

pub fn prop_chain_update_count(cases: u32) -> PropResult {
    let input = (
        1..=3usize,
        2..=10usize,
        1..=4usize,
        1..=4usize,
        1..=12usize,
        any::<bool>(),
        any::<u64>(),
    );
    run(
        "chains take exactly n_samples x n_thinning gradient steps",
        cases,
        input,
        |(dim, n, n_samples, n_thinning, batch_size, sgld, seed)| {
            let mut target = CountingTarget { dim, n, calls: 0 };
            let settings = ChainSettings {
                sgld,
                n_samples,
                n_thinning,
                learning_rate: 1e-3,
                batch_size,
                seed,
            };
            let samples = run_chain_on_target(&mut target, &vec![0.0; dim], &settings)
                .expect("zero-gradient chain stays finite");
            prop_assert_eq!(target.calls, n_samples * n_thinning);
            prop_assert_eq!(samples.len(), n_samples);
            Ok(())
        },
    )
}

pub fn prop_sgld_zero_noise_is_sgd(cases: u32) -> PropResult {
    let input = (1..=3usize, 4..=12usize, any::<u64>(), any::<u64>(), 1e-4..0.5f64).prop_flat_map(
        |(dim, n, data_seed, theta_seed, lr)| {
            (
                Just((dim, n, data_seed, theta_seed, lr)),
                prop::collection::vec(0..n, 1..=n),
            )
        },
    );
    run(
        "an sgld step with zero noise is bitwise an sgd step",
        cases,
        input,
        |((dim, n, data_seed, theta_seed, lr), batch)| {
            let mean = vec![0.5; dim];
            let noise = vec![1.0; dim];
            let mut target =
                super::gaussian::GaussianMeanTarget::sample(n, &mean, &noise, 4.0, data_seed);
            let mut theta_rng_state = theta_seed;
            let mut next = || {
                // xorshift is plenty for scattering test coordinates
                theta_rng_state ^= theta_rng_state << 13;
                theta_rng_state ^= theta_rng_state >> 7;
                theta_rng_state ^= theta_rng_state << 17;
                (theta_rng_state % 1000) as f64 / 250.0 - 2.0
            };
            let theta: Vec<f64> = (0..dim).map(|_| next()).collect();
            let a = sgld_step(&theta, &batch, lr, &mut target, &vec![0.0; dim])
                .expect("finite target");
            let b = sgd_step(&theta, &batch, lr, &mut target).expect("finite target");
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            Ok(())
        },
    )
}

fn sampler_config(kind: SamplerKind, scope: Scope, seed: u64) -> SamplerConfig {
    SamplerConfig {
        kind,
        scope,
        n_samples: 2,
        n_thinning: matches!(kind, SamplerKind::Sgd | SamplerKind::Sgld).then_some(1),
        learning_rate: 0.05,
        batch_size: 4,
        prior_variance: matches!(kind, SamplerKind::Sgd | SamplerKind::Sgld).then_some(1.0),
        sgd_prior: true,
        p_drop: (kind == SamplerKind::McDropout).then_some(0.3),
        n_epochs: matches!(kind, SamplerKind::Bootstrap | SamplerKind::McDropout).then_some(1),
        seed,
    }
}

pub fn prop_samplers_leave_theta_star_untouched(cases: u32) -> PropResult {
    let input = (6..=16usize, 2..=3usize, 2..=3usize, 2..=3usize, any::<bool>(), any::<u64>());
    run(
        "samplers never modify the stage-one parameters",
        cases,
        input,
        |(n, d, k, h, last_layer, seed)| {
            let scope = if last_layer { Scope::LastLayer } else { Scope::FullNetwork };
            let raw = synthetic_classification(n, d, k, seed ^ 0x5a5a).expect("valid dims");
            let arch = Architecture::new(vec![d, h, k]).expect("valid sizes");
            let theta_star = NetworkParams::init(&arch, seed);
            let before = theta_star.content_hash();
            // last-layer samplers run on the extracted-feature dataset
            let ds = match scope {
                Scope::LastLayer => extract_features(&theta_star, &raw).expect("has hidden layer"),
                Scope::FullNetwork => raw,
            };
            let expected_arch = match scope {
                Scope::LastLayer => theta_star.detach_last_layer().architecture(),
                Scope::FullNetwork => theta_star.architecture(),
            };
            for kind in [SamplerKind::Sgld, SamplerKind::Sgd, SamplerKind::Bootstrap, SamplerKind::McDropout] {
                let cfg = sampler_config(kind, scope, seed);
                let ens = match kind {
                    SamplerKind::Sgld | SamplerKind::Sgd => run_chain(&ds, &theta_star, &cfg),
                    SamplerKind::Bootstrap => bootstrap_ensemble(&ds, &theta_star, &cfg),
                    SamplerKind::McDropout => mc_dropout_build(&ds, &theta_star, &cfg),
                    SamplerKind::SgdPe => unreachable!(),
                }
                .expect("sampling stays finite at this learning rate");
                prop_assert_eq!(&theta_star.content_hash(), &before);
                match ens.parameter_members() {
                    Some(members) => {
                        for m in members {
                            prop_assert_eq!(&m.architecture(), &expected_arch);
                        }
                    }
                    None => {
                        let drop = ens.dropout().expect("dropout ensembles store one network");
                        prop_assert_eq!(&drop.params.architecture(), &expected_arch);
                    }
                }
            }
            Ok(())
        },
    )
}

pub fn prop_bootstrap_tiny_learning_rate_stays_at_optimum(cases: u32) -> PropResult {
    let input = (6..=16usize, 2..=3usize, 2..=3usize, 1..=2usize, any::<bool>(), any::<u64>());
    run(
        "bootstrap with vanishing learning rate stays at the optimum",
        cases,
        input,
        |(n, d, k, members, last_layer, seed)| {
            let scope = if last_layer { Scope::LastLayer } else { Scope::FullNetwork };
            let raw = synthetic_classification(n, d, k, seed ^ 0x17).expect("valid dims");
            let arch = Architecture::new(vec![d, 3, k]).expect("valid sizes");
            let theta_star = NetworkParams::init(&arch, seed);
            let ds = match scope {
                Scope::LastLayer => extract_features(&theta_star, &raw).expect("has hidden layer"),
                Scope::FullNetwork => raw,
            };
            let mut cfg = sampler_config(SamplerKind::Bootstrap, scope, seed);
            cfg.n_samples = members;
            cfg.learning_rate = 1e-12;
            let ens = bootstrap_ensemble(&ds, &theta_star, &cfg).expect("finite");
            let base = match scope {
                Scope::LastLayer => theta_star.detach_last_layer(),
                Scope::FullNetwork => theta_star.clone(),
            };
            for m in ens.parameter_members().expect("bootstrap materializes members") {
                prop_assert!(m.max_abs_diff(&base) <= 1e-9);
            }
            Ok(())
        },
    )
}

pub fn prop_predictive_samples_are_distributions(cases: u32) -> PropResult {
    let input = (6..=12usize, 2..=3usize, 2..=4usize, any::<bool>(), any::<u64>()).prop_flat_map(
        |(n, d, k, last_layer, seed)| {
            (
                Just((n, d, k, last_layer, seed)),
                prop::collection::vec(-2.0..2.0f64, d),
                0..64usize,
            )
        },
    );
    run(
        "predictive samples are probability vectors",
        cases,
        input,
        |((n, d, k, last_layer, seed), x, example_index)| {
            let scope = if last_layer { Scope::LastLayer } else { Scope::FullNetwork };
            let raw = synthetic_classification(n, d, k, seed ^ 0x33).expect("valid dims");
            let arch = Architecture::new(vec![d, 3, k]).expect("valid sizes");
            let theta_star = NetworkParams::init(&arch, seed);
            let ds = match scope {
                Scope::LastLayer => extract_features(&theta_star, &raw).expect("has hidden layer"),
                Scope::FullNetwork => raw,
            };
            let chain = run_chain(&ds, &theta_star, &sampler_config(SamplerKind::Sgld, scope, seed))
                .expect("finite");
            let mut drop_cfg = sampler_config(SamplerKind::McDropout, scope, seed);
            drop_cfg.n_samples = 3;
            let dropout = mc_dropout_build(&ds, &theta_star, &drop_cfg).expect("finite");
            // the query always lives in the ensemble's own input space
            for ens in [&chain, &dropout] {
                let query = Array1::from_vec(
                    x.iter().cycle().take(ens.input_dim()).copied().collect::<Vec<_>>(),
                );
                let samples = ens.predictive_samples(query.view(), example_index);
                prop_assert_eq!(samples.len(), ens.n_samples());
                for s in &samples {
                    prop_assert_eq!(s.len(), k);
                    prop_assert!(s.iter().all(|&v| v >= 0.0));
                    prop_assert!((s.sum() - 1.0).abs() <= 1e-12);
                }
            }
            Ok(())
        },
    )
}

pub fn samplers_suite() -> Suite {
    vec![
        ("samplers: chains take n_samples x n_thinning steps", prop_chain_update_count),
        ("samplers: sgld with zero noise is sgd bitwise", prop_sgld_zero_noise_is_sgd),
        ("samplers: the stage-one parameters stay untouched", prop_samplers_leave_theta_star_untouched),
        ("samplers: tiny-rate bootstrap stays at the optimum", prop_bootstrap_tiny_learning_rate_stays_at_optimum),
        ("samplers: predictive samples are distributions", prop_predictive_samples_are_distributions),
    ]
}

// ----------------------------------------------------------- inference --

/// A set of probability vectors (softmax of bounded logits), plus the same
/// set in a shuffled order.
fn sample_sets() -> impl Strategy<Value = (Vec<Array1<f64>>, Vec<Array1<f64>>)> {
    (2..=4usize)
        .prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec(-8.0..8.0f64, k), 1..=10)
        })
        .prop_flat_map(|logit_sets| {
            let samples: Vec<Array1<f64>> = logit_sets
                .iter()
                .map(|l| softmax(Array1::from_vec(l.clone()).view()))
                .collect();
            let shuffled = Just(samples.clone()).prop_shuffle();
            (Just(samples), shuffled)
        })
}

pub fn prop_prediction_order_invariant(cases: u32) -> PropResult {
    run(
        "predictions do not depend on sample order",
        cases,
        sample_sets(),
        |(samples, shuffled)| {
            let p = predictive_posterior(&samples).expect("non-empty");
            let q = predictive_posterior(&shuffled).expect("non-empty");
            for (a, b) in p.iter().zip(q.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let f_p = classify(p.view());
            let f_q = classify(q.view());
            prop_assert_eq!(f_p, f_q);
            let std_p = std_confidence(&samples, f_p).expect("class in range");
            let std_q = std_confidence(&shuffled, f_q).expect("class in range");
            prop_assert!((std_p - std_q).abs() <= 1e-12);
            let ent_p = q_entropy_confidence(&samples).expect("non-empty");
            let ent_q = q_entropy_confidence(&shuffled).expect("non-empty");
            prop_assert_eq!(ent_p, ent_q);
            Ok(())
        },
    )
}

pub fn prop_confidence_ranges(cases: u32) -> PropResult {
    run("confidence scores stay inside their ranges", cases, sample_sets(), |(samples, _)| {
        let k = samples[0].len() as f64;
        let p = predictive_posterior(&samples).expect("non-empty");
        let sr = sr_confidence(p.view());
        prop_assert!(sr >= 1.0 / k - 1e-12 && sr <= 1.0 + 1e-12);
        let std = std_confidence(&samples, classify(p.view())).expect("class in range");
        prop_assert!((-0.5 - 1e-12..=0.0).contains(&std));
        let ent = q_entropy_confidence(&samples).expect("non-empty");
        prop_assert!((-k.ln() - 1e-12..=0.0).contains(&ent));
        Ok(())
    })
}

pub fn prop_identical_members_are_a_point_estimate(cases: u32) -> PropResult {
    let input = (2..=4usize, 2..=10usize).prop_flat_map(|(k, copies)| {
        (prop::collection::vec(-8.0..8.0f64, k), Just(copies))
    });
    run(
        "identical members collapse to the single-model scores",
        cases,
        input,
        |(logits, copies)| {
            let single = softmax(Array1::from_vec(logits).view());
            let samples = vec![single.clone(); copies];
            let p = predictive_posterior(&samples).expect("non-empty");
            for (a, b) in p.iter().zip(single.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let f = classify(p.view());
            prop_assert_eq!(f, classify(single.view()));
            let std = std_confidence(&samples, f).expect("class in range");
            prop_assert!(std.abs() <= 1e-12, "std {} for identical members", std);
            prop_assert_eq!(q_entropy_confidence(&samples).expect("non-empty"), 0.0);
            Ok(())
        },
    )
}

fn record_set(max_n: usize) -> impl Strategy<Value = Vec<PredictionRecord>> {
    prop::collection::vec(
        (0..=20u32, 0..=10u32, 0..=8u32, any::<bool>()).prop_map(|(sr, std, q, correct)| {
            brute::record(
                correct,
                f64::from(sr) / 20.0,
                -f64::from(std) / 20.0,
                -f64::from(q) * 0.15,
            )
        }),
        1..=max_n,
    )
}

pub fn prop_histogram_partitions_records(cases: u32) -> PropResult {
    let kind = prop::sample::select(ConfidenceKind::ALL.to_vec());
    run(
        "confidence histograms partition the records",
        cases,
        (record_set(40), 1..=20usize, kind),
        |(records, bins, kind)| {
            let hist = confidence_histogram(&records, kind, 2, bins).expect("valid bins");
            prop_assert_eq!(hist.edges.len(), bins + 1);
            let (lo, hi) = kind.range(2);
            prop_assert_eq!(hist.edges[0], lo);
            prop_assert_eq!(*hist.edges.last().expect("non-empty"), hi);
            prop_assert!(hist.edges.windows(2).all(|w| w[0] < w[1]));
            let total: usize = hist.correct.iter().chain(&hist.incorrect).sum();
            prop_assert_eq!(total, records.len());
            let correct: usize = hist.correct.iter().sum();
            prop_assert_eq!(correct, records.iter().filter(|r| r.correct()).count());
            Ok(())
        },
    )
}

pub fn inference_suite() -> Suite {
    vec![
        ("inference: predictions ignore sample order", prop_prediction_order_invariant),
        ("inference: confidences stay inside their ranges", prop_confidence_ranges),
        ("inference: identical members collapse to a point estimate", prop_identical_members_are_a_point_estimate),
        ("inference: histograms partition the records", prop_histogram_partitions_records),
    ]
}

// ------------------------------------------------------------- metrics --

pub fn prop_aurc_matches_brute_force(cases: u32) -> PropResult {
    run("aurc matches the brute-force definition", cases, record_set(50), |records| {
        for kind in ConfidenceKind::ALL {
            let (fast, _) = aurc(&records, kind).expect("finite confidences");
            let slow = brute::brute_aurc(&records, kind);
            prop_assert!((fast - slow).abs() <= 1e-12, "{} vs {}", fast, slow);
        }
        Ok(())
    })
}

pub fn prop_aurc_rank_invariant(cases: u32) -> PropResult {
    let kind = prop::sample::select(ConfidenceKind::ALL.to_vec());
    let input = (record_set(50), 0.1..10.0f64, -5.0..5.0f64, any::<bool>(), kind);
    run(
        "aurc depends only on the confidence ranking",
        cases,
        input,
        |(records, a, b, exponential, kind)| {
            let transform = |v: f64| if exponential { (a * v + b).exp() } else { a * v + b };
            let transformed: Vec<PredictionRecord> = records
                .iter()
                .map(|r| {
                    let mut t = r.clone();
                    match kind {
                        ConfidenceKind::Sr => t.sr = transform(t.sr),
                        ConfidenceKind::Std => t.std_kappa = transform(t.std_kappa),
                        ConfidenceKind::QEntropy => t.q_entropy_kappa = transform(t.q_entropy_kappa),
                    }
                    t
                })
                .collect();
            let (before, curve_before) = aurc(&records, kind).expect("finite");
            let (after, curve_after) = aurc(&transformed, kind).expect("finite");
            prop_assert_eq!(before, after);
            prop_assert_eq!(curve_before.len(), curve_after.len());
            for (x, y) in curve_before.iter().zip(&curve_after) {
                prop_assert_eq!(x.coverage, y.coverage);
                prop_assert_eq!(x.selective_risk, y.selective_risk);
            }
            Ok(())
        },
    )
}

pub fn prop_calibration_bounds(cases: u32) -> PropResult {
    run("ece and mce are bounded bin gaps", cases, (record_set(40), 1..=25usize), |(records, m)| {
        let report = calibration(&records, m).expect("sr values lie in [0,1]");
        prop_assert!(report.ece >= 0.0 && report.ece <= 1.0);
        prop_assert!(report.mce >= 0.0 && report.mce <= 1.0);
        prop_assert!(report.ece <= report.mce + 1e-12);
        prop_assert_eq!(report.bins.len(), m);
        let total: usize = report.bins.iter().map(|b| b.count).sum();
        prop_assert_eq!(total, records.len());
        for bin in &report.bins {
            prop_assert!((0.0..=1.0).contains(&bin.accuracy));
            prop_assert!((0.0..=1.0).contains(&bin.confidence));
        }
        prop_assert_eq!(report.bins[0].lower, 0.0);
        prop_assert_eq!(report.bins[m - 1].upper, 1.0);
        Ok(())
    })
}

fn score_set(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0..=12u32).prop_map(|v| f64::from(v) / 12.0), 1..=max_n)
}

pub fn prop_auroc_complementary(cases: u32) -> PropResult {
    run(
        "auroc of swapped roles sums to one",
        cases,
        (score_set(30), score_set(30)),
        |(a, b)| {
            let fwd = auroc(&a, &b).expect("non-empty");
            let rev = auroc(&b, &a).expect("non-empty");
            prop_assert!((fwd + rev - 1.0).abs() <= 1e-12);
            Ok(())
        },
    )
}

pub fn prop_aupr_role_swap(cases: u32) -> PropResult {
    run(
        "aupr-out is aupr with negated scores and swapped roles",
        cases,
        (score_set(30), score_set(30)),
        |(scores_in, scores_out)| {
            let records_in: Vec<PredictionRecord> =
                scores_in.iter().map(|&s| brute::record(true, s, -0.1, -0.1)).collect();
            let records_out: Vec<PredictionRecord> =
                scores_out.iter().map(|&s| brute::record(true, s, -0.1, -0.1)).collect();
            let report = ood_evaluate(&records_in, &records_out, ConfidenceKind::Sr)
                .expect("non-empty sides");
            let neg_in: Vec<f64> = scores_in.iter().map(|v| -v).collect();
            let neg_out: Vec<f64> = scores_out.iter().map(|v| -v).collect();
            prop_assert_eq!(report.aupr_out, aupr(&neg_out, &neg_in).expect("non-empty"));
            prop_assert_eq!(report.aupr_in, aupr(&scores_in, &scores_out).expect("non-empty"));
            prop_assert_eq!(report.auroc, auroc(&scores_in, &scores_out).expect("non-empty"));
            let brute_out = brute::brute_average_precision(&neg_out, &neg_in);
            prop_assert!((report.aupr_out - brute_out).abs() <= 1e-12);
            Ok(())
        },
    )
}

pub fn prop_risk_coverage_curve_monotone(cases: u32) -> PropResult {
    let kind = prop::sample::select(ConfidenceKind::ALL.to_vec());
    run(
        "risk-coverage curves cover monotonically",
        cases,
        (record_set(50), kind),
        |(records, kind)| {
            let (_, curve) = aurc(&records, kind).expect("finite");
            prop_assert!(!curve.is_empty());
            for w in curve.windows(2) {
                prop_assert!(w[0].threshold > w[1].threshold);
                prop_assert!(w[0].coverage < w[1].coverage);
            }
            prop_assert_eq!(curve.last().expect("non-empty").coverage, 1.0);
            for point in &curve {
                prop_assert!(point.coverage > 0.0);
                prop_assert!((0.0..=1.0).contains(&point.selective_risk));
                let (cov, risk) = coverage_and_risk(&records, kind, point.threshold)
                    .expect("achieved thresholds select someone");
                prop_assert_eq!(cov, point.coverage);
                prop_assert_eq!(risk, point.selective_risk);
            }
            Ok(())
        },
    )
}

pub fn metrics_suite() -> Suite {
    vec![
        ("metrics: aurc matches brute force", prop_aurc_matches_brute_force),
        ("metrics: aurc depends only on ranking", prop_aurc_rank_invariant),
        ("metrics: ece and mce are bounded gaps", prop_calibration_bounds),
        ("metrics: auroc role swap sums to one", prop_auroc_complementary),
        ("metrics: aupr role swap matches negated scores", prop_aupr_role_swap),
        ("metrics: risk-coverage curves are monotone", prop_risk_coverage_curve_monotone),
    ]
}

/// Every suite, for the acceptance gate.
pub fn all_suites() -> Vec<(&'static str, Suite)> {
    vec![
        ("data", data_suite()),
        ("network", network_suite()),
        ("samplers", samplers_suite()),
        ("inference", inference_suite()),
        ("metrics", metrics_suite()),
    ]
}
