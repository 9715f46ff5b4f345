//! Property tests of the model invariants and statistical sanity checks of the oracles.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcurrent_core::exact::magnetization_pmf;
use rcurrent_core::limit_law::LimitLaw;
use rcurrent_core::phi4::{block_partitions, is_admissible, BlockSpec};
use rcurrent_core::quad::QuadratureSpec;
use rcurrent_core::sampler::{ChainState, MoveMix};
use rcurrent_core::stats::{chi_square, ks_distance, ComparisonReport, MomentError, Tolerances};
use rcurrent_core::{Current, EvenPartition, MeasureKind, ModelParams, SourceSet};

/// A sparse current on `n` vertices as a map from pairs to positive multiplicities.
fn sparse_current() -> impl Strategy<Value = (usize, BTreeMap<(u32, u32), u32>)> {
    (2usize..12).prop_flat_map(|n| {
        let edge = (1..=n as u32, 1..=n as u32, 1u32..6).prop_filter("no loops", |(i, j, _)| i != j);
        (Just(n), prop::collection::vec(edge, 0..15)).prop_map(|(n, es)| {
            let mut m = BTreeMap::new();
            for (i, j, k) in es {
                m.insert((i.min(j), i.max(j)), k);
            }
            (n, m)
        })
    })
}

fn current(n: usize, edges: &BTreeMap<(u32, u32), u32>) -> Current {
    Current::from_edges(n, edges.iter().map(|(&(i, j), &m)| (i, j, m))).unwrap()
}

proptest! {
    #[test]
    fn source_sets_are_even((n, edges) in sparse_current()) {
        prop_assert_eq!(current(n, &edges).source_set().len() % 2, 0);
    }

    #[test]
    fn sources_of_a_sum_are_the_symmetric_difference((n, a) in sparse_current(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = BTreeMap::new();
        for &e in a.keys() {
            if rng.random_bool(0.5) {
                b.insert(e, rng.random_range(1..4));
            }
        }
        let (ca, cb) = (current(n, &a), current(n, &b));
        let sum = ca.add(&cb).unwrap();
        prop_assert_eq!(sum.source_set(), ca.source_set().symmetric_difference(&cb.source_set()));
    }

    #[test]
    fn log_weight_is_additive_on_disjoint_supports((n, edges) in sparse_current(), lambda in -1.0f64..1.0, mask in any::<u32>()) {
        let p = ModelParams::critical(n.max(4), lambda).unwrap();
        let n = p.n();
        let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
        for (i, (&e, &m)) in edges.iter().enumerate() {
            if mask >> (i % 32) & 1 == 1 { a.insert(e, m); } else { b.insert(e, m); }
        }
        let (ca, cb) = (current(n, &a), current(n, &b));
        let lhs = ca.add(&cb).unwrap().log_weight(&p);
        let rhs = ca.log_weight(&p) + cb.log_weight(&p);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn clusters_split_the_sources_evenly((n, edges) in sparse_current()) {
        let c = current(n, &edges);
        let s = c.source_set();
        let r = c.cluster_report(&s).unwrap();
        prop_assert!(r.partition.is_even());
        prop_assert_eq!(r.partition.ground(), s.vertices().to_vec());
    }

    #[test]
    fn block_partitions_are_admissible(a in 0usize..4, b in 0usize..3, split in 0usize..3) {
        let first = 2 * a;
        let fd = split.min(first);
        let spec = BlockSpec::new(fd, first - fd, 2 * b, 0);
        prop_assume!(spec.size() >= 2);
        let parts = block_partitions(&spec).unwrap();
        let double_factorial = |m: usize| (1..m).step_by(2).product::<usize>().max(1);
        prop_assert!(parts.len() >= double_factorial(first) * double_factorial(2 * b));
        let ground: Vec<u32> = (1..=spec.size() as u32).collect();
        prop_assert!(parts.contains(&EvenPartition::single_block(&ground)));
        for p in &parts {
            prop_assert!(p.partition().is_even());
            prop_assert!(is_admissible(p, first));
        }
    }

    #[test]
    fn comparison_p_values_are_probabilities(counts in prop::collection::vec(0u64..500, 2..8)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let probs = vec![1.0 / counts.len() as f64; counts.len()];
        let chi = chi_square(&counts, &probs, 5.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&chi.p_value));
        let r = ComparisonReport::new(None, Some(chi), vec![MomentError::new("m", 1.0, 1.0)], Tolerances::default());
        prop_assert_eq!(r.passed, r.chi_square.as_ref().unwrap().p_value > 0.01);
    }
}

#[test]
fn ks_of_samples_from_the_reference_cdf_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // Exponential samples by inversion against the exponential CDF.
    let xs: Vec<f64> = (0..100_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let d = ks_distance(&xs, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() }).unwrap();
    assert!(d < 0.01, "{d}");
}

#[test]
fn magnetization_law_matches_direct_spin_sampling() {
    let n = 10usize;
    let p = ModelParams::critical(n, -0.5).unwrap();
    let d = p.d_n();
    // Weight of every spin configuration from the pair sum directly.
    let weights: Vec<f64> = (0u32..1 << n)
        .map(|cfg| {
            let s: Vec<f64> = (0..n).map(|i| if cfg >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let mut e = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    e += s[i] * s[j];
                }
            }
            (d * e).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0u64; n + 1];
    for _ in 0..1_000_000 {
        let u: f64 = rng.random();
        let cfg = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        counts[(cfg as u32).count_ones() as usize] += 1;
    }
    let pmf = magnetization_pmf(&p);
    let probs: Vec<f64> = pmf.iter().map(|x| x.1).collect();
    assert_eq!(pmf.first().unwrap().0, -(n as i64));
    let r = chi_square(&counts, &probs, 5.0).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn chains_keep_their_sources() {
    let p = ModelParams::critical(30, 0.5).unwrap();
    let s = SourceSet::new(vec![3, 8, 11, 29]).unwrap();
    for seed in [1u64, 17, 4242] {
        let mut c = ChainState::new(&p, &s, seed, MoveMix::default()).unwrap();
        for _ in 0..1_000_000 {
            c.step();
        }
        assert_eq!(c.current().source_set(), s, "seed {seed}");
    }
}

#[test]
fn cluster_size_tail_is_gaussian() {
    let law = LimitLaw::new(1, 0.0, MeasureKind::Single, None, QuadratureSpec::default()).unwrap();
    let ts: Vec<f64> = (0..8).map(|i| 1.5 + 0.25 * i as f64).collect();
    let logs: Vec<f64> = ts.iter().map(|&t| (1.0 - law.source_cluster_cdf(1, t).unwrap()).ln()).collect();
    // Least-squares slope of ln P[Y > t] against t^2.
    let xs: Vec<f64> = ts.iter().map(|t| t * t).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = logs.iter().sum::<f64>() / logs.len() as f64;
    let slope = xs.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope < -0.05, "slope {slope}, logs {logs:?}");
    for (x, y) in xs.iter().zip(&logs) {
        assert!(*y <= my + slope * (x - mx) + 1.0, "tail above the fitted Gaussian envelope at t^2 = {x}");
    }
}

#[test]
fn halving_quadrature_tolerances_is_stable() {
    let spec = QuadratureSpec::default();
    let coarse = LimitLaw::new(2, 0.5, MeasureKind::Double, None, spec).unwrap();
    let fine = LimitLaw::new(2, 0.5, MeasureKind::Double, None, spec.halved()).unwrap();
    let p = EvenPartition::new(vec![vec![1, 2], vec![3, 4]]).unwrap();
    for bounds in [[(0.0, 0.5), (0.2, 1.0)], [(0.0, 1.5), (1.0, f64::INFINITY)], [(0.3, 0.4), (0.0, f64::INFINITY)]] {
        let a = coarse.probability(&p, &bounds).unwrap();
        let b = fine.probability(&p, &bounds).unwrap();
        let tol = spec.abs_tol.max(spec.rel_tol * a.value.abs());
        assert!((a.value - b.value).abs() < tol, "{bounds:?}: {} vs {}", a.value, b.value);
    }
}
