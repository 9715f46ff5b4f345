//! The dynamic-programming enumerator against a brute-force enumeration of
//! multiplicity vectors, plus identities between the spin and current pictures.

use std::collections::BTreeMap;

use approx::assert_relative_eq;
use rcurrent_core::exact::{
    active_vertex_moments, enumerate_current_law, exact_correlation, exact_rho_tilde, ising_log_partition,
    mean_open_edges, MeasureKind, Outcome,
};
use rcurrent_core::model::{Current, EvenPartition, ModelParams, SourceSet};

fn all_edges(n: u32) -> Vec<(u32, u32)> {
    let mut e = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            e.push((i, j));
        }
    }
    e
}

/// Visit every multiplicity vector in `{0..=k}^len`.
fn for_each_vector(len: usize, k: u32, f: &mut dyn FnMut(&[u32])) {
    let mut v = vec![0u32; len];
    loop {
        f(&v);
        let mut i = 0;
        while i < len && v[i] == k {
            v[i] = 0;
            i += 1;
        }
        if i == len {
            return;
        }
        v[i] += 1;
    }
}

fn brute_single(p: &ModelParams, s: &SourceSet, k: u32) -> (BTreeMap<Outcome, f64>, f64) {
    let n = p.n() as u32;
    let edges = all_edges(n);
    let mut law = BTreeMap::new();
    let mut z = 0.0;
    for_each_vector(edges.len(), k, &mut |m| {
        let c = Current::from_edges(n as usize, edges.iter().zip(m).map(|(e, &m)| (e.0, e.1, m))).unwrap();
        if c.source_set() != *s {
            return;
        }
        let w = c.log_weight(p).exp();
        let r = c.cluster_report(s).unwrap();
        let o = Outcome { sizes: r.sizes, partition: r.partition.try_into().unwrap() };
        *law.entry(o).or_insert(0.0) += w;
        z += w;
    });
    (law, z)
}

fn brute_double(p: &ModelParams, s1: &SourceSet, s2: &SourceSet, marked: &SourceSet, k: u32) -> (BTreeMap<Outcome, f64>, f64) {
    let n = p.n() as u32;
    let edges = all_edges(n);
    let mut law = BTreeMap::new();
    let mut z = 0.0;
    for_each_vector(edges.len(), k, &mut |m1| {
        let c1 = Current::from_edges(n as usize, edges.iter().zip(m1).map(|(e, &m)| (e.0, e.1, m))).unwrap();
        if c1.source_set() != *s1 {
            return;
        }
        for_each_vector(edges.len(), k, &mut |m2| {
            if m1.iter().zip(m2).any(|(a, b)| a + b > k) {
                return;
            }
            let c2 = Current::from_edges(n as usize, edges.iter().zip(m2).map(|(e, &m)| (e.0, e.1, m))).unwrap();
            if c2.source_set() != *s2 {
                return;
            }
            let w = (c1.log_weight(p) + c2.log_weight(p)).exp();
            let r = c1.add(&c2).unwrap().cluster_report(marked).unwrap();
            let o = Outcome { sizes: r.sizes, partition: r.partition.try_into().unwrap() };
            *law.entry(o).or_insert(0.0) += w;
            z += w;
        });
    });
    (law, z)
}

#[test]
fn dp_matches_brute_force_single() {
    for (n, k, lambda, src) in [(3usize, 7u32, 0.0, vec![1, 2]), (4, 3, -1.0, vec![1, 2, 3, 4]), (4, 4, 1.0, vec![2, 3]), (4, 3, 0.5, vec![])] {
        let p = ModelParams::critical(n, lambda).unwrap();
        let s = SourceSet::new(src).unwrap();
        let law = enumerate_current_law(&p, &s, k, MeasureKind::Single).unwrap();
        let (brute, z) = brute_single(&p, &s, k);
        assert_relative_eq!(law.z_truncated, z, max_relative = 1e-13);
        assert_eq!(law.support.len(), brute.len());
        for (o, prob) in law.support.iter().zip(&law.probabilities) {
            assert_relative_eq!(*prob, brute[o] / z, max_relative = 1e-12);
        }
    }
}

#[test]
fn dp_matches_brute_force_double() {
    for (n, k, lambda, src) in [(3usize, 5u32, 0.0, vec![1, 2]), (4, 2, -1.0, vec![1, 2, 3, 4]), (4, 2, 0.7, vec![1, 3])] {
        let p = ModelParams::critical(n, lambda).unwrap();
        let s = SourceSet::new(src).unwrap();
        let law = enumerate_current_law(&p, &s, k, MeasureKind::Double).unwrap();
        let (brute, z) = brute_double(&p, &s, &SourceSet::empty(), &s, k);
        assert_relative_eq!(law.z_truncated, z, max_relative = 1e-13);
        assert_eq!(law.support.len(), brute.len());
        for (o, prob) in law.support.iter().zip(&law.probabilities) {
            assert_relative_eq!(*prob, brute[o] / z, max_relative = 1e-12);
        }
    }
}

#[test]
fn rho_tilde_matches_brute_force() {
    let p = ModelParams::critical(4, -0.5).unwrap();
    let s1 = SourceSet::new(vec![1, 2]).unwrap();
    let s2 = SourceSet::new(vec![3, 4]).unwrap();
    let law = exact_rho_tilde(&p, &s1, &s2, 2).unwrap();
    let (brute, z) = brute_double(&p, &s1, &s2, &SourceSet::first(2), 2);
    let mut marginal: BTreeMap<EvenPartition, f64> = BTreeMap::new();
    for (o, w) in brute {
        *marginal.entry(o.partition).or_insert(0.0) += w / z;
    }
    assert_eq!(law.partitions.len(), 2);
    for (part, prob) in law.partitions.iter().zip(&law.probabilities) {
        assert_relative_eq!(*prob, marginal[part], max_relative = 1e-12);
    }
}

#[test]
fn truncated_vacuum_matches_sector_sum() {
    for n in 2..=5 {
        for lambda in [-1.0, 0.0, 1.0] {
            let p = ModelParams::critical(n, lambda).unwrap();
            let law = enumerate_current_law(&p, &SourceSet::empty(), 10, MeasureKind::Single).unwrap();
            let z = (ising_log_partition(&p) - n as f64 * std::f64::consts::LN_2).exp();
            let abs_defect = law.truncation.absolute_defect(&p, MeasureKind::Single);
            assert!(z - law.z_truncated >= -1e-12 * z);
            assert!(z - law.z_truncated <= 1e-10 * z + abs_defect, "n={n} lambda={lambda}");
        }
    }
}

#[test]
fn source_ratio_is_correlation() {
    for (n, src) in [(4usize, vec![1, 2]), (5, vec![1, 2, 3, 4]), (5, vec![2, 5])] {
        let p = ModelParams::critical(n, 0.4).unwrap();
        let s = SourceSet::new(src).unwrap();
        let with = enumerate_current_law(&p, &s, 10, MeasureKind::Single).unwrap();
        let without = enumerate_current_law(&p, &SourceSet::empty(), 10, MeasureKind::Single).unwrap();
        let ratio = with.z_truncated / (exact_correlation(&p, s.len()).unwrap() * without.z_truncated);
        assert!((ratio - 1.0).abs() <= 1e-10 + with.defect_bound + without.defect_bound);
    }
}

#[test]
fn log_partition_decreasing_in_lambda() {
    for n in [10usize, 100, 1000] {
        let mut prev = f64::INFINITY;
        let top = (n as f64).sqrt();
        for i in 0..=40 {
            let lambda = -4.0 + (top + 4.0) * i as f64 / 41.0;
            let l = ising_log_partition(&ModelParams::critical(n, lambda).unwrap());
            assert!(l < prev);
            prev = l;
        }
    }
}

/// Exact moments of the active-vertex count and the open-edge count against
/// brute-force sums on `K_4` with a high multiplicity cap.
#[test]
fn active_and_open_edge_moments_small_n() {
    let n = 4;
    let p = ModelParams::critical(n, 0.3).unwrap();
    for k in [0usize, 1] {
        let s = SourceSet::first(k);
        let edges = all_edges(n as u32);
        let (mut z, mut m1, mut m2, mut me) = (0.0, 0.0, 0.0, 0.0);
        for_each_vector(edges.len(), 8, &mut |m| {
            let c = Current::from_edges(n, edges.iter().zip(m).map(|(e, &m)| (e.0, e.1, m))).unwrap();
            if c.source_set() != s {
                return;
            }
            let w = c.log_weight(&p).exp();
            let r = c.cluster_report(&s).unwrap();
            z += w;
            m1 += w * r.n_active as f64;
            m2 += w * (r.n_active * r.n_active) as f64;
            me += w * r.n_open_edges as f64;
        });
        let (mean, second) = active_vertex_moments(&p, k).unwrap();
        assert_relative_eq!(mean, m1 / z, max_relative = 1e-8);
        assert_relative_eq!(second, m2 / z, max_relative = 1e-8);
        assert_relative_eq!(mean_open_edges(&p, k).unwrap(), me / z, max_relative = 1e-8);
    }
}

#[test]
fn largest_enumeration_is_feasible() {
    let p = ModelParams::critical(7, 0.0).unwrap();
    let law = enumerate_current_law(&p, &SourceSet::first(2), 6, MeasureKind::Double).unwrap();
    assert_relative_eq!(law.probabilities.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
}
