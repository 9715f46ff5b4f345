//! Backbone enumeration against brute-force labelled generation, exhaustive
//! colourings, the configuration-model series and the closed-form total mass.

use std::collections::BTreeMap;

use rcurrent_core::backbone::{automorphism_count, enumerate_all, BackboneGraph};
use rcurrent_core::exact::MeasureKind;
use rcurrent_core::limit::k_s;
use rcurrent_core::limit_law::LimitLaw;
use rcurrent_core::quad::QuadratureSpec;
use rcurrent_core::series::BackboneSeries;

/// Every symmetric multiplicity matrix with the backbone degrees, as edge lists.
fn labelled_multigraphs(k: usize, v: usize) -> Vec<Vec<(u32, u32)>> {
    let pairs: Vec<(usize, usize)> = (0..v).flat_map(|a| (a..v).map(move |b| (a, b))).collect();
    let want: Vec<usize> = (0..v).map(|u| if u < 2 * k { 1 } else { 4 }).collect();
    let mut out = Vec::new();
    let mut deg = vec![0usize; v];
    let mut mult = vec![0usize; pairs.len()];
    fn rec(
        i: usize,
        pairs: &[(usize, usize)],
        want: &[usize],
        deg: &mut Vec<usize>,
        mult: &mut Vec<usize>,
        out: &mut Vec<Vec<(u32, u32)>>,
    ) {
        if i == pairs.len() {
            if deg == want {
                let mut e = Vec::new();
                for (p, &m) in pairs.iter().zip(mult.iter()) {
                    for _ in 0..m {
                        e.push((p.0 as u32 + 1, p.1 as u32 + 1));
                    }
                }
                out.push(e);
            }
            return;
        }
        let (a, b) = pairs[i];
        // Once every pair touching `a` is assigned its degree must be complete.
        let step = if a == b { 2 } else { 1 };
        let mut m = 0;
        loop {
            if deg[a] + step * m > want[a] || (a != b && deg[b] + m > want[b]) {
                break;
            }
            deg[a] += step * m;
            if a != b {
                deg[b] += m;
            }
            mult[i] = m;
            let last_for_a = pairs.get(i + 1).map_or(true, |p| p.0 != a);
            if !last_for_a || deg[a] == want[a] {
                rec(i + 1, pairs, want, deg, mult, out);
            }
            deg[a] -= step * m;
            if a != b {
                deg[b] -= m;
            }
            m += 1;
        }
        mult[i] = 0;
    }
    rec(0, &pairs, &want, &mut deg, &mut mult, &mut out);
    out
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

#[test]
fn brute_force_labelled_classes_k1() {
    for v in 2..=4 {
        let mut buckets: BTreeMap<String, u64> = BTreeMap::new();
        for edges in labelled_multigraphs(1, v) {
            // Graphs with a sourceless component are not backbones.
            if let Ok(g) = BackboneGraph::from_edges(1, v, &edges) {
                *buckets.entry(g.canonical_string()).or_insert(0) += 1;
            }
        }
        let enumerated: Vec<BackboneGraph> = enumerate_all(1, v).unwrap().into_iter().filter(|g| g.v() == v).collect();
        assert_eq!(enumerated.len(), buckets.len(), "v={v}");
        for g in &enumerated {
            let labelled = buckets[&g.canonical_string()];
            assert_eq!(labelled * g.automorphism_count(), factorial(v - 2), "{g}");
        }
    }
}

fn exhaustive_colourings(g: &BackboneGraph) -> u64 {
    let s = 2 * g.k() as u32;
    let mut instances = Vec::new();
    for &(u, w, m) in g.edges() {
        for _ in 0..m {
            instances.push((u, w));
        }
    }
    let mut count = 0;
    for mask in 0u32..(1 << instances.len()) {
        let red = |i: usize| mask >> i & 1 == 1;
        let sources_red = instances.iter().enumerate().all(|(i, &(u, w))| red(i) || (u > s && w > s));
        if !sources_red {
            continue;
        }
        let mut red_deg = vec![0u32; g.v() + 1];
        for (i, &(u, w)) in instances.iter().enumerate() {
            if red(i) {
                red_deg[u as usize] += 1;
                red_deg[w as usize] += 1;
            }
        }
        if (s + 1..=g.v() as u32).all(|x| red_deg[x as usize] % 2 == 0) {
            count += 1;
        }
    }
    count
}

#[test]
fn colouring_counts_match_exhaustive_enumeration() {
    let mut checked = 0;
    for k in 1..=2 {
        for g in enumerate_all(k, 2 * k + 4).unwrap() {
            if g.edge_count() > 10 {
                continue;
            }
            assert_eq!(g.coloring_count(), exhaustive_colourings(&g), "{g}");
            assert!(g.coloring_count().is_power_of_two());
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn invariants_of_enumerated_graphs() {
    for k in 1..=2 {
        for g in enumerate_all(k, 2 * k + 4).unwrap() {
            assert_eq!(2 * g.edge_count(), 2 * k + 4 * g.internal_vertices(), "{g}");
            assert_eq!(g.automorphism_count(), automorphism_count(&g), "{g}");
            assert_eq!(g.l_per_component().iter().sum::<usize>(), g.edge_count());
            let back = BackboneGraph::parse(&g.canonical_string()).unwrap();
            assert_eq!(back, g);
        }
    }
}

#[test]
fn series_weights_match_enumeration() {
    for kind in [MeasureKind::Single, MeasureKind::Double] {
        for k in 1..=2usize {
            let j_max = 5;
            let series = BackboneSeries::new(k, j_max, kind);
            let mut groups: BTreeMap<(String, Vec<usize>), f64> = BTreeMap::new();
            for g in enumerate_all(k, 2 * k + j_max).unwrap() {
                let js: Vec<usize> =
                    g.component_partition().blocks().iter().zip(g.l_per_component()).map(|(b, &l)| (l - b.len() / 2) / 2).collect();
                let w = match kind {
                    MeasureKind::Single => g.single_prefactor(),
                    MeasureKind::Double => g.double_prefactor(),
                };
                *groups.entry((g.component_partition().to_string(), js)).or_insert(0.0) += w;
            }
            for ((p, js), w) in groups {
                let sizes: Vec<usize> = p.split('|').map(str::len).collect();
                let ln_s: f64 = sizes.iter().zip(&js).map(|(&b, &j)| series.ln_weight(b, j)).sum();
                assert!((ln_s.exp() / w - 1.0).abs() < 1e-12, "{kind:?} {p} {js:?}");
            }
        }
    }
}

/// The normalising single-current mass is the closed-form constant of the
/// sourced partition function.
#[test]
fn total_single_mass_is_partition_constant() {
    for k in 1..=2 {
        for lambda in [-1.0, 0.0, 1.0] {
            let law = LimitLaw::with_shell_tolerance(k, lambda, MeasureKind::Single, None, 1e-12, QuadratureSpec::default()).unwrap();
            let expect = k_s(lambda, 1.0 / 12.0, k).unwrap();
            assert!((law.total_mass() / expect - 1.0).abs() < 1e-8, "k={k} lambda={lambda}: {} vs {expect}", law.total_mass());
        }
    }
}

#[test]
fn enumeration_matches_golden_file() {
    let golden = include_str!("fixtures/backbone_k2_v6.txt");
    let render = || -> String {
        enumerate_all(2, 6)
            .unwrap()
            .iter()
            .map(|g| format!("{} {} {}\n", g.canonical_string(), g.automorphism_count(), g.coloring_count()))
            .collect()
    };
    let first = render();
    assert_eq!(first, render());
    assert_eq!(first, golden);
}
