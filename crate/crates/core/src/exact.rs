//! Exact finite-n computations: magnetisation sector sums for the spin model
//! and exhaustive (dynamic-programming) summation over truncated currents.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::model::{EvenPartition, ModelParams, Partition, SourceSet};
use crate::numeric::{log_sum_exp, LogSum};

/// Largest vertex count accepted by the current enumerators.
pub const MAX_ENUM_N: usize = 7;
/// Largest per-edge multiplicity cap accepted by the current enumerators.
pub const MAX_ENUM_K: u32 = 12;
/// Default multiplicity cap for oracle runs.
pub const DEFAULT_K: u32 = 10;

/// Single current `P^S` or the sum of two independent currents `P^{S,∅}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Single,
    Double,
}

/// Per-edge multiplicity cap together with the excluded-mass bound it implies.
///
/// For a single current every edge is capped at `K`. For a pair `(n1, n2)` the cap
/// applies to `n1_e + n2_e`, which keeps the switching identity exact edge by edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub max_multiplicity: u32,
    /// Upper bound on the excluded mass divided by the untruncated total mass
    /// `exp(E t)` over all parities, `t = d` (single) or `2d` (double).
    pub relative_mass_bound: f64,
}

impl TruncationSpec {
    pub fn new(params: &ModelParams, max_multiplicity: u32, kind: MeasureKind) -> Result<Self> {
        if max_multiplicity < 1 {
            return Err(Error::InvalidParams("truncation K must be at least 1".into()));
        }
        Ok(Self {
            max_multiplicity,
            relative_mass_bound: truncation_bound_kind(params, max_multiplicity, kind),
        })
    }

    /// Bound on the excluded unnormalised mass: `relative_mass_bound * exp(E t)`.
    pub fn absolute_defect(&self, params: &ModelParams, kind: MeasureKind) -> f64 {
        let n = params.n() as f64;
        let e = n * (n - 1.0) / 2.0;
        self.relative_mass_bound * (e * edge_rate(params, kind)).exp()
    }
}

fn edge_rate(params: &ModelParams, kind: MeasureKind) -> f64 {
    match kind {
        MeasureKind::Single => params.d_n(),
        MeasureKind::Double => 2.0 * params.d_n(),
    }
}

/// Relative truncation bound for a single current:
/// `E d^{K+1}/(K+1)!` with `E = n(n-1)/2`.
///
/// The per-edge tail `sum_{j>K} d^j/j! <= d^{K+1} e^d/(K+1)!` times a union bound over
/// the `E` edges, with the other edges unconstrained, gives an excluded mass of at most
/// `E d^{K+1}/(K+1)! * exp(E d)`.
pub fn truncation_bound(params: &ModelParams, max_multiplicity: u32) -> f64 {
    truncation_bound_kind(params, max_multiplicity, MeasureKind::Single)
}

pub fn truncation_bound_kind(params: &ModelParams, max_multiplicity: u32, kind: MeasureKind) -> f64 {
    let n = params.n() as f64;
    let e = n * (n - 1.0) / 2.0;
    let t = edge_rate(params, kind);
    let k1 = max_multiplicity as u64 + 1;
    (e.ln() + k1 as f64 * t.ln() - ln_factorial(k1)).exp()
}

fn log_sector_weight(params: &ModelParams, m: i64) -> f64 {
    let n = params.n() as f64;
    0.5 * params.d_n() * ((m * m) as f64 - n)
}

/// `ln Z_n` for the spin partition function `sum_sigma exp(d sum_{i<j} sigma_i sigma_j)`,
/// summed over magnetisation sectors.
pub fn ising_log_partition(params: &ModelParams) -> f64 {
    let n = params.n() as u64;
    log_sum_exp((0..=n).map(|k| {
        let m = 2 * k as i64 - n as i64;
        ln_binomial(n, k) + log_sector_weight(params, m)
    }))
}

/// Exact law of the total magnetisation `M = sum sigma`, as `(M, P[M])` pairs sorted by `M`.
pub fn magnetization_pmf(params: &ModelParams) -> Vec<(i64, f64)> {
    let n = params.n() as u64;
    let logs: Vec<(i64, f64)> = (0..=n)
        .map(|k| {
            let m = 2 * k as i64 - n as i64;
            (m, ln_binomial(n, k) + log_sector_weight(params, m))
        })
        .collect();
    let z = log_sum_exp(logs.iter().map(|x| x.1));
    logs.into_iter().map(|(m, l)| (m, (l - z).exp())).collect()
}

/// `<sigma_1 ... sigma_p>` exactly, summing over the number of `+` spins among the `p`
/// marked vertices and among the other `n - p`.
pub fn exact_correlation(params: &ModelParams, p: usize) -> Result<f64> {
    let n = params.n();
    if p > n {
        return Err(Error::InvalidParams(format!("p = {p} exceeds n = {n}")));
    }
    if p % 2 == 1 {
        return Ok(0.0);
    }
    let (p64, rest) = (p as u64, (n - p) as u64);
    let mut pos = LogSum::default();
    let mut neg = LogSum::default();
    for j in 0..=p64 {
        for t in 0..=rest {
            let m = 2 * (j + t) as i64 - n as i64;
            let l = ln_binomial(p64, j) + ln_binomial(rest, t) + log_sector_weight(params, m);
            if (p64 - j) % 2 == 0 {
                pos.add(l);
            } else {
                neg.add(l);
            }
        }
    }
    let z = ising_log_partition(params);
    Ok((pos.ln() - z).exp() - (neg.ln() - z).exp())
}

/// One outcome `(cluster sizes of the sources, partition of the sources)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub sizes: Vec<usize>,
    pub partition: EvenPartition,
}

/// Exact law of the source clusters under a truncated current measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactLaw {
    pub params: ModelParams,
    pub kind: MeasureKind,
    pub sources: SourceSet,
    pub truncation: TruncationSpec,
    pub support: Vec<Outcome>,
    pub probabilities: Vec<f64>,
    /// Truncated partition function (of the pair, for the double measure).
    pub z_truncated: f64,
    /// Excluded mass bound divided by `z_truncated`; bounds the total-variation error.
    pub defect_bound: f64,
}

impl ExactLaw {
    /// Marginal law of the partition.
    pub fn partition_marginal(&self) -> BTreeMap<EvenPartition, f64> {
        let mut out = BTreeMap::new();
        for (o, p) in self.support.iter().zip(&self.probabilities) {
            *out.entry(o.partition.clone()).or_insert(0.0) += p;
        }
        out
    }

    /// JSON document `{params, truncation, support, probs, defect_bound}`.
    pub fn to_json(&self) -> serde_json::Value {
        let support: Vec<serde_json::Value> = self
            .support
            .iter()
            .map(|o| serde_json::json!({"sizes": o.sizes, "partition": o.partition.to_string()}))
            .collect();
        serde_json::json!({
            "params": {"n": self.params.n(), "lambda": self.params.lambda(), "d_n": self.params.d_n()},
            "kind": self.kind,
            "sources": self.sources.vertices(),
            "truncation": self.truncation,
            "support": support,
            "probs": self.probabilities,
            "z_truncated": self.z_truncated,
            "defect_bound": self.defect_bound,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct EdgeClass {
    flip1: bool,
    flip2: bool,
    open: bool,
    weight: f64,
}

/// Aggregated per-edge weights grouped by (parity of n1, parity of n2, occupied).
fn edge_classes(d: f64, k: u32, kind: MeasureKind) -> Vec<EdgeClass> {
    let term = |j: u32| (j as f64 * d.ln() - ln_factorial(j as u64)).exp();
    match kind {
        MeasureKind::Single => {
            let (mut even, mut odd) = (0.0, 0.0);
            for j in 1..=k {
                if j % 2 == 0 {
                    even += term(j);
                } else {
                    odd += term(j);
                }
            }
            vec![
                EdgeClass { flip1: false, flip2: false, open: false, weight: 1.0 },
                EdgeClass { flip1: false, flip2: false, open: true, weight: even },
                EdgeClass { flip1: true, flip2: false, open: true, weight: odd },
            ]
        }
        MeasureKind::Double => {
            // d^t binom(t, j)/t! = d^j/j! * d^{t-j}/(t-j)!
            let mut w = [[0.0f64; 2]; 2];
            for t in 1..=k {
                for j in 0..=t {
                    let l = t as f64 * d.ln() - ln_factorial(j as u64) - ln_factorial((t - j) as u64);
                    w[(j % 2) as usize][((t - j) % 2) as usize] += l.exp();
                }
            }
            vec![
                EdgeClass { flip1: false, flip2: false, open: false, weight: 1.0 },
                EdgeClass { flip1: false, flip2: false, open: true, weight: w[0][0] },
                EdgeClass { flip1: true, flip2: false, open: true, weight: w[1][0] },
                EdgeClass { flip1: false, flip2: true, open: true, weight: w[0][1] },
                EdgeClass { flip1: true, flip2: true, open: true, weight: w[1][1] },
            ]
        }
    }
}

const LABEL_SHIFT: u32 = 14;

fn label(key: u64, v: usize) -> u8 {
    ((key >> (LABEL_SHIFT + 3 * v as u32)) & 7) as u8
}

fn merge_key(key: u64, n: usize, a: usize, b: usize) -> u64 {
    let (la, lb) = (label(key, a), label(key, b));
    if la == lb {
        return key;
    }
    let (keep, drop) = if la < lb { (la, lb) } else { (lb, la) };
    let mut map = [u8::MAX; 8];
    let mut next = 0u8;
    let mut out = key & ((1u64 << LABEL_SHIFT) - 1);
    for v in 0..n {
        let mut l = label(key, v);
        if l == drop {
            l = keep;
        }
        if map[l as usize] == u8::MAX {
            map[l as usize] = next;
            next += 1;
        }
        out |= (map[l as usize] as u64) << (LABEL_SHIFT + 3 * v as u32);
    }
    out
}

/// Sum of weights of all truncated (pairs of) currents with prescribed source sets,
/// grouped by the induced partition of the vertex set into clusters.
///
/// Edges are processed in lexicographic order; the state records the parity of every
/// vertex in each current and the cluster partition. A vertex's parity is checked
/// against its target as soon as its last edge has been processed.
fn cluster_masses(
    n: usize,
    d: f64,
    k: u32,
    kind: MeasureKind,
    target1: &SourceSet,
    target2: &SourceSet,
) -> Vec<(Vec<u8>, f64)> {
    let mask = |s: &SourceSet| s.vertices().iter().fold(0u64, |m, v| m | 1 << (v - 1));
    let (t1, t2) = (mask(target1), mask(target2));
    let classes = edge_classes(d, k, kind);
    let mut init = 0u64;
    for v in 0..n {
        init |= (v as u64) << (LABEL_SHIFT + 3 * v as u32);
    }
    let mut states: Vec<(u64, f64)> = vec![(init, 1.0)];
    for a in 0..n {
        for b in a + 1..n {
            let mut next: FxHashMap<u64, f64> = FxHashMap::default();
            let finals: &[usize] = if b == n - 1 && a == n - 2 { &[a, b] } else if b == n - 1 { &[a] } else { &[] };
            for &(key, w) in &states {
                for c in &classes {
                    let mut nk = key;
                    if c.flip1 {
                        nk ^= (1 << a) | (1 << b);
                    }
                    if c.flip2 {
                        nk ^= (1 << (a + 7)) | (1 << (b + 7));
                    }
                    if finals.iter().any(|&v| ((nk >> v) & 1) != ((t1 >> v) & 1) || ((nk >> (v + 7)) & 1) != ((t2 >> v) & 1)) {
                        continue;
                    }
                    if c.open {
                        nk = merge_key(nk, n, a, b);
                    }
                    *next.entry(nk).or_insert(0.0) += w * c.weight;
                }
            }
            states = next.into_iter().collect();
            states.sort_unstable_by_key(|s| s.0);
        }
    }
    states.into_iter().map(|(key, w)| ((0..n).map(|v| label(key, v)).collect(), w)).collect()
}

fn check_enum_size(n: usize, k: u32, sources: &[&SourceSet]) -> Result<()> {
    if n > MAX_ENUM_N {
        return Err(Error::SizeLimit(format!("exact enumeration needs n <= {MAX_ENUM_N}, got {n}")));
    }
    if k > MAX_ENUM_K || k < 1 {
        return Err(Error::SizeLimit(format!("truncation K must lie in 1..={MAX_ENUM_K}, got {k}")));
    }
    for s in sources {
        if let Some(&v) = s.vertices().last() {
            if v as usize > n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
        }
    }
    Ok(())
}

fn outcome_of(labels: &[u8], marked: &SourceSet) -> Result<Outcome> {
    let sizes = marked
        .vertices()
        .iter()
        .map(|&s| {
            let l = labels[s as usize - 1];
            labels.iter().filter(|&&x| x == l).count()
        })
        .collect();
    let marked_labels: Vec<u8> = marked.vertices().iter().map(|&s| labels[s as usize - 1]).collect();
    let partition = EvenPartition::try_from(Partition::from_labels(marked.vertices(), &marked_labels))?;
    Ok(Outcome { sizes, partition })
}

/// Exact law of `(sizes, partition)` of the source clusters under the truncated measure
/// `P^S` (single) or `P^{S,∅}` (double, reporting on `n1 + n2`).
pub fn enumerate_current_law(
    params: &ModelParams,
    sources: &SourceSet,
    max_multiplicity: u32,
    kind: MeasureKind,
) -> Result<ExactLaw> {
    let n = params.n();
    check_enum_size(n, max_multiplicity, &[sources])?;
    let truncation = TruncationSpec::new(params, max_multiplicity, kind)?;
    let masses = cluster_masses(n, params.d_n(), max_multiplicity, kind, sources, &SourceSet::empty());
    let mut law: BTreeMap<Outcome, f64> = BTreeMap::new();
    for (labels, w) in &masses {
        *law.entry(outcome_of(labels, sources)?).or_insert(0.0) += w;
    }
    let z: f64 = law.values().sum();
    let defect_bound = truncation.absolute_defect(params, kind) / z;
    let (support, probabilities) = law.into_iter().map(|(o, w)| (o, w / z)).unzip();
    Ok(ExactLaw { params: *params, kind, sources: sources.clone(), truncation, support, probabilities, z_truncated: z, defect_bound })
}

/// Law of the partition of `S1 ⊔ S2` induced by `n1 + n2` with `∂n1 = S1`, `∂n2 = S2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanglingLaw {
    pub partitions: Vec<EvenPartition>,
    pub probabilities: Vec<f64>,
    /// Unnormalised truncated masses, same order as `partitions`.
    pub masses: Vec<f64>,
    pub z_truncated: f64,
    pub defect_bound: f64,
}

impl TanglingLaw {
    pub fn probability(&self, p: &EvenPartition) -> f64 {
        self.partitions.iter().position(|q| q == p).map_or(0.0, |i| self.probabilities[i])
    }
}

pub fn exact_rho_tilde(
    params: &ModelParams,
    s1: &SourceSet,
    s2: &SourceSet,
    max_multiplicity: u32,
) -> Result<TanglingLaw> {
    let n = params.n();
    check_enum_size(n, max_multiplicity, &[s1, s2])?;
    if s1.vertices().iter().any(|&v| s2.contains(v)) {
        return Err(Error::Invalid("S1 and S2 must be disjoint".into()));
    }
    let kind = MeasureKind::Double;
    let truncation = TruncationSpec::new(params, max_multiplicity, kind)?;
    let marked = s1.union(s2);
    let masses = cluster_masses(n, params.d_n(), max_multiplicity, kind, s1, s2);
    let mut law: BTreeMap<EvenPartition, f64> = BTreeMap::new();
    for (labels, w) in &masses {
        *law.entry(outcome_of(labels, &marked)?.partition).or_insert(0.0) += w;
    }
    let z: f64 = law.values().sum();
    let defect_bound = truncation.absolute_defect(params, kind) / z;
    let mut out = TanglingLaw { partitions: vec![], probabilities: vec![], masses: vec![], z_truncated: z, defect_bound };
    for (p, w) in law {
        out.partitions.push(p);
        out.probabilities.push(w / z);
        out.masses.push(w);
    }
    Ok(out)
}

/// Exact first two moments of the number of active vertices (positive degree)
/// under `P^S`, using `P[v inactive] = Z_{n-1}^{S}/Z_n^{S}` on the complete graph.
///
/// Removing `j` inactive non-source vertices leaves the model on `K_{n-j}` with the same
/// edge parameter, whose partition function is again a signed sector sum.
pub fn active_vertex_moments(params: &ModelParams, k: usize) -> Result<(f64, f64)> {
    let n = params.n();
    let p = 2 * k;
    if p + 2 > n {
        return Err(Error::InvalidParams("need n >= 2k + 2".into()));
    }
    let d = params.d_n();
    let log_zs = |m: usize| -> f64 { log_source_partition(m, d, p) };
    let z = log_zs(n);
    let inactive1 = (log_zs(n - 1) - z).exp();
    let inactive2 = (log_zs(n - 2) - z).exp();
    let free = (n - p) as f64;
    let mean_inactive = free * inactive1;
    let mean_pairs = free * (free - 1.0) * inactive2;
    // N_active = n - N_inactive; sources are always active.
    let mean = n as f64 - mean_inactive;
    let second_inactive = mean_inactive + mean_pairs;
    let second = (n * n) as f64 - 2.0 * n as f64 * mean_inactive + second_inactive;
    Ok((mean, second))
}

/// `ln Z_m^S` with `|S| = p` on `K_m` with edge parameter `d`:
/// `Z^S = 2^{-m} sum_sigma sigma_S exp(d sum_{i<j} sigma_i sigma_j)`.
fn log_source_partition(m: usize, d: f64, p: usize) -> f64 {
    let (p64, rest) = (p as u64, (m - p) as u64);
    let mut pos = LogSum::default();
    let mut neg = LogSum::default();
    for j in 0..=p64 {
        for t in 0..=rest {
            let mag = 2 * (j + t) as i64 - m as i64;
            let l = ln_binomial(p64, j) + ln_binomial(rest, t) + 0.5 * d * ((mag * mag) as f64 - m as f64);
            if (p64 - j) % 2 == 0 {
                pos.add(l);
            } else {
                neg.add(l);
            }
        }
    }
    let (lp, ln) = (pos.ln(), neg.ln());
    lp + (-(ln - lp).exp()).ln_1p() - m as f64 * std::f64::consts::LN_2
}

/// Exact mean number of occupied edges under `P^S`, from
/// `P[n_e = 0] = Z^S(K_n minus e)/Z^S(K_n)` summed over edge classes by source count.
pub fn mean_open_edges(params: &ModelParams, k: usize) -> Result<f64> {
    let n = params.n();
    let p = 2 * k;
    if p + 2 > n {
        return Err(Error::InvalidParams("need n >= 2k + 2".into()));
    }
    let d = params.d_n();
    let z = log_source_partition(n, d, p);
    // Edge classes by number of endpoints in S: 0, 1 or 2.
    let counts = [
        ((n - p) * (n - p - 1) / 2) as f64,
        (p * (n - p)) as f64,
        (p * p.saturating_sub(1) / 2) as f64,
    ];
    let mut mean = 0.0;
    for (c, &count) in counts.iter().enumerate() {
        if count == 0.0 {
            continue;
        }
        let closed = (log_removed_edge_partition(n, d, p, c) - z).exp();
        mean += count * (1.0 - closed);
    }
    Ok(mean)
}

/// `ln` of the source partition function with one edge `{x, y}` removed, where `c` of
/// `x, y` are sources. Spin sums run over `(sigma_x, sigma_y)`, the `+` count among the
/// other sources and among the remaining vertices.
fn log_removed_edge_partition(m: usize, d: f64, p: usize, c: usize) -> f64 {
    let others_src = (p - c) as u64;
    let rest = (m - p - (2 - c)) as u64;
    let mut pos = LogSum::default();
    let mut neg = LogSum::default();
    for sx in [-1i64, 1] {
        for sy in [-1i64, 1] {
            // Sign from the marked endpoints.
            let endpoint_sign = match c {
                0 => 1,
                1 => sx,
                _ => sx * sy,
            };
            for j in 0..=others_src {
                for t in 0..=rest {
                    let mag = sx + sy + 2 * (j + t) as i64 - (others_src + rest) as i64;
                    let energy = 0.5 * d * ((mag * mag) as f64 - m as f64) - d * (sx * sy) as f64;
                    let l = ln_binomial(others_src, j) + ln_binomial(rest, t) + energy;
                    let sign = endpoint_sign * if (others_src - j) % 2 == 0 { 1 } else { -1 };
                    if sign > 0 {
                        pos.add(l);
                    } else {
                        neg.add(l);
                    }
                }
            }
        }
    }
    let (lp, ln) = (pos.ln(), neg.ln());
    lp + (-(ln - lp).exp()).ln_1p() - m as f64 * std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(n: usize, lambda: f64) -> ModelParams {
        ModelParams::critical(n, lambda).unwrap()
    }

    #[test]
    fn partition_function_small_n() {
        let e = std::f64::consts::E;
        assert_relative_eq!(
            ising_log_partition(&params(2, 0.0)),
            (2.0 * e.sqrt() + 2.0 / e.sqrt()).ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            ising_log_partition(&params(3, 0.0)),
            (2.0 * e + 6.0 * (-1.0f64 / 3.0).exp()).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn pmf_examples() {
        let pmf = magnetization_pmf(&params(2, 0.0));
        let e = std::f64::consts::E;
        let z = 2.0 * e.sqrt() + 2.0 / e.sqrt();
        assert_eq!(pmf.len(), 3);
        assert_relative_eq!(pmf[0].1, e.sqrt() / z, max_relative = 1e-14);
        assert_relative_eq!(pmf[2].1, e.sqrt() / z, max_relative = 1e-14);
        let pmf = magnetization_pmf(&params(50, 0.7));
        for (a, b) in pmf.iter().zip(pmf.iter().rev()) {
            assert_eq!(a.0, -b.0);
            assert_relative_eq!(a.1, b.1, max_relative = 1e-12);
        }
        assert_relative_eq!(pmf.iter().map(|x| x.1).sum::<f64>(), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn correlation_examples() {
        assert_eq!(exact_correlation(&params(5, 0.0), 3).unwrap(), 0.0);
        assert_relative_eq!(exact_correlation(&params(2, 0.0), 2).unwrap(), 0.5f64.tanh(), max_relative = 1e-13);
        let e = std::f64::consts::E;
        let t = (-1.0f64 / 3.0).exp();
        assert_relative_eq!(
            exact_correlation(&params(3, 0.0), 2).unwrap(),
            (e - t) / (e + 3.0 * t),
            max_relative = 1e-13
        );
        assert_relative_eq!(exact_correlation(&params(3, 0.0), 2).unwrap(), 0.41121, max_relative = 1e-4);
        assert_eq!(exact_correlation(&params(9, 0.5), 0).unwrap(), 1.0);
    }

    #[test]
    fn truncation_bound_examples() {
        assert!(truncation_bound(&params(4, 0.0), 8) < 1e-8);
        let p = params(5, -1.0);
        let mut prev = f64::INFINITY;
        for k in 1..30 {
            let b = truncation_bound(&p, k);
            assert!(b <= prev);
            prev = b;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn two_vertex_law() {
        let p = params(2, 0.0);
        let s = SourceSet::new(vec![1, 2]).unwrap();
        let law = enumerate_current_law(&p, &s, 12, MeasureKind::Single).unwrap();
        assert_eq!(law.support.len(), 1);
        assert_eq!(law.support[0].sizes, vec![2, 2]);
        assert_relative_eq!(law.probabilities[0], 1.0);
        assert_relative_eq!(law.z_truncated, 0.5f64.sinh(), max_relative = 1e-12);
    }

    #[test]
    fn switching_point_mass() {
        let p = params(4, 0.3);
        let law = exact_rho_tilde(&p, &SourceSet::new(vec![1, 2]).unwrap(), &SourceSet::empty(), 6).unwrap();
        assert_eq!(law.partitions.len(), 1);
        assert_relative_eq!(law.probabilities[0], 1.0);
    }

    #[test]
    fn size_limits() {
        let s = SourceSet::empty();
        assert!(enumerate_current_law(&params(8, 0.0), &s, 4, MeasureKind::Single).is_err());
        assert!(enumerate_current_law(&params(4, 0.0), &s, 13, MeasureKind::Single).is_err());
        assert!(enumerate_current_law(&params(4, 0.0), &SourceSet::new(vec![1, 5]).unwrap(), 4, MeasureKind::Single).is_err());
    }

    #[test]
    fn source_partition_matches_correlation() {
        // Z^S/Z^∅ for the sector formula equals the spin correlation.
        let p = params(40, -0.8);
        let d = p.d_n();
        for k in 0..3 {
            let ratio = (log_source_partition(40, d, 2 * k) - log_source_partition(40, d, 0)).exp();
            assert_relative_eq!(ratio, exact_correlation(&p, 2 * k).unwrap(), max_relative = 1e-11);
        }
    }
}
