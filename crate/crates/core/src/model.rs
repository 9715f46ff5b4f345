//! Model parameters, currents on the complete graph, source sets, partitions
//! and cluster statistics.

use std::collections::BTreeMap;
use std::fmt;

use petgraph::unionfind::UnionFind;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Coupling at which the rescaled magnetisation has density `exp(-s^4/12)`.
pub const CRITICAL_G: f64 = 1.0 / 12.0;

/// Parameters of the near-critical Curie-Weiss model on `K_n`.
///
/// The edge parameter is `d_n = (1 - lambda/sqrt(n))/n`; the quartic coupling `g`
/// only enters through the rescaling `g_tilde = (12 g)^{1/4}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n: usize,
    lambda: f64,
    g: f64,
    a: f64,
    g_tilde: f64,
    d_n: f64,
    c_n: f64,
}

impl ModelParams {
    pub fn new(n: usize, lambda: f64, g: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("n must be at least 2, got {n}")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParams("lambda must be finite".into()));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidParams(format!("g must be positive, got {g}")));
        }
        let sqrt_n = (n as f64).sqrt();
        if lambda >= sqrt_n {
            return Err(Error::InvalidParams(format!(
                "lambda = {lambda} must be below sqrt(n) = {sqrt_n}"
            )));
        }
        let g_tilde = (12.0 * g).powf(0.25);
        Ok(Self {
            n,
            lambda,
            g,
            a: lambda * g_tilde * g_tilde / 2.0,
            g_tilde,
            d_n: (1.0 - lambda / sqrt_n) / n as f64,
            c_n: (n as f64).powf(-0.75) / g_tilde,
        })
    }

    /// Parameters at `g = 1/12`, where `g_tilde = 1`.
    pub fn critical(n: usize, lambda: f64) -> Result<Self> {
        Self::new(n, lambda, CRITICAL_G)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn g(&self) -> f64 {
        self.g
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn g_tilde(&self) -> f64 {
        self.g_tilde
    }
    pub fn d_n(&self) -> f64 {
        self.d_n
    }
    pub fn c_n(&self) -> f64 {
        self.c_n
    }
    /// `(c_n n)^2 = sqrt(n)/g_tilde^2`, the natural scale of the number of active vertices.
    pub fn active_scale(&self) -> f64 {
        let s = self.c_n * self.n as f64;
        s * s
    }
}

/// The value of `lambda` for which `a(lambda) = a` at coupling `g`.
pub fn lambda_from_a(g: f64, a: f64) -> f64 {
    2.0 * a / (12.0 * g).sqrt()
}

/// Unordered pair `{i, j}` with `i < j`, vertices 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge(u32, u32);

impl Edge {
    pub fn new(i: u32, j: u32) -> Result<Self> {
        if i == j {
            return Err(Error::Invalid(format!("self-loop {{{i},{i}}} is not an edge of K_n")));
        }
        Ok(if i < j { Edge(i, j) } else { Edge(j, i) })
    }
    pub fn lo(&self) -> u32 {
        self.0
    }
    pub fn hi(&self) -> u32 {
        self.1
    }
}

/// Vertices of odd degree. Always of even cardinality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct SourceSet(Vec<u32>);

impl SourceSet {
    pub fn new(mut vertices: Vec<u32>) -> Result<Self> {
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.len() % 2 != 0 {
            return Err(Error::OddSourceSet(vertices.len()));
        }
        if vertices.first() == Some(&0) {
            return Err(Error::Invalid("vertices are 1-based".into()));
        }
        Ok(Self(vertices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// `{1, ..., 2k}`.
    pub fn first(k: usize) -> Self {
        Self((1..=2 * k as u32).collect())
    }

    pub fn vertices(&self) -> &[u32] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn contains(&self, v: u32) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn symmetric_difference(&self, other: &SourceSet) -> SourceSet {
        let mut out: Vec<u32> = self.0.iter().filter(|v| !other.contains(**v)).copied().collect();
        out.extend(other.0.iter().filter(|v| !self.contains(**v)));
        out.sort_unstable();
        SourceSet(out)
    }

    pub fn union(&self, other: &SourceSet) -> SourceSet {
        let mut out = self.0.clone();
        out.extend_from_slice(&other.0);
        out.sort_unstable();
        out.dedup();
        SourceSet(out)
    }

    fn check_range(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&v) if v as usize > n => Err(Error::VertexOutOfRange { vertex: v, n }),
            _ => Ok(()),
        }
    }
}

/// A set partition of a finite ground set, blocks sorted and ordered by their
/// smallest element. Blocks may have odd size (see [`Partition::is_even`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Vec<u32>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<u32>>) -> Result<Self> {
        let mut blocks: Vec<Vec<u32>> = blocks.into_iter().filter(|b| !b.is_empty()).collect();
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort();
        let mut all: Vec<u32> = blocks.iter().flatten().copied().collect();
        let len = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != len {
            return Err(Error::Invalid("partition blocks overlap".into()));
        }
        Ok(Self { blocks })
    }

    /// Partition of `0..labels.len()` mapped through `ground` according to block labels.
    pub(crate) fn from_labels(ground: &[u32], labels: &[u8]) -> Self {
        let mut map: BTreeMap<u8, Vec<u32>> = BTreeMap::new();
        for (v, &l) in ground.iter().zip(labels) {
            map.entry(l).or_default().push(*v);
        }
        let mut blocks: Vec<Vec<u32>> = map.into_values().collect();
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort();
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.blocks
    }

    pub fn ground(&self) -> Vec<u32> {
        let mut g: Vec<u32> = self.blocks.iter().flatten().copied().collect();
        g.sort_unstable();
        g
    }

    pub fn is_even(&self) -> bool {
        self.blocks.iter().all(|b| b.len() % 2 == 0)
    }

    /// Block sizes in decreasing order.
    pub fn shape(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.blocks.iter().map(Vec::len).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    pub fn block_of(&self, v: u32) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&v))
    }

    /// Canonical string such as `12|34`; labels are comma-separated when any exceeds 9.
    pub fn canonical_string(&self) -> String {
        let wide = self.blocks.iter().flatten().any(|&v| v > 9);
        self.blocks
            .iter()
            .map(|b| {
                let parts: Vec<String> = b.iter().map(u32::to_string).collect();
                parts.join(if wide { "," } else { "" })
            })
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let wide = s.contains(',');
        let blocks = s
            .split('|')
            .map(|b| {
                if wide {
                    b.split(',')
                        .map(|t| t.trim().parse::<u32>().map_err(|e| Error::Invalid(e.to_string())))
                        .collect::<Result<Vec<u32>>>()
                } else {
                    b.chars()
                        .map(|c| {
                            c.to_digit(10).ok_or_else(|| Error::Invalid(format!("bad label {c:?}")))
                        })
                        .collect()
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

/// A partition whose blocks all have even size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvenPartition(Partition);

impl EvenPartition {
    pub fn new(blocks: Vec<Vec<u32>>) -> Result<Self> {
        Partition::new(blocks)?.try_into()
    }

    /// The single-block partition (everybody connected together).
    pub fn single_block(ground: &[u32]) -> Self {
        EvenPartition(Partition { blocks: vec![ground.to_vec()] }).normalized()
    }

    fn normalized(mut self) -> Self {
        for b in &mut self.0.blocks {
            b.sort_unstable();
        }
        self.0.blocks.retain(|b| !b.is_empty());
        self.0.blocks.sort();
        self
    }

    pub fn partition(&self) -> &Partition {
        &self.0
    }
    pub fn blocks(&self) -> &[Vec<u32>] {
        self.0.blocks()
    }
    pub fn is_single_block(&self) -> bool {
        self.0.blocks.len() <= 1
    }

    /// All even partitions of `ground` in a deterministic order.
    pub fn enumerate(ground: &[u32]) -> Vec<EvenPartition> {
        let mut out = Vec::new();
        if ground.len() % 2 != 0 {
            return out;
        }
        let mut labels = vec![0u8; ground.len()];
        set_partitions(ground.len(), 0, 0, &mut labels, &mut |labels| {
            let p = Partition::from_labels(ground, labels);
            if p.is_even() {
                out.push(EvenPartition(p));
            }
        });
        out.sort();
        out
    }

    /// All pairings (perfect matchings) of `ground`.
    pub fn pairings(ground: &[u32]) -> Vec<EvenPartition> {
        Self::enumerate(ground).into_iter().filter(|p| p.blocks().iter().all(|b| b.len() == 2)).collect()
    }
}

impl TryFrom<Partition> for EvenPartition {
    type Error = Error;
    fn try_from(p: Partition) -> Result<Self> {
        if p.is_even() {
            Ok(EvenPartition(p))
        } else {
            Err(Error::Invalid(format!("partition {p} has an odd block")))
        }
    }
}

impl fmt::Display for EvenPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Restricted-growth enumeration of set partitions of `0..len`.
pub(crate) fn set_partitions(
    len: usize,
    pos: usize,
    used: u8,
    labels: &mut [u8],
    visit: &mut dyn FnMut(&[u8]),
) {
    if pos == len {
        visit(labels);
        return;
    }
    for l in 0..=used {
        labels[pos] = l;
        let next = if l == used { used + 1 } else { used };
        set_partitions(len, pos + 1, next, labels, visit);
    }
}

/// A current on `K_n`: nonnegative integer multiplicities on unordered pairs.
/// Zero multiplicities are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Current {
    n: usize,
    edges: BTreeMap<Edge, u32>,
}

impl Current {
    pub fn zero(n: usize) -> Self {
        Self { n, edges: BTreeMap::new() }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32, u32)>) -> Result<Self> {
        let mut c = Self::zero(n);
        for (i, j, m) in edges {
            let e = c.edge(i, j)?;
            *c.edges.entry(e).or_insert(0) += m;
        }
        c.edges.retain(|_, m| *m > 0);
        Ok(c)
    }

    fn edge(&self, i: u32, j: u32) -> Result<Edge> {
        for v in [i, j] {
            if v == 0 || v as usize > self.n {
                return Err(Error::VertexOutOfRange { vertex: v, n: self.n });
            }
        }
        Edge::new(i, j)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: u32, j: u32) -> u32 {
        Edge::new(i, j).ok().and_then(|e| self.edges.get(&e).copied()).unwrap_or(0)
    }

    pub fn set(&mut self, i: u32, j: u32, m: u32) -> Result<()> {
        let e = self.edge(i, j)?;
        if m == 0 {
            self.edges.remove(&e);
        } else {
            self.edges.insert(e, m);
        }
        Ok(())
    }

    /// Occupied edges in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (Edge, u32)> + '_ {
        self.edges.iter().map(|(e, m)| (*e, *m))
    }

    pub fn occupied_edges(&self) -> usize {
        self.edges.len()
    }

    /// Total incident multiplicity of `v`.
    pub fn degree(&self, v: u32) -> u32 {
        self.edges.iter().filter(|(e, _)| e.0 == v || e.1 == v).map(|(_, m)| m).sum()
    }

    pub fn source_set(&self) -> SourceSet {
        let mut parity: BTreeMap<u32, u32> = BTreeMap::new();
        for (e, m) in &self.edges {
            *parity.entry(e.0).or_insert(0) += m;
            *parity.entry(e.1).or_insert(0) += m;
        }
        SourceSet(parity.into_iter().filter(|(_, d)| d % 2 == 1).map(|(v, _)| v).collect())
    }

    /// `sum_e [n_e ln d - ln n_e!]`.
    pub fn log_weight(&self, params: &ModelParams) -> f64 {
        let ln_d = params.d_n().ln();
        self.edges.values().map(|&m| m as f64 * ln_d - ln_factorial(m as u64)).sum()
    }

    pub fn add(&self, other: &Current) -> Result<Current> {
        if self.n != other.n {
            return Err(Error::Invalid(format!("vertex counts differ: {} vs {}", self.n, other.n)));
        }
        let mut out = self.clone();
        for (e, m) in &other.edges {
            *out.edges.entry(*e).or_insert(0) += m;
        }
        Ok(out)
    }

    pub fn cluster_report(&self, sources: &SourceSet) -> Result<ClusterReport> {
        sources.check_range(self.n)?;
        Ok(ClusterReport::from_edges(self.n, self.edges.iter().map(|(e, m)| (e.0, e.1, *m)), sources))
    }

    /// Line format: header `n k` (k = number of occupied edges), then `i j m` sorted.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges.len());
        for (e, m) in &self.edges {
            s.push_str(&format!("{} {} {}\n", e.0, e.1, m));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "missing header"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(hl, "header must be `n k`")))
            .collect::<Result<_>>()?;
        if head.len() != 2 {
            return Err(parse_err(hl, "header must be `n k`"));
        }
        let mut c = Current::zero(head[0]);
        let mut count = 0;
        for (ln, line) in lines {
            let f: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(ln, "expected `i j m`")))
                .collect::<Result<_>>()?;
            if f.len() != 3 || f[2] == 0 {
                return Err(parse_err(ln, "expected `i j m` with m >= 1"));
            }
            let e = c.edge(f[0], f[1]).map_err(|e| parse_err(ln, &e.to_string()))?;
            if c.edges.insert(e, f[2]).is_some() {
                return Err(parse_err(ln, "duplicate edge"));
            }
            count += 1;
        }
        if count != head[1] {
            return Err(parse_err(hl, "edge count does not match header"));
        }
        Ok(c)
    }
}

/// Connectivity and degree statistics of a current relative to a source set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Cluster cardinality of each source, in source order.
    pub sizes: Vec<usize>,
    /// Sources grouped by cluster. Even whenever the sources of the current are the given set.
    pub partition: Partition,
    /// Vertices of positive degree.
    pub n_active: usize,
    /// Pairs with multiplicity at least 1.
    pub n_open_edges: usize,
    /// `degree_histogram[d]` counts active vertices of degree `d`.
    pub degree_histogram: Vec<usize>,
    /// Edges with multiplicity at least 1, 2 and 3.
    pub multiplicity_counts: [usize; 3],
    /// Edges with odd multiplicity.
    pub odd_edges: usize,
    /// Degree of each source, in source order.
    pub source_degrees: Vec<u32>,
    /// Edges of multiplicity at least 2 inside source clusters.
    pub source_cluster_multi_edges: usize,
}

impl ClusterReport {
    pub fn from_edges(
        n: usize,
        edges: impl Iterator<Item = (u32, u32, u32)>,
        sources: &SourceSet,
    ) -> ClusterReport {
        let edges: Vec<(u32, u32, u32)> = edges.filter(|e| e.2 > 0).collect();
        let mut index: FxHashMap<u32, usize> = FxHashMap::default();
        let mut degree: Vec<u32> = Vec::new();
        let local = |v: u32, index: &mut FxHashMap<u32, usize>, degree: &mut Vec<u32>| {
            *index.entry(v).or_insert_with(|| {
                degree.push(0);
                degree.len() - 1
            })
        };
        for &s in sources.vertices() {
            local(s, &mut index, &mut degree);
        }
        for &(i, j, m) in &edges {
            let a = local(i, &mut index, &mut degree);
            let b = local(j, &mut index, &mut degree);
            degree[a] += m;
            degree[b] += m;
        }
        let mut uf = UnionFind::<usize>::new(degree.len());
        for &(i, j, _) in &edges {
            uf.union(index[&i], index[&j]);
        }
        let mut comp_size: FxHashMap<usize, usize> = FxHashMap::default();
        for v in 0..degree.len() {
            *comp_size.entry(uf.find(v)).or_insert(0) += 1;
        }
        let src: Vec<usize> = sources.vertices().iter().map(|s| index[s]).collect();
        let sizes = src.iter().map(|&s| comp_size[&uf.find(s)]).collect();
        let roots: Vec<u8> = {
            let mut seen: Vec<usize> = Vec::new();
            src.iter()
                .map(|&s| {
                    let r = uf.find(s);
                    match seen.iter().position(|&x| x == r) {
                        Some(p) => p as u8,
                        None => {
                            seen.push(r);
                            (seen.len() - 1) as u8
                        }
                    }
                })
                .collect()
        };
        let partition = Partition::from_labels(sources.vertices(), &roots);
        let source_roots: Vec<usize> = src.iter().map(|&s| uf.find(s)).collect();

        let max_deg = degree.iter().copied().max().unwrap_or(0) as usize;
        let mut degree_histogram = vec![0usize; max_deg + 1];
        for &d in &degree {
            if d > 0 {
                degree_histogram[d as usize] += 1;
            }
        }
        let n_active = degree.iter().filter(|&&d| d > 0).count();
        let mut multiplicity_counts = [0usize; 3];
        let mut odd_edges = 0;
        let mut source_cluster_multi_edges = 0;
        for &(i, _, m) in &edges {
            for (t, c) in multiplicity_counts.iter_mut().enumerate() {
                if m as usize > t {
                    *c += 1;
                }
            }
            if m % 2 == 1 {
                odd_edges += 1;
            }
            if m >= 2 && source_roots.contains(&uf.find(index[&i])) {
                source_cluster_multi_edges += 1;
            }
        }
        debug_assert!(n_active <= n);
        ClusterReport {
            sizes,
            partition,
            n_active,
            n_open_edges: edges.len(),
            degree_histogram,
            multiplicity_counts,
            odd_edges,
            source_degrees: src.iter().map(|&s| degree[s]).collect(),
            source_cluster_multi_edges,
        }
    }

    /// Simple edges in source clusters, sources of degree 1, no vertex of degree
    /// five or more and at most `a` vertices of degree four.
    pub fn good_event(&self, a: usize) -> bool {
        self.source_cluster_multi_edges == 0
            && self.source_degrees.iter().all(|&d| d == 1)
            && self.degree_histogram.len() <= 5
            && self.degree_histogram.get(4).copied().unwrap_or(0) <= a
    }

    pub fn max_source_degree(&self) -> u32 {
        self.source_degrees.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn params_examples() {
        let p = ModelParams::critical(4, 0.0).unwrap();
        assert_relative_eq!(p.d_n(), 0.25);
        assert_relative_eq!(p.g_tilde(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.c_n(), 4f64.powf(-0.75), epsilon = 1e-15);
        assert_relative_eq!(p.c_n(), 0.35355339059327373, epsilon = 1e-15);

        assert!(ModelParams::critical(100, 10.0).is_err());
        assert!(ModelParams::new(10, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1, 0.0, 1.0).is_err());

        let p = ModelParams::new(10_000, -1.0, 1.0).unwrap();
        assert_relative_eq!(p.d_n(), 1.01e-4, max_relative = 1e-14);
        assert_relative_eq!(p.g_tilde(), 1.8612097182041991, max_relative = 1e-14);
        assert_relative_eq!(p.a(), -1.0 * 12f64.sqrt() / 2.0, max_relative = 1e-14);
        assert_relative_eq!(p.active_scale(), 100.0 / 12f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn lambda_a_round_trip() {
        let p = ModelParams::new(400, -2.5, 3.0).unwrap();
        assert_relative_eq!(lambda_from_a(3.0, p.a()), -2.5, max_relative = 1e-14);
    }

    #[test]
    fn sources_of_small_currents() {
        assert!(Current::zero(5).source_set().is_empty());
        let c = Current::from_edges(3, [(1, 2, 1)]).unwrap();
        assert_eq!(c.source_set().vertices(), &[1, 2]);
        // Degrees 1, 3, 3, 1: every vertex is odd.
        let c = Current::from_edges(4, [(1, 2, 1), (2, 3, 2), (3, 4, 1)]).unwrap();
        assert_eq!(c.source_set().vertices(), &[1, 2, 3, 4]);
        assert_eq!(c.degree(2), 3);
        let c = Current::from_edges(4, [(1, 2, 1), (2, 3, 1), (3, 4, 1)]).unwrap();
        assert_eq!(c.source_set().vertices(), &[1, 4]);
    }

    #[test]
    fn log_weight_examples() {
        assert_eq!(Current::zero(4).log_weight(&ModelParams::critical(4, 0.0).unwrap()), 0.0);
        let c = Current::from_edges(4, [(1, 2, 2)]).unwrap();
        assert_relative_eq!(
            c.log_weight(&ModelParams::critical(4, 0.0).unwrap()),
            (1.0f64 / 32.0).ln(),
            max_relative = 1e-14
        );
        let c = Current::from_edges(2, [(1, 2, 3)]).unwrap();
        assert_relative_eq!(
            c.log_weight(&ModelParams::critical(2, 0.0).unwrap()),
            (1.0f64 / 48.0).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn cluster_report_examples() {
        let s = SourceSet::new(vec![1, 2]).unwrap();
        let r = Current::zero(5).cluster_report(&s).unwrap();
        assert_eq!(r.sizes, vec![1, 1]);
        assert!(!r.partition.is_even());
        assert_eq!(r.partition.canonical_string(), "1|2");

        let r = Current::from_edges(5, [(1, 2, 1)]).unwrap().cluster_report(&s).unwrap();
        assert_eq!(r.sizes, vec![2, 2]);
        assert_eq!(r.partition.canonical_string(), "12");
        assert_eq!((r.n_active, r.n_open_edges), (2, 1));

        let c = Current::from_edges(5, [(1, 3, 1), (3, 2, 1), (4, 5, 2)]).unwrap();
        let r = c.cluster_report(&s).unwrap();
        assert_eq!(r.sizes, vec![3, 3]);
        assert_eq!(r.partition.canonical_string(), "12");
        assert_eq!((r.n_active, r.n_open_edges), (5, 3));
        assert_eq!(r.multiplicity_counts, [3, 1, 0]);
        assert_eq!(r.source_cluster_multi_edges, 0);
        assert!(r.good_event(0));
    }

    #[test]
    fn add_examples() {
        let c = Current::from_edges(4, [(1, 2, 1)]).unwrap();
        assert_eq!(c.add(&Current::zero(4)).unwrap(), c);
        let sum = c.add(&c).unwrap();
        assert_eq!(sum.get(1, 2), 2);
        assert!(sum.source_set().is_empty());
        let c2 = Current::from_edges(4, [(2, 3, 1)]).unwrap();
        assert_eq!(c.add(&c2).unwrap().source_set().vertices(), &[1, 3]);
    }

    #[test]
    fn text_round_trip() {
        let c = Current::from_edges(7, [(5, 2, 3), (1, 7, 1), (2, 3, 2)]).unwrap();
        let t = c.to_text();
        assert_eq!(t, "7 3\n1 7 1\n2 3 2\n2 5 3\n");
        assert_eq!(Current::from_text(&t).unwrap(), c);
        assert!(Current::from_text("3 1\n1 1 2\n").is_err());
        assert!(Current::from_text("3 2\n1 2 2\n").is_err());
    }

    #[test]
    fn even_partition_counts() {
        // Even partitions of a 2m-set: 1, 4, 31, 379 for m = 1..4.
        let counts: Vec<usize> =
            (1..=4).map(|m| EvenPartition::enumerate(&(1..=2 * m).collect::<Vec<u32>>()).len()).collect();
        assert_eq!(counts, vec![1, 4, 31, 379]);
        assert_eq!(EvenPartition::pairings(&[1, 2, 3, 4, 5, 6]).len(), 15);
        let p = EvenPartition::new(vec![vec![4, 3], vec![2, 1]]).unwrap();
        assert_eq!(p.to_string(), "12|34");
        assert_eq!(Partition::parse("12|34").unwrap(), *p.partition());
        assert!(EvenPartition::new(vec![vec![1], vec![2]]).is_err());
    }
}
