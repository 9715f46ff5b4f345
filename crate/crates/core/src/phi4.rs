//! Tangled currents on small graphs for the quartic single-site field: current weights,
//! admissible block partitions, tangling measures taken from the double-current
//! partition law, the switching identity, Wick's law for the Gaussian field and the
//! Ising-limit concentration of tanglings.

use std::collections::BTreeMap;
use std::rc::Rc;

use nalgebra::DMatrix;
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::MeasureKind;
use crate::limit::log_quartic_moment_integral;
use crate::limit_law::LimitLaw;
use crate::model::{lambda_from_a, EvenPartition};
use crate::numeric::{compensated_sum, LogSum};
use crate::quad::QuadratureSpec;

/// Largest vertex count of a [`FiniteGraph`].
pub const MAX_GRAPH_VERTICES: usize = 5;
/// Largest block handled by [`block_partitions`].
pub const MAX_BLOCK_PARTITION_SIZE: usize = 10;
/// Largest block handled by [`rho_block_measure`].
pub const MAX_RHO_BLOCK_SIZE: usize = 8;
/// Relative shell size used when building the partition laws behind tangling measures.
pub const RHO_SHELL_TOLERANCE: f64 = 1e-10;
/// Multiplicity cap used to approximate untruncated current sums.
const TAIL_CAP: u32 = 40;
/// Largest number of tanglings enumerated for one current pair.
const MAX_TANGLINGS_PER_PAIR: usize = 200_000;

/// Simple graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl FiniteGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 || n > MAX_GRAPH_VERTICES {
            return Err(Error::SizeLimit(format!("graph needs 1..={MAX_GRAPH_VERTICES} vertices, got {n}")));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for (x, y) in edges {
            if x >= n || y >= n {
                return Err(Error::Invalid(format!("edge ({x}, {y}) leaves 0..{n}")));
            }
            if x == y {
                return Err(Error::Invalid(format!("loop at {x}")));
            }
            let e = (x.min(y), x.max(y));
            if !seen.insert(e) {
                return Err(Error::Invalid(format!("repeated edge {e:?}")));
            }
            norm.push(e);
        }
        Ok(Self { n, edges: norm })
    }

    pub fn single_vertex() -> Self {
        Self { n: 1, edges: Vec::new() }
    }
    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)).collect())
    }
    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect())
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(x, y) in &self.edges {
            m[(x, y)] = 1.0;
            m[(y, x)] = 1.0;
        }
        m
    }

    /// Degree of every vertex under the edge multiplicities `current`.
    fn degrees(&self, current: &[u32]) -> Vec<u32> {
        let mut d = vec![0u32; self.n];
        for (&(x, y), &m) in self.edges.iter().zip(current) {
            d[x] += m;
            d[y] += m;
        }
        d
    }

    /// Every current with multiplicities at most `cap` whose odd-degree set is `odd`.
    fn currents(&self, odd: &[bool], cap: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.edges.len()];
        loop {
            if self.degrees(&cur).iter().zip(odd).all(|(d, &o)| (d % 2 == 1) == o) {
                out.push(cur.clone());
            }
            let mut i = 0;
            loop {
                if i == cur.len() {
                    return out;
                }
                if cur[i] < cap {
                    cur[i] += 1;
                    break;
                }
                cur[i] = 0;
                i += 1;
            }
        }
    }
}

/// Per-vertex moment orders with an even total.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentFunction(Vec<u32>);

impl MomentFunction {
    pub fn new(values: Vec<u32>) -> Result<Self> {
        if values.iter().sum::<u32>() % 2 != 0 {
            return Err(Error::Invalid(format!("moment function {values:?} has an odd total")));
        }
        Ok(Self(values))
    }
    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }
    pub fn values(&self) -> &[u32] {
        &self.0
    }
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
    /// Vertices with an odd order.
    pub fn odd_set(&self) -> Vec<bool> {
        self.0.iter().map(|a| a % 2 == 1).collect()
    }
    pub fn plus(&self, other: &MomentFunction) -> Result<MomentFunction> {
        if self.0.len() != other.0.len() {
            return Err(Error::Invalid("moment functions on different vertex sets".into()));
        }
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }
    fn check_graph(&self, graph: &FiniteGraph) -> Result<()> {
        if self.0.len() != graph.vertex_count() {
            return Err(Error::Invalid(format!("moment function has {} entries for {} vertices", self.0.len(), graph.vertex_count())));
        }
        Ok(())
    }
}

/// Parameters of the single-site density `exp(-g t^4 - a t^2)` and the coupling `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi4Params {
    pub g: f64,
    pub a: f64,
    pub beta: f64,
}

impl Phi4Params {
    pub fn new(g: f64, a: f64, beta: f64) -> Result<Self> {
        if !(g > 0.0) || !a.is_finite() || !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParams(format!("need g > 0, finite a and beta >= 0; got g={g}, a={a}, beta={beta}")));
        }
        Ok(Self { g, a, beta })
    }
    /// Near-critical parameter of the complete-graph approximation with the same single-site law.
    pub fn lambda(&self) -> f64 {
        lambda_from_a(self.g, self.a)
    }
}

/// `ln <phi^p>` for `p = 0..=p_max`; odd orders are `-inf`.
#[derive(Debug, Clone)]
struct LogMoments(Vec<f64>);

impl LogMoments {
    fn new(g: f64, a: f64, p_max: usize) -> Self {
        let spec = QuadratureSpec::default();
        let l0 = log_quartic_moment_integral(g, a, 0, &spec).0;
        Self(
            (0..=p_max)
                .map(|p| if p % 2 == 1 { f64::NEG_INFINITY } else { log_quartic_moment_integral(g, a, p, &spec).0 - l0 })
                .collect(),
        )
    }
    fn get(&self, p: u32) -> f64 {
        self.0[p as usize]
    }
}

fn ln_factorial(m: u32) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

fn log_weight_with(graph: &FiniteGraph, current: &[u32], moments: &MomentFunction, beta: f64, table: &LogMoments) -> f64 {
    let mut l = 0.0;
    for &m in current {
        if m > 0 {
            l += m as f64 * beta.ln() - ln_factorial(m);
        }
    }
    for (d, a) in graph.degrees(current).iter().zip(moments.values()) {
        l += table.get(d + a);
    }
    l
}

/// `ln` of `prod_e beta^{n_e}/n_e! prod_x <phi^{deg_x + A_x}>`; `-inf` when some order is odd.
pub fn phi4_log_weight(graph: &FiniteGraph, current: &[u32], moments: &MomentFunction, params: &Phi4Params) -> Result<f64> {
    moments.check_graph(graph)?;
    if current.len() != graph.edges().len() {
        return Err(Error::Invalid(format!("{} multiplicities for {} edges", current.len(), graph.edges().len())));
    }
    let p_max = graph.degrees(current).iter().zip(moments.values()).map(|(d, a)| d + a).max().unwrap_or(0);
    let table = LogMoments::new(params.g, params.a, p_max as usize);
    Ok(log_weight_with(graph, current, moments, params.beta, &table))
}

/// Sizes of a vertex block: edge points of the two currents plus the two moment orders.
/// Sub-block one consists of the first current's edge points and the first moment points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockSpec {
    pub first_degree: usize,
    pub first_moment: usize,
    pub second_degree: usize,
    pub second_moment: usize,
}

impl BlockSpec {
    pub fn new(first_degree: usize, first_moment: usize, second_degree: usize, second_moment: usize) -> Self {
        Self { first_degree, first_moment, second_degree, second_moment }
    }
    pub fn first_size(&self) -> usize {
        self.first_degree + self.first_moment
    }
    pub fn second_size(&self) -> usize {
        self.second_degree + self.second_moment
    }
    pub fn size(&self) -> usize {
        self.first_size() + self.second_size()
    }
    fn check(&self, cap: usize) -> Result<()> {
        if self.first_size() % 2 != 0 || self.second_size() % 2 != 0 {
            return Err(Error::Invalid(format!("sub-blocks of sizes {} and {} must both be even", self.first_size(), self.second_size())));
        }
        if self.size() > cap {
            return Err(Error::SizeLimit(format!("block of size {} exceeds {cap}", self.size())));
        }
        Ok(())
    }
}

/// Whether every class of `p` meets `1..=first` and the rest of the ground set evenly.
pub fn is_admissible(p: &EvenPartition, first: usize) -> bool {
    p.blocks().iter().all(|b| b.iter().filter(|&&v| v as usize <= first).count() % 2 == 0)
}

/// Admissible partitions of `1..=size`, the first `first_size` points forming sub-block one.
pub fn block_partitions(spec: &BlockSpec) -> Result<Vec<EvenPartition>> {
    spec.check(MAX_BLOCK_PARTITION_SIZE)?;
    let ground: Vec<u32> = (1..=spec.size() as u32).collect();
    let out: Vec<EvenPartition> =
        EvenPartition::enumerate(&ground).into_iter().filter(|p| is_admissible(p, spec.first_size())).collect();
    assert!(out.iter().all(|p| is_admissible(p, spec.first_size())));
    Ok(out)
}

/// Tangling law of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMeasure {
    pub spec: BlockSpec,
    pub lambda: f64,
    pub partitions: Vec<EvenPartition>,
    pub probabilities: Vec<f64>,
    /// Mass of the admissible partitions under the unconditioned double-current law.
    pub admissible_mass: f64,
}

impl BlockMeasure {
    /// Mass of the one-class partition.
    pub fn ect_probability(&self) -> f64 {
        self.partitions.iter().zip(&self.probabilities).filter(|(p, _)| p.blocks().len() == 1).map(|(_, &q)| q).sum()
    }

    /// Total-variation distance to the uniform law on admissible pairings.
    pub fn tv_to_uniform_pairings(&self) -> f64 {
        let pairings = self.partitions.iter().filter(|p| p.blocks().iter().all(|b| b.len() == 2)).count();
        let u = if pairings == 0 { 0.0 } else { 1.0 / pairings as f64 };
        0.5 * self
            .partitions
            .iter()
            .zip(&self.probabilities)
            .map(|(p, &q)| if p.blocks().iter().all(|b| b.len() == 2) { (q - u).abs() } else { q })
            .sum::<f64>()
    }

    fn labelled(&self) -> Vec<(Vec<u8>, f64)> {
        let s = self.spec.size();
        self.partitions
            .iter()
            .zip(&self.probabilities)
            .filter(|(_, &q)| q > 0.0)
            .map(|(p, &q)| {
                let mut labels = vec![0u8; s];
                for (i, b) in p.blocks().iter().enumerate() {
                    for &v in b {
                        labels[v as usize - 1] = i as u8;
                    }
                }
                (labels, q)
            })
            .collect()
    }
}

fn measure_from_law(spec: &BlockSpec, lambda: f64, law: Option<&LimitLaw>) -> Result<BlockMeasure> {
    let partitions = block_partitions(spec)?;
    if spec.size() <= 2 {
        let n = partitions.len();
        return Ok(BlockMeasure { spec: *spec, lambda, partitions, probabilities: vec![1.0; n], admissible_mass: 1.0 });
    }
    let law = law.expect("a partition law is needed for blocks of four or more points");
    let full = vec![(0.0, f64::INFINITY)];
    let raw: Vec<f64> = partitions
        .iter()
        .map(|p| law.probability(p, &full.repeat(p.blocks().len())).map(|e| e.value))
        .collect::<Result<_>>()?;
    let admissible_mass = compensated_sum(raw.iter().copied());
    let probabilities = raw.iter().map(|q| q / admissible_mass).collect();
    Ok(BlockMeasure { spec: *spec, lambda, partitions, probabilities, admissible_mass })
}

fn rho_law(k: usize, lambda: f64, quad: &QuadratureSpec) -> Result<LimitLaw> {
    LimitLaw::with_shell_tolerance(k, lambda, MeasureKind::Double, None, RHO_SHELL_TOLERANCE, *quad)
}

/// Tangling law of a block: the double-current partition law on `first + second` sources,
/// restricted to admissible partitions and renormalised.
pub fn rho_block_measure(spec: &BlockSpec, lambda: f64, quad: &QuadratureSpec) -> Result<BlockMeasure> {
    spec.check(MAX_RHO_BLOCK_SIZE)?;
    if !lambda.is_finite() {
        return Err(Error::InvalidParams(format!("lambda must be finite, got {lambda}")));
    }
    let law = if spec.size() > 2 { Some(rho_law(spec.size() / 2, lambda, quad)?) } else { None };
    measure_from_law(spec, lambda, law.as_ref())
}

/// Block measures keyed by sub-block sizes, sharing one partition law per block size.
struct BlockMeasures {
    lambda: f64,
    quad: QuadratureSpec,
    laws: BTreeMap<usize, LimitLaw>,
    measures: BTreeMap<(usize, usize), Rc<Vec<(Vec<u8>, f64)>>>,
}

impl BlockMeasures {
    fn new(lambda: f64, quad: QuadratureSpec) -> Self {
        Self { lambda, quad, laws: BTreeMap::new(), measures: BTreeMap::new() }
    }

    fn get(&mut self, first: usize, second: usize) -> Result<Rc<Vec<(Vec<u8>, f64)>>> {
        if let Some(m) = self.measures.get(&(first, second)) {
            return Ok(m.clone());
        }
        let spec = BlockSpec::new(first, 0, second, 0);
        spec.check(MAX_RHO_BLOCK_SIZE)?;
        let k = spec.size() / 2;
        if k >= 2 && !self.laws.contains_key(&k) {
            self.laws.insert(k, rho_law(k, self.lambda, &self.quad)?);
        }
        let m = Rc::new(measure_from_law(&spec, self.lambda, self.laws.get(&k))?.labelled());
        self.measures.insert((first, second), m.clone());
        Ok(m)
    }
}

/// Bounded functional of a tangled current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TanglingFunctional {
    /// `F = 1`.
    One,
    /// Indicator that the block of the vertex is non-empty and forms a single class.
    SingleClassAt(usize),
}

/// Point layout of the block at one vertex for a current pair.
struct VertexBlock {
    /// Local point index of each tangling index (sub-block one first).
    order: Vec<usize>,
    first: usize,
    second: usize,
    /// Offset of each incident edge's points in the local layout.
    edge_offset: BTreeMap<usize, usize>,
    /// Local indices of the second moment's points.
    b_points: std::ops::Range<usize>,
}

/// Block layout: per incident edge its `n1 + n2` points, then the `A_x` points, then the
/// `B_x` points. With `b_in_first` the `B_x` points join sub-block one.
fn vertex_block(graph: &FiniteGraph, x: usize, n1: &[u32], n2: &[u32], a: u32, b: u32, b_in_first: bool) -> VertexBlock {
    let mut edge_offset = BTreeMap::new();
    let mut first_pts = Vec::new();
    let mut second_pts = Vec::new();
    let mut pos = 0usize;
    for (e, &(u, w)) in graph.edges().iter().enumerate() {
        if u != x && w != x {
            continue;
        }
        edge_offset.insert(e, pos);
        for k in 0..(n1[e] + n2[e]) as usize {
            if k < n1[e] as usize {
                first_pts.push(pos + k);
            } else {
                second_pts.push(pos + k);
            }
        }
        pos += (n1[e] + n2[e]) as usize;
    }
    first_pts.extend(pos..pos + a as usize);
    pos += a as usize;
    let b_points = pos..pos + b as usize;
    if b_in_first {
        first_pts.extend(b_points.clone());
    } else {
        second_pts.extend(b_points.clone());
    }
    let (first, second) = (first_pts.len(), second_pts.len());
    first_pts.extend(second_pts);
    VertexBlock { order: first_pts, first, second, edge_offset, b_points }
}

/// Whether every component of the projected multigraph holds an even number of
/// second-moment points.
fn pairs_second_moment(graph: &FiniteGraph, n: &[u32], blocks: &[VertexBlock], labels: &[Vec<u8>]) -> bool {
    let mut base = Vec::with_capacity(blocks.len());
    let mut total = 0usize;
    for l in labels {
        base.push(total);
        total += l.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    }
    let mut uf = UnionFind::<usize>::new(total.max(1));
    for (e, &(x, y)) in graph.edges().iter().enumerate() {
        let (ox, oy) = (blocks[x].edge_offset[&e], blocks[y].edge_offset[&e]);
        for k in 0..n[e] as usize {
            uf.union(base[x] + labels[x][ox + k] as usize, base[y] + labels[y][oy + k] as usize);
        }
    }
    let mut parity: BTreeMap<usize, u32> = BTreeMap::new();
    for (x, blk) in blocks.iter().enumerate() {
        for p in blk.b_points.clone() {
            *parity.entry(uf.find(base[x] + labels[x][p] as usize)).or_insert(0) += 1;
        }
    }
    parity.values().all(|c| c % 2 == 0)
}

fn is_single_class(labels: &[u8]) -> bool {
    !labels.is_empty() && labels.iter().all(|&c| c == 0)
}

/// One row of the switching-identity test matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingCheck {
    pub graph: FiniteGraph,
    pub first: MomentFunction,
    pub second: MomentFunction,
    pub params: Phi4Params,
    pub functional: TanglingFunctional,
    pub truncation: u32,
    /// Left side divided by the truncated weight of the left current pairs.
    pub lhs: f64,
    /// Right side in the same units.
    pub rhs: f64,
    pub lhs_defect: f64,
    pub rhs_defect: f64,
    /// `lhs_defect + rhs_defect`: weight outside the truncation or the enumeration caps.
    pub defect_bound: f64,
    /// Current pairs left out because a block or the tangling count exceeded its cap.
    pub skipped_pairs: usize,
}

impl SwitchingCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// `ln` of the weight sum over currents with odd set `odd` and multiplicities at most `cap`,
/// and `ln` of the additional weight with multiplicities in `(cap, TAIL_CAP]`.
fn truncated_sums(graph: &FiniteGraph, moments: &MomentFunction, beta: f64, table: &LogMoments, cap: u32) -> (f64, f64) {
    let mut inside = LogSum::default();
    let mut tail = LogSum::default();
    for c in graph.currents(&moments.odd_set(), TAIL_CAP) {
        let l = log_weight_with(graph, &c, moments, beta, table);
        if c.iter().all(|&m| m <= cap) {
            inside.add(l);
        } else {
            tail.add(l);
        }
    }
    (inside.ln(), tail.ln())
}

/// Both sides of the switching identity with tangling measures from the double-current
/// partition law, truncated at multiplicity `truncation` on every edge.
pub fn switching_check(
    graph: &FiniteGraph,
    first: &MomentFunction,
    second: &MomentFunction,
    params: &Phi4Params,
    functional: TanglingFunctional,
    truncation: u32,
    quad: &QuadratureSpec,
) -> Result<SwitchingCheck> {
    first.check_graph(graph)?;
    second.check_graph(graph)?;
    if graph.vertex_count() > 4 {
        return Err(Error::SizeLimit("switching checks support at most 4 vertices".into()));
    }
    if truncation > 6 {
        return Err(Error::SizeLimit(format!("truncation {truncation} exceeds 6")));
    }
    if let TanglingFunctional::SingleClassAt(x) = functional {
        if x >= graph.vertex_count() {
            return Err(Error::Invalid(format!("functional vertex {x} is not in the graph")));
        }
    }
    let sum = first.plus(second)?;
    let empty = MomentFunction::zero(graph.vertex_count());
    let max_deg = (0..graph.vertex_count()).map(|x| graph.edges().iter().filter(|e| e.0 == x || e.1 == x).count()).max().unwrap_or(0);
    let p_max = 2 * max_deg * TAIL_CAP as usize + sum.values().iter().copied().max().unwrap_or(0) as usize;
    let table = LogMoments::new(params.g, params.a, p_max);
    let beta = params.beta;

    let (ln_ta, ln_tail_a) = truncated_sums(graph, first, beta, &table, truncation);
    let (ln_tb, ln_tail_b) = truncated_sums(graph, second, beta, &table, truncation);
    let (ln_tab, ln_tail_ab) = truncated_sums(graph, &sum, beta, &table, truncation);
    let (ln_t0, ln_tail_0) = truncated_sums(graph, &empty, beta, &table, truncation);
    let scale = ln_ta + ln_tb;
    let rel = |x: f64| x.exp();
    // (T + tail)(T' + tail') - T T', relative to the left normaliser.
    let lhs_tail = rel(ln_tail_a - ln_ta) + rel(ln_tail_b - ln_tb) + rel(ln_tail_a - ln_ta + ln_tail_b - ln_tb);
    let rhs_tail = rel(ln_tail_ab + ln_t0 - scale) + rel(ln_tab + ln_tail_0 - scale) + rel(ln_tail_ab + ln_tail_0 - scale);

    let mut blocks = BlockMeasures::new(params.lambda(), *quad);
    let mut skipped = 0usize;
    let n = graph.vertex_count();

    // Left side: the functional only looks at one vertex, so the product measure collapses.
    let mut lhs_terms = Vec::new();
    let mut lhs_skipped = Vec::new();
    let c1 = graph.currents(&first.odd_set(), truncation);
    let c2 = graph.currents(&second.odd_set(), truncation);
    for n1 in &c1 {
        let w1 = log_weight_with(graph, n1, first, beta, &table);
        for n2 in &c2 {
            let w = (w1 + log_weight_with(graph, n2, second, beta, &table) - scale).exp();
            // Pairs are left out by the same block-size rule on both sides, so the switching
            // bijection, which preserves n1 + n2, maps the kept pairs onto each other.
            let oversized = (0..n).any(|x| {
                let blk = vertex_block(graph, x, n1, n2, first.values()[x], second.values()[x], false);
                blk.first + blk.second > MAX_RHO_BLOCK_SIZE
            });
            let value = match functional {
                _ if oversized => None,
                TanglingFunctional::One => Some(1.0),
                TanglingFunctional::SingleClassAt(x) => {
                    let blk = vertex_block(graph, x, n1, n2, first.values()[x], second.values()[x], false);
                    let m = blocks.get(blk.first, blk.second)?;
                    Some(m.iter().filter(|(l, _)| is_single_class(l)).map(|(_, q)| q).sum::<f64>())
                }
            };
            match value {
                Some(v) => lhs_terms.push(w * v),
                None => {
                    lhs_skipped.push(w);
                    skipped += 1;
                }
            }
        }
    }

    // Right side: sum over tanglings of every block for the event that the second moment's
    // points are paired.
    let mut rhs_terms = Vec::new();
    let mut rhs_skipped = Vec::new();
    let r1 = graph.currents(&sum.odd_set(), truncation);
    let r2 = graph.currents(&empty.odd_set(), truncation);
    for n1 in &r1 {
        let w1 = log_weight_with(graph, n1, &sum, beta, &table);
        'pairs: for n2 in &r2 {
            let w = (w1 + log_weight_with(graph, n2, &empty, beta, &table) - scale).exp();
            let layout: Vec<VertexBlock> = (0..n)
                .map(|x| vertex_block(graph, x, n1, n2, first.values()[x], second.values()[x], true))
                .collect();
            let mut measures = Vec::with_capacity(n);
            let mut count = 1usize;
            for blk in &layout {
                if blk.first + blk.second > MAX_RHO_BLOCK_SIZE {
                    rhs_skipped.push(w);
                    skipped += 1;
                    continue 'pairs;
                }
                let m = blocks.get(blk.first, blk.second)?;
                count = count.saturating_mul(m.len().max(1));
                measures.push(m);
            }
            if count > MAX_TANGLINGS_PER_PAIR {
                rhs_skipped.push(w);
                skipped += 1;
                continue;
            }
            let total: Vec<u32> = n1.iter().zip(n2).map(|(a, b)| a + b).collect();
            let mut acc = Vec::new();
            let mut labels: Vec<Vec<u8>> = vec![Vec::new(); n];
            let mut idx = vec![0usize; n];
            loop {
                let mut p = 1.0;
                for x in 0..n {
                    let (rho_labels, q) = match measures[x].get(idx[x]) {
                        Some((l, q)) => (l.as_slice(), *q),
                        None => (&[][..], 1.0),
                    };
                    p *= q;
                    let mut local = vec![0u8; layout[x].order.len()];
                    for (i, &pt) in layout[x].order.iter().enumerate() {
                        local[pt] = rho_labels[i];
                    }
                    labels[x] = local;
                }
                let f = match functional {
                    TanglingFunctional::One => true,
                    TanglingFunctional::SingleClassAt(x) => is_single_class(&labels[x]),
                };
                if f && pairs_second_moment(graph, &total, &layout, &labels) {
                    acc.push(p);
                }
                let mut x = 0;
                loop {
                    if x == n {
                        break;
                    }
                    idx[x] += 1;
                    if idx[x] < measures[x].len() {
                        break;
                    }
                    idx[x] = 0;
                    x += 1;
                }
                if x == n {
                    break;
                }
            }
            rhs_terms.push(w * compensated_sum(acc));
        }
    }

    let lhs_defect = lhs_tail + compensated_sum(lhs_skipped);
    let rhs_defect = rhs_tail + compensated_sum(rhs_skipped);
    Ok(SwitchingCheck {
        graph: graph.clone(),
        first: first.clone(),
        second: second.clone(),
        params: *params,
        functional,
        truncation,
        lhs: compensated_sum(lhs_terms),
        rhs: compensated_sum(rhs_terms),
        lhs_defect,
        rhs_defect,
        defect_bound: lhs_defect + rhs_defect,
        skipped_pairs: skipped,
    })
}

/// Pairing sum and direct Gaussian moment of `prod_x phi_x^{A_x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WickCheck {
    pub pairing_sum: f64,
    pub direct_moment: f64,
}

/// Covariance of the Gaussian field with density `exp(-a sum phi^2 + beta sum_edges phi_x phi_y)`,
/// the inverse of `2aI - beta Adj`. Requires `aI - beta Adj` positive definite.
pub fn gff_covariance(graph: &FiniteGraph, a: f64, beta: f64) -> Result<DMatrix<f64>> {
    let n = graph.vertex_count();
    let adj = graph.adjacency();
    let check = DMatrix::<f64>::identity(n, n) * a - &adj * beta;
    if check.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let precision = DMatrix::<f64>::identity(n, n) * (2.0 * a) - adj * beta;
    precision.try_inverse().ok_or(Error::NotPositiveDefinite)
}

fn pairing_sum(points: &[usize], cov: &DMatrix<f64>) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let first = points[0];
    let mut s = 0.0;
    for i in 1..points.len() {
        let rest: Vec<usize> = points[1..].iter().enumerate().filter(|&(j, _)| j + 1 != i).map(|(_, &p)| p).collect();
        s += cov[(first, points[i])] * pairing_sum(&rest, cov);
    }
    s
}

type Monomial = [u8; MAX_GRAPH_VERTICES];

/// `E prod_x phi_x^{A_x}` with `phi = L z`, `L L^T` the covariance and `z` standard
/// normal, by expanding the polynomial in `z`.
fn direct_gaussian_moment(orders: &[u32], cov: &DMatrix<f64>) -> Result<f64> {
    let n = orders.len();
    let l = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    let mut poly: BTreeMap<Monomial, f64> = BTreeMap::new();
    poly.insert([0; MAX_GRAPH_VERTICES], 1.0);
    for (x, &ax) in orders.iter().enumerate() {
        for _ in 0..ax {
            let mut next: BTreeMap<Monomial, f64> = BTreeMap::new();
            for (mono, c) in &poly {
                for j in 0..n {
                    let coef = l[(x, j)];
                    if coef == 0.0 {
                        continue;
                    }
                    let mut m = *mono;
                    m[j] += 1;
                    *next.entry(m).or_insert(0.0) += c * coef;
                }
            }
            poly = next;
        }
    }
    let odd_double_factorial = |k: u8| -> f64 { (1..k as u32).step_by(2).map(f64::from).product() };
    Ok(compensated_sum(poly.iter().filter(|(m, _)| m.iter().all(|e| e % 2 == 0)).map(|(m, c)| {
        c * m.iter().map(|&e| if e == 0 { 1.0 } else { odd_double_factorial(e) }).product::<f64>()
    })))
}

/// Wick's pairing sum against the direct moment for the Gaussian field on `graph`.
pub fn wick_check(graph: &FiniteGraph, a: f64, beta: f64, moments: &MomentFunction) -> Result<WickCheck> {
    moments.check_graph(graph)?;
    let cov = gff_covariance(graph, a, beta)?;
    let points: Vec<usize> = moments.values().iter().enumerate().flat_map(|(x, &ax)| std::iter::repeat(x).take(ax as usize)).collect();
    if points.len() % 2 == 1 {
        return Ok(WickCheck { pairing_sum: 0.0, direct_moment: 0.0 });
    }
    Ok(WickCheck { pairing_sum: pairing_sum(&points, &cov), direct_moment: direct_gaussian_moment(moments.values(), &cov)? })
}

/// The near-critical parameter matching `a = -2g`.
pub fn ising_limit_lambda(g: f64) -> f64 {
    -2.0 * (g / 3.0).sqrt()
}

/// Single-class tangling probability of `spec` for each `g` along `a = -2g`.
pub fn ect_trend(g_list: &[f64], spec: &BlockSpec, quad: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    if g_list.iter().any(|&g| !(g > 0.0)) || g_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("g values must be positive and increasing".into()));
    }
    g_list.iter().map(|&g| Ok((g, rho_block_measure(spec, ising_limit_lambda(g), quad)?.ect_probability()))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::scaled_moment;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn weights_of_small_currents() {
        let g2 = FiniteGraph::path(2).unwrap();
        let p = Phi4Params::new(1.0 / 12.0, 0.0, 0.7).unwrap();
        assert_eq!(phi4_log_weight(&g2, &[0], &MomentFunction::zero(2), &p).unwrap(), 0.0);
        assert_eq!(phi4_log_weight(&g2, &[1], &MomentFunction::zero(2), &p).unwrap(), f64::NEG_INFINITY);
        let a = MomentFunction::new(vec![1, 1]).unwrap();
        let m2 = crate::limit::phi4_moment(p.g, p.a, 2).unwrap();
        let w = phi4_log_weight(&g2, &[1], &a, &p).unwrap().exp();
        assert!((w / (0.7 * m2 * m2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_partition_counts() {
        assert_eq!(block_partitions(&BlockSpec::new(2, 0, 0, 0)).unwrap().len(), 1);
        assert_eq!(block_partitions(&BlockSpec::new(4, 0, 0, 0)).unwrap().len(), 4);
        assert_eq!(block_partitions(&BlockSpec::new(1, 1, 1, 1)).unwrap().len(), 2);
        assert!(block_partitions(&BlockSpec::new(1, 0, 1, 0)).is_err());
        assert!(matches!(block_partitions(&BlockSpec::new(12, 0, 0, 0)), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn admissible_mass_is_a_moment_ratio() {
        // Restricting the double law to admissible partitions leaves the moment ratio
        // <phi^{s1}><phi^{s2}>/<phi^{s1+s2}>.
        for lambda in [-1.0, 0.0, 2.0] {
            for (s1, s2) in [(2usize, 2usize), (4, 2), (2, 4)] {
                let m = rho_block_measure(&BlockSpec::new(s1, 0, s2, 0), lambda, &quad()).unwrap();
                let ratio = scaled_moment(lambda, s1) * scaled_moment(lambda, s2) / scaled_moment(lambda, s1 + s2);
                assert!((m.admissible_mass / ratio - 1.0).abs() < 1e-7, "{lambda} {s1} {s2}: {} vs {ratio}", m.admissible_mass);
                assert!((m.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn point_mass_for_two_points() {
        let m = rho_block_measure(&BlockSpec::new(1, 1, 0, 0), 0.0, &quad()).unwrap();
        assert_eq!(m.probabilities, vec![1.0]);
        assert_eq!(m.ect_probability(), 1.0);
    }

    #[test]
    fn wick_small_cases() {
        let one = FiniteGraph::single_vertex();
        let r = wick_check(&one, 0.5, 0.0, &MomentFunction::new(vec![4]).unwrap()).unwrap();
        // Variance 1/(2a) = 1, fourth moment 3.
        assert!((r.direct_moment - 3.0).abs() < 1e-12 && (r.pairing_sum - 3.0).abs() < 1e-12);
        let path = FiniteGraph::path(3).unwrap();
        let r = wick_check(&path, 2.0, 0.5, &MomentFunction::new(vec![2, 1, 1]).unwrap()).unwrap();
        assert!((r.pairing_sum / r.direct_moment - 1.0).abs() < 1e-10);
        assert!(matches!(wick_check(&path, 0.1, 1.0, &MomentFunction::zero(3)), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn switching_trivial_when_second_is_empty() {
        let g2 = FiniteGraph::path(2).unwrap();
        let a = MomentFunction::new(vec![1, 1]).unwrap();
        let p = Phi4Params::new(1.0 / 12.0, 0.0, 0.3).unwrap();
        let r = switching_check(&g2, &a, &MomentFunction::zero(2), &p, TanglingFunctional::One, 3, &quad()).unwrap();
        assert_eq!(r.skipped_pairs, 0);
        assert!((r.lhs - r.rhs).abs() < 1e-14, "{r:?}");
        let r = switching_check(&g2, &a, &MomentFunction::zero(2), &p, TanglingFunctional::One, 6, &quad()).unwrap();
        assert!(r.discrepancy() <= r.defect_bound, "{r:?}");
    }

    #[test]
    fn ect_trend_rejects_unsorted() {
        assert!(ect_trend(&[4.0, 1.0], &BlockSpec::new(2, 0, 2, 0), &quad()).is_err());
    }
}
