//! Metropolis-Hastings chains on currents with a fixed source set.
//!
//! Two move kinds, both changing every vertex degree by an even amount:
//!
//! * pair move: add `+2` or `-2` to one edge;
//! * triangle move: add a sign pattern in `{+1, -1}^3` to the edges of a triangle.
//!
//! The edge of a move is drawn from a mixture of the uniform law on all pairs and the
//! uniform law on occupied edges. The third vertex of a triangle is drawn from a mixture
//! of the uniform law and a random occupied neighbour of one endpoint. Proposal
//! probabilities of the move and of its reverse are evaluated exactly, so the chain is
//! reversible with respect to `prod_e d^{n_e}/n_e!`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterReport, Current, ModelParams, SourceSet};

/// Deterministic generator for stream `stream` of a master seed.
pub fn split_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixture weights of the proposal kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoveMix {
    /// Probability of a pair move (otherwise a triangle move).
    pub pair: f64,
    /// Probability that the edge is drawn uniformly from all pairs rather than from occupied edges.
    pub uniform_edge: f64,
    /// Probability that a triangle's third vertex is uniform rather than an occupied neighbour.
    pub uniform_vertex: f64,
}

impl Default for MoveMix {
    fn default() -> Self {
        Self { pair: 0.5, uniform_edge: 0.5, uniform_vertex: 0.5 }
    }
}

impl MoveMix {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("pair", self.pair), ("uniform_edge", self.uniform_edge), ("uniform_vertex", self.uniform_vertex)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParams(format!("mixture weight {name} = {p} is not in [0, 1]")));
            }
        }
        if self.uniform_edge == 0.0 {
            return Err(Error::InvalidParams("uniform_edge must be positive for the chain to leave the empty current".into()));
        }
        if self.uniform_vertex == 0.0 {
            return Err(Error::InvalidParams("uniform_vertex must be positive for triangles to reach new vertices".into()));
        }
        Ok(())
    }
}

/// Proposal and acceptance counts per move kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalStats {
    pub pair_proposed: u64,
    pub pair_accepted: u64,
    pub triangle_proposed: u64,
    pub triangle_accepted: u64,
}

impl ProposalStats {
    pub fn pair_rate(&self) -> f64 {
        self.pair_accepted as f64 / self.pair_proposed.max(1) as f64
    }
    pub fn triangle_rate(&self) -> f64 {
        self.triangle_accepted as f64 / self.triangle_proposed.max(1) as f64
    }
    fn merge(&mut self, o: &ProposalStats) {
        self.pair_proposed += o.pair_proposed;
        self.pair_accepted += o.pair_accepted;
        self.triangle_proposed += o.triangle_proposed;
        self.triangle_accepted += o.triangle_accepted;
    }
}

/// Weight ratio `w(n + delta)/w(n)` for one edge of multiplicity `m`, `delta in {-2,-1,1,2}`.
pub fn edge_weight_ratio(m: u32, delta: i32, d: f64) -> f64 {
    match delta {
        1 => d / (m + 1) as f64,
        2 => d * d / ((m + 1) * (m + 2)) as f64,
        -1 => m as f64 / d,
        -2 => (m * (m - 1)) as f64 / (d * d),
        _ => panic!("unsupported multiplicity change {delta}"),
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    mult: u32,
    occ_pos: u32,
    pos_lo: u32,
    pos_hi: u32,
}

fn key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (lo as u64) << 32 | hi as u64
}

/// A proposed move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// Change `delta in {-2, 2}` on edge `{a, b}`.
    Pair { a: u32, b: u32, delta: i32 },
    /// Signs on the edges `{a,b}`, `{a,c}`, `{b,c}`.
    Triangle { a: u32, b: u32, c: u32, signs: [i32; 3] },
}

/// A Markov chain on currents with source set `S`.
#[derive(Debug, Clone)]
pub struct ChainState {
    params: ModelParams,
    sources: SourceSet,
    mix: MoveMix,
    n: u32,
    d: f64,
    edges: FxHashMap<u64, Slot>,
    occupied: Vec<(u32, u32)>,
    adj: Vec<Vec<u32>>,
    rng: ChaCha8Rng,
    step_count: u64,
    stats: ProposalStats,
}

/// Occupancy seen by the proposal law: the chain's state with optional overrides on the
/// three edges of a triangle.
struct View<'a> {
    chain: &'a ChainState,
    tri: [u32; 3],
    occ: [bool; 3],
    occupied_total: usize,
}

impl View<'_> {
    fn edge_index(&self, u: u32, w: u32) -> Option<usize> {
        let [a, b, c] = self.tri;
        let is = |x: u32, y: u32| (u == x && w == y) || (u == y && w == x);
        if is(a, b) {
            Some(0)
        } else if is(a, c) {
            Some(1)
        } else if is(b, c) {
            Some(2)
        } else {
            None
        }
    }

    fn occupied(&self, u: u32, w: u32) -> bool {
        match self.edge_index(u, w) {
            Some(i) => self.occ[i],
            None => self.chain.mult(u, w) > 0,
        }
    }

    fn occupied_degree(&self, v: u32) -> usize {
        let mut deg = self.chain.adj[v as usize].len() as isize;
        for (i, (x, y)) in [(self.tri[0], self.tri[1]), (self.tri[0], self.tri[2]), (self.tri[1], self.tri[2])].into_iter().enumerate() {
            if x == v || y == v {
                let before = self.chain.mult(x, y) > 0;
                deg += self.occ[i] as isize - before as isize;
            }
        }
        deg as usize
    }
}

impl ChainState {
    /// Chain started from the canonical pairing of the sorted sources.
    pub fn new(params: &ModelParams, sources: &SourceSet, seed: u64, mix: MoveMix) -> Result<Self> {
        Self::from_rng(params, sources, ChaCha8Rng::seed_from_u64(seed), mix)
    }

    pub fn from_rng(params: &ModelParams, sources: &SourceSet, rng: ChaCha8Rng, mix: MoveMix) -> Result<Self> {
        mix.validate()?;
        let n = params.n();
        for &v in sources.vertices() {
            if v == 0 || v as usize > n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
        }
        if n > u32::MAX as usize / 2 {
            return Err(Error::SizeLimit(format!("n = {n} is too large")));
        }
        let mut chain = Self {
            params: *params,
            sources: sources.clone(),
            mix,
            n: n as u32,
            d: params.d_n(),
            edges: FxHashMap::default(),
            occupied: Vec::new(),
            adj: vec![Vec::new(); n + 1],
            rng,
            step_count: 0,
            stats: ProposalStats::default(),
        };
        for pair in sources.vertices().chunks(2) {
            chain.set_mult(pair[0], pair[1], 1);
        }
        debug_assert_eq!(chain.current().source_set(), *sources);
        Ok(chain)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn sources(&self) -> &SourceSet {
        &self.sources
    }
    pub fn step_count(&self) -> u64 {
        self.step_count
    }
    pub fn stats(&self) -> &ProposalStats {
        &self.stats
    }
    pub fn occupied_edges(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.occupied.iter().map(|&(a, b)| (a, b, self.edges[&key(a, b)].mult))
    }

    pub fn mult(&self, a: u32, b: u32) -> u32 {
        self.edges.get(&key(a, b)).map_or(0, |s| s.mult)
    }

    pub fn current(&self) -> Current {
        Current::from_edges(self.n as usize, self.occupied_edges()).expect("chain edges are in range")
    }

    pub fn report(&self) -> ClusterReport {
        ClusterReport::from_edges(self.n as usize, self.occupied_edges(), &self.sources)
    }

    fn set_mult(&mut self, a: u32, b: u32, m: u32) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let k = key(lo, hi);
        match (self.edges.get(&k).copied(), m) {
            (None, 0) => {}
            (None, m) => {
                let slot = Slot {
                    mult: m,
                    occ_pos: self.occupied.len() as u32,
                    pos_lo: self.adj[lo as usize].len() as u32,
                    pos_hi: self.adj[hi as usize].len() as u32,
                };
                self.occupied.push((lo, hi));
                self.adj[lo as usize].push(hi);
                self.adj[hi as usize].push(lo);
                self.edges.insert(k, slot);
            }
            (Some(slot), 0) => {
                self.edges.remove(&k);
                let last = self.occupied.len() - 1;
                self.occupied.swap_remove(slot.occ_pos as usize);
                if (slot.occ_pos as usize) < last {
                    let moved = self.occupied[slot.occ_pos as usize];
                    self.edges.get_mut(&key(moved.0, moved.1)).expect("occupied edge has a slot").occ_pos = slot.occ_pos;
                }
                self.remove_adjacent(lo, slot.pos_lo as usize);
                self.remove_adjacent(hi, slot.pos_hi as usize);
            }
            (Some(_), m) => self.edges.get_mut(&k).expect("slot exists").mult = m,
        }
    }

    fn remove_adjacent(&mut self, v: u32, pos: usize) {
        let list = &mut self.adj[v as usize];
        list.swap_remove(pos);
        if pos < list.len() {
            let moved = list[pos];
            let slot = self.edges.get_mut(&key(v, moved)).expect("adjacent edge has a slot");
            if v < moved {
                slot.pos_lo = pos as u32;
            } else {
                slot.pos_hi = pos as u32;
            }
        }
    }

    fn pairs(&self) -> f64 {
        let n = self.n as f64;
        n * (n - 1.0) / 2.0
    }

    /// Probability that edge `{u, w}` is selected under the given occupancy.
    fn edge_probability(&self, occupied: bool, occupied_total: usize) -> f64 {
        let q = self.mix.uniform_edge;
        let uniform = 1.0 / self.pairs();
        if occupied_total == 0 {
            uniform
        } else {
            q * uniform + (1.0 - q) * if occupied { 1.0 / occupied_total as f64 } else { 0.0 }
        }
    }

    /// Probability of proposing the triangle `tri` (with its particular sign pattern)
    /// when the occupancy is `view`.
    fn triangle_probability(&self, view: &View<'_>) -> f64 {
        let [a, b, c] = view.tri;
        let r = self.mix.uniform_vertex;
        let others = (self.n - 2) as f64;
        let third = |x: u32, y: u32, z: u32| -> f64 {
            // Endpoint x of edge {x, y}, third vertex z.
            let neighbours = view.occupied_degree(x) - view.occupied(x, y) as usize;
            if neighbours == 0 {
                1.0 / others
            } else {
                r / others + (1.0 - r) * if view.occupied(x, z) { 1.0 / neighbours as f64 } else { 0.0 }
            }
        };
        let mut total = 0.0;
        for (x, y, z) in [(a, b, c), (a, c, b), (b, c, a)] {
            let pe = self.edge_probability(view.occupied(x, y), view.occupied_total);
            total += pe * 0.5 * (third(x, y, z) + third(y, x, z));
        }
        total * (1.0 - self.mix.pair) / 8.0
    }

    fn pair_probability(&self, occupied: bool, occupied_total: usize) -> f64 {
        self.mix.pair * self.edge_probability(occupied, occupied_total) * 0.5
    }

    /// Proposal probability of `mv` from the current state and of its reverse from the
    /// state after the move, with the weight ratio. `None` if the move leaves the state space.
    pub fn move_ratio(&self, mv: &Move) -> Option<(f64, f64, f64)> {
        match *mv {
            Move::Pair { a, b, delta } => {
                let m = self.mult(a, b);
                if (m as i32) + delta < 0 {
                    return None;
                }
                let after = (m as i32 + delta) as u32;
                let o = self.occupied.len();
                let o_after = o + (after > 0) as usize - (m > 0) as usize;
                let fwd = self.pair_probability(m > 0, o);
                let rev = self.pair_probability(after > 0, o_after);
                Some((fwd, rev, edge_weight_ratio(m, delta, self.d)))
            }
            Move::Triangle { a, b, c, signs } => {
                let pairs = [(a, b), (a, c), (b, c)];
                let mut before = [false; 3];
                let mut after = [false; 3];
                let mut ratio = 1.0;
                for (i, &(x, y)) in pairs.iter().enumerate() {
                    let m = self.mult(x, y);
                    if m == 0 && signs[i] < 0 {
                        return None;
                    }
                    before[i] = m > 0;
                    after[i] = (m as i32 + signs[i]) > 0;
                    ratio *= edge_weight_ratio(m, signs[i], self.d);
                }
                let o = self.occupied.len();
                let o_after = (o as isize + after.iter().map(|&x| x as isize).sum::<isize>()
                    - before.iter().map(|&x| x as isize).sum::<isize>()) as usize;
                let fwd = self.triangle_probability(&View { chain: self, tri: [a, b, c], occ: before, occupied_total: o });
                let rev = self.triangle_probability(&View { chain: self, tri: [a, b, c], occ: after, occupied_total: o_after });
                Some((fwd, rev, ratio))
            }
        }
    }

    fn draw_edge(&mut self) -> (u32, u32) {
        if self.occupied.is_empty() || self.rng.random::<f64>() < self.mix.uniform_edge {
            let a = self.rng.random_range(1..=self.n);
            let mut b = self.rng.random_range(1..self.n);
            if b >= a {
                b += 1;
            }
            (a, b)
        } else {
            self.occupied[self.rng.random_range(0..self.occupied.len())]
        }
    }

    /// Draws a move from the proposal law.
    pub fn propose(&mut self) -> Move {
        if self.rng.random::<f64>() < self.mix.pair {
            let (a, b) = self.draw_edge();
            let delta = if self.rng.random::<bool>() { 2 } else { -2 };
            return Move::Pair { a, b, delta };
        }
        let (u, w) = self.draw_edge();
        let (x, y) = if self.rng.random::<bool>() { (u, w) } else { (w, u) };
        let neighbours = self.adj[x as usize].len() - (self.mult(x, y) > 0) as usize;
        let z = if neighbours == 0 || self.rng.random::<f64>() < self.mix.uniform_vertex {
            loop {
                let z = self.rng.random_range(1..=self.n);
                if z != x && z != y {
                    break z;
                }
            }
        } else {
            loop {
                let list = &self.adj[x as usize];
                let z = list[self.rng.random_range(0..list.len())];
                if z != y {
                    break z;
                }
            }
        };
        let bits: u8 = self.rng.random_range(0..8);
        let s = |i: u8| if bits >> i & 1 == 1 { 1 } else { -1 };
        // Signs refer to the edges {u,w}, {u,z}, {w,z}.
        Move::Triangle { a: u, b: w, c: z, signs: [s(0), s(1), s(2)] }
    }

    fn apply(&mut self, mv: &Move) {
        match *mv {
            Move::Pair { a, b, delta } => {
                let m = self.mult(a, b) as i32 + delta;
                self.set_mult(a, b, m as u32);
            }
            Move::Triangle { a, b, c, signs } => {
                for (&(x, y), s) in [(a, b), (a, c), (b, c)].iter().zip(signs) {
                    let m = self.mult(x, y) as i32 + s;
                    self.set_mult(x, y, m as u32);
                }
            }
        }
    }

    /// One proposal followed by a Metropolis-Hastings accept/reject.
    pub fn step(&mut self) -> bool {
        self.step_count += 1;
        let mv = self.propose();
        let is_pair = matches!(mv, Move::Pair { .. });
        if is_pair {
            self.stats.pair_proposed += 1;
        } else {
            self.stats.triangle_proposed += 1;
        }
        let Some((fwd, rev, ratio)) = self.move_ratio(&mv) else {
            return false;
        };
        let accept = ratio * rev / fwd;
        if accept >= 1.0 || self.rng.random::<f64>() < accept {
            self.apply(&mv);
            if is_pair {
                self.stats.pair_accepted += 1;
            } else {
                self.stats.triangle_accepted += 1;
            }
            true
        } else {
            false
        }
    }

    /// `n` proposals.
    pub fn sweep(&mut self) {
        for _ in 0..self.n {
            self.step();
        }
    }
}

/// Sampling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub burn_in: u64,
    pub samples: u64,
    pub thinning: u64,
    pub double: bool,
    /// `A` in the good event: at most `A` vertices of degree four.
    pub good_a: usize,
    pub mix: MoveMix,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, burn_in: 1000, samples: 1000, thinning: 10, double: false, good_a: 10, mix: MoveMix::default() }
    }
}

/// One report of the chain after `sweep` sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sweep: u64,
    pub report: ClusterReport,
}

/// Single current `n_1 ~ P^S`, or with `double` the sum `n_1 + n_2` of independent
/// chains with sources `S` and the empty set.
#[derive(Debug, Clone)]
pub struct Sampler {
    primary: ChainState,
    secondary: Option<ChainState>,
    config: RunConfig,
    sweeps: u64,
}

impl Sampler {
    pub fn new(params: &ModelParams, sources: &SourceSet, config: RunConfig) -> Result<Self> {
        if config.samples == 0 || config.thinning == 0 {
            return Err(Error::InvalidParams("samples and thinning must be positive".into()));
        }
        let primary = ChainState::from_rng(params, sources, split_rng(config.seed, 0), config.mix)?;
        let secondary = if config.double {
            Some(ChainState::from_rng(params, &SourceSet::empty(), split_rng(config.seed, 1), config.mix)?)
        } else {
            None
        };
        Ok(Self { primary, secondary, config, sweeps: 0 })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }
    pub fn primary(&self) -> &ChainState {
        &self.primary
    }
    pub fn secondary(&self) -> Option<&ChainState> {
        self.secondary.as_ref()
    }

    pub fn stats(&self) -> ProposalStats {
        let mut s = *self.primary.stats();
        if let Some(c) = &self.secondary {
            s.merge(c.stats());
        }
        s
    }

    pub fn sweep(&mut self) {
        self.primary.sweep();
        if let Some(c) = &mut self.secondary {
            c.sweep();
        }
        self.sweeps += 1;
    }

    pub fn report(&self) -> ClusterReport {
        let n = self.primary.params.n();
        match &self.secondary {
            None => self.primary.report(),
            Some(c) => {
                let mut merged: FxHashMap<u64, (u32, u32, u32)> = FxHashMap::default();
                for (a, b, m) in self.primary.occupied_edges().chain(c.occupied_edges()) {
                    merged.entry(key(a, b)).or_insert((a, b, 0)).2 += m;
                }
                ClusterReport::from_edges(n, merged.into_values(), &self.primary.sources)
            }
        }
    }

    /// Runs the burn-in sweeps (once).
    pub fn burn_in(&mut self) {
        while self.sweeps < self.config.burn_in {
            self.sweep();
        }
    }

    /// Advances by the thinning interval and reports.
    pub fn next_sample(&mut self) -> Sample {
        self.burn_in();
        for _ in 0..self.config.thinning {
            self.sweep();
        }
        Sample { sweep: self.sweeps, report: self.report() }
    }

    /// Verifies that each chain still has its source set.
    pub fn check_sources(&self) -> Result<()> {
        for c in std::iter::once(&self.primary).chain(self.secondary.as_ref()) {
            let s = c.current().source_set();
            if s != c.sources {
                return Err(Error::Invalid(format!("chain drifted to source set {:?}", s.vertices())));
            }
        }
        Ok(())
    }
}

/// Output of [`run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub samples: Vec<Sample>,
    pub stats: ProposalStats,
}

/// Burn-in followed by `samples` reports every `thinning` sweeps.
pub fn run(params: &ModelParams, sources: &SourceSet, config: RunConfig) -> Result<RunOutput> {
    let mut sampler = Sampler::new(params, sources, config)?;
    let samples = (0..config.samples).map(|_| sampler.next_sample()).collect();
    sampler.check_sources()?;
    Ok(RunOutput { samples, stats: sampler.stats() })
}

/// Fraction of reports in the good event with parameter `a`.
pub fn good_event_frequency<'a>(reports: impl IntoIterator<Item = &'a ClusterReport>, a: usize) -> f64 {
    let (mut good, mut total) = (0usize, 0usize);
    for r in reports {
        total += 1;
        good += r.good_event(a) as usize;
    }
    if total == 0 {
        1.0
    } else {
        good as f64 / total as f64
    }
}

/// CSV header for `k` source pairs.
pub fn csv_header(k: usize) -> String {
    let mut cols = vec!["step".to_string()];
    cols.extend((1..=2 * k).map(|i| format!("size_{i}")));
    cols.extend(["partition", "n_active", "n_open_edges", "mult_ge2", "mult_ge3", "good_A"].map(String::from));
    cols.join(",")
}

/// One CSV row; the partition is quoted only if it contains commas.
pub fn csv_row(sample: &Sample, good_a: usize) -> String {
    let r = &sample.report;
    let mut cols = vec![sample.sweep.to_string()];
    cols.extend(r.sizes.iter().map(|s| s.to_string()));
    let p = r.partition.canonical_string();
    cols.push(if p.contains(',') { format!("\"{p}\"") } else { p });
    cols.push(r.n_active.to_string());
    cols.push(r.n_open_edges.to_string());
    cols.push(r.multiplicity_counts[1].to_string());
    cols.push(r.multiplicity_counts[2].to_string());
    cols.push((r.good_event(good_a) as u8).to_string());
    cols.join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize, lambda: f64, src: Vec<u32>) -> ChainState {
        let p = ModelParams::critical(n, lambda).unwrap();
        ChainState::new(&p, &SourceSet::new(src).unwrap(), 7, MoveMix::default()).unwrap()
    }

    #[test]
    fn init_is_canonical_pairing() {
        let c = chain(6, 0.0, vec![1, 2, 3, 4]);
        assert_eq!(c.mult(1, 2), 1);
        assert_eq!(c.mult(3, 4), 1);
        assert_eq!(c.occupied_edges().count(), 2);
        let c = chain(6, 0.0, vec![]);
        assert_eq!(c.current(), Current::zero(6));
        let p = ModelParams::critical(6, 0.0).unwrap();
        assert!(ChainState::new(&p, &SourceSet::new(vec![1, 7]).unwrap(), 0, MoveMix::default()).is_err());
    }

    #[test]
    fn weight_ratio_examples() {
        // n = 4, lambda = 0: d = 1/4.
        assert_eq!(edge_weight_ratio(0, 2, 0.25), 1.0 / 32.0);
        assert_eq!(edge_weight_ratio(0, 1, 0.25).powi(3), 1.0 / 64.0);
        assert_eq!(edge_weight_ratio(2, -2, 0.25), 32.0);
        assert_eq!(edge_weight_ratio(3, -1, 0.5), 6.0);
    }

    #[test]
    fn bookkeeping_survives_many_steps() {
        let mut c = chain(12, 0.0, vec![1, 2, 5, 9]);
        for _ in 0..200_000 {
            c.step();
        }
        assert_eq!(c.current().source_set(), *c.sources());
        for (pos, &(a, b)) in c.occupied.iter().enumerate() {
            let s = c.edges[&key(a, b)];
            assert_eq!(s.occ_pos as usize, pos);
            assert_eq!(c.adj[a as usize][s.pos_lo as usize], b);
            assert_eq!(c.adj[b as usize][s.pos_hi as usize], a);
            assert!(s.mult > 0);
        }
        assert_eq!(c.edges.len(), c.occupied.len());
        let s = c.stats();
        assert!(s.pair_accepted <= s.pair_proposed && s.triangle_accepted <= s.triangle_proposed);
        assert!(s.triangle_accepted > 0);
    }

    /// Empirical proposal frequencies against the proposal law used in the Hastings
    /// factor, on an explicit 4-vertex state.
    #[test]
    fn proposal_law_matches_sampling() {
        let p = ModelParams::critical(4, 0.0).unwrap();
        let mut c = ChainState::new(&p, &SourceSet::new(vec![1, 2]).unwrap(), 11, MoveMix::default()).unwrap();
        c.set_mult(1, 3, 2);
        c.set_mult(2, 3, 2);
        let trials = 400_000;
        let mut counts: FxHashMap<String, u64> = FxHashMap::default();
        for _ in 0..trials {
            let mv = c.propose();
            *counts.entry(canonical_move(&mv)).or_insert(0) += 1;
        }
        let mut total = 0.0;
        for (label, &count) in &counts {
            let mv = parse_move(label);
            let expected = match c.move_ratio(&mv) {
                Some((fwd, _, _)) => fwd,
                None => proposal_probability_ignoring_support(&c, &mv),
            };
            let freq = count as f64 / trials as f64;
            let sd = (expected * (1.0 - expected) / trials as f64).sqrt();
            assert!((freq - expected).abs() < 5.0 * sd + 1e-4, "{label}: {freq} vs {expected}");
            total += expected;
        }
        // Six pairs with two directions and four triangles with eight sign patterns.
        assert_eq!(counts.len(), 44);
        assert!((total - 1.0).abs() < 1e-12);
    }

    /// Detailed balance on explicit 3-vertex states: `pi(x) P(x->y) = pi(y) P(y->x)`.
    #[test]
    fn detailed_balance_three_vertices() {
        let p = ModelParams::critical(3, 0.0).unwrap();
        let d = p.d_n();
        let mut x = ChainState::new(&p, &SourceSet::new(vec![1, 2]).unwrap(), 3, MoveMix::default()).unwrap();
        x.set_mult(2, 3, 2);
        let moves = [
            Move::Triangle { a: 1, b: 2, c: 3, signs: [-1, 1, 1] },
            Move::Triangle { a: 1, b: 2, c: 3, signs: [1, 1, -1] },
            Move::Pair { a: 2, b: 3, delta: -2 },
            Move::Pair { a: 1, b: 3, delta: 2 },
        ];
        for mv in moves {
            let (fwd, rev, ratio) = x.move_ratio(&mv).unwrap();
            let mut y = x.clone();
            y.apply(&mv);
            let back = reverse(&mv);
            let (fwd_y, rev_y, ratio_y) = y.move_ratio(&back).unwrap();
            assert!((fwd - rev_y).abs() < 1e-15 && (rev - fwd_y).abs() < 1e-15);
            assert!((ratio * ratio_y - 1.0).abs() < 1e-12);
            let pi_x = x.current().log_weight(&p).exp();
            let pi_y = y.current().log_weight(&p).exp();
            assert!((pi_y / pi_x - ratio).abs() < 1e-12 * ratio);
            let flow_xy = pi_x * fwd * (ratio * rev / fwd).min(1.0);
            let flow_yx = pi_y * fwd_y * (ratio_y * rev_y / fwd_y).min(1.0);
            assert!((flow_xy - flow_yx).abs() < 1e-14 * flow_xy, "{mv:?}");
        }
        // Hand check: from 1-2 (1), 2-3 (2), the reroute 1-2 -> 1-3, 2-3 gives
        // w ratio = (1/d) * d * d/3.
        let (_, _, r) = x.move_ratio(&moves[0]).unwrap();
        assert!((r - d / 3.0).abs() < 1e-15);
    }

    fn reverse(mv: &Move) -> Move {
        match *mv {
            Move::Pair { a, b, delta } => Move::Pair { a, b, delta: -delta },
            Move::Triangle { a, b, c, signs } => Move::Triangle { a, b, c, signs: signs.map(|s| -s) },
        }
    }

    /// A move as a string independent of the order in which its vertices were drawn.
    fn canonical_move(mv: &Move) -> String {
        match *mv {
            Move::Pair { a, b, delta } => format!("p{}-{}:{delta}", a.min(b), a.max(b)),
            Move::Triangle { a, b, c, signs } => {
                let mut e = [((a.min(b), a.max(b)), signs[0]), ((a.min(c), a.max(c)), signs[1]), ((b.min(c), b.max(c)), signs[2])];
                e.sort();
                format!("t{}", e.iter().map(|((x, y), s)| format!("{x}-{y}:{s}")).collect::<Vec<_>>().join(","))
            }
        }
    }

    fn parse_move(s: &str) -> Move {
        let parse_edge = |t: &str| {
            let (e, sign) = t.split_once(':').unwrap();
            let (x, y) = e.split_once('-').unwrap();
            (x.parse::<u32>().unwrap(), y.parse::<u32>().unwrap(), sign.parse::<i32>().unwrap())
        };
        if let Some(rest) = s.strip_prefix('p') {
            let (a, b, delta) = parse_edge(rest);
            Move::Pair { a, b, delta }
        } else {
            let e: Vec<(u32, u32, i32)> = s[1..].split(',').map(parse_edge).collect();
            // Edges sorted: (x,y), (x,z), (y,z) for x < y < z.
            let (a, b, c) = (e[0].0, e[0].1, e[1].1);
            Move::Triangle { a, b, c, signs: [e[0].2, e[1].2, e[2].2] }
        }
    }

    /// Proposal probability of moves that would leave the state space.
    fn proposal_probability_ignoring_support(c: &ChainState, mv: &Move) -> f64 {
        match *mv {
            Move::Pair { a, b, .. } => c.pair_probability(c.mult(a, b) > 0, c.occupied.len()),
            Move::Triangle { a, b, c: z, .. } => {
                let occ = [c.mult(a, b) > 0, c.mult(a, z) > 0, c.mult(b, z) > 0];
                c.triangle_probability(&View { chain: c, tri: [a, b, z], occ, occupied_total: c.occupied.len() })
            }
        }
    }

    #[test]
    fn good_event_frequency_edge_cases() {
        let c = chain(10, 0.0, vec![]);
        let r = c.report();
        assert_eq!(good_event_frequency([&r], 0), 1.0);
        assert_eq!(good_event_frequency(std::iter::empty(), 3), 1.0);
    }

    #[test]
    fn double_run_is_reproducible() {
        let p = ModelParams::critical(50, 0.0).unwrap();
        let cfg = RunConfig { seed: 5, burn_in: 5, samples: 20, thinning: 2, double: true, ..RunConfig::default() };
        let a = run(&p, &SourceSet::first(1), cfg).unwrap();
        let b = run(&p, &SourceSet::first(1), cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 20);
        assert_eq!(a.samples[0].sweep, 7);
        let line = csv_row(&a.samples[0], 10);
        assert_eq!(line.split(',').count(), csv_header(1).split(',').count());
    }
}
