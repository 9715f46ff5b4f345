//! Backbone multigraphs: `2k` labelled sources of degree 1 and unlabelled internal
//! vertices of degree 4 (a loop counts twice), every component containing a source.
//!
//! Graphs are generated by growing from the sources one half-edge at a time, then
//! reduced to isomorphism classes (isomorphisms fix every source) by a canonical form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvenPartition, Partition};

/// A backbone multigraph with the metadata needed by the limit densities.
///
/// Vertices `1..=2k` are the sources, `2k+1..=v` the internal vertices. `edges` lists
/// `(u, w, multiplicity)` with `u <= w`; `u == w` is a loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackboneGraph {
    k: usize,
    v: usize,
    edges: Vec<(u32, u32, u32)>,
    component_partition: EvenPartition,
    l_per_component: Vec<usize>,
    loops: usize,
    aut: u64,
    edge_symmetry: u64,
    colorings: u64,
}

impl BackboneGraph {
    /// Builds a graph from an edge multiset, checking degrees and connectivity and
    /// filling in all metadata.
    pub fn from_edges(k: usize, v: usize, edge_list: &[(u32, u32)]) -> Result<Self> {
        let adj = Adjacency::from_edge_list(k, v, edge_list)?;
        adj.validate()?;
        Ok(adj.canonical().into_graph())
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn v(&self) -> usize {
        self.v
    }
    pub fn internal_vertices(&self) -> usize {
        self.v - 2 * self.k
    }
    pub fn edges(&self) -> &[(u32, u32, u32)] {
        &self.edges
    }
    /// Total number of edges `l` (each parallel copy and each loop counted once).
    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(|e| e.2 as usize).sum()
    }
    pub fn component_partition(&self) -> &EvenPartition {
        &self.component_partition
    }
    /// Edge count of the component containing each block, in block order.
    pub fn l_per_component(&self) -> &[usize] {
        &self.l_per_component
    }
    pub fn loop_count(&self) -> usize {
        self.loops
    }
    /// Vertex automorphisms fixing every source.
    pub fn automorphism_count(&self) -> u64 {
        self.aut
    }
    /// `prod mult! * prod loops_v!`: permutations of parallel edges and of loops at a vertex.
    pub fn edge_symmetry(&self) -> u64 {
        self.edge_symmetry
    }
    /// Red/blue colourings with red source edges and even red degree at internal vertices.
    pub fn coloring_count(&self) -> u64 {
        self.colorings
    }

    /// Weight of the graph in the single-current limit density:
    /// `1/(2^L |Aut| prod mult! prod loops_v!)`.
    pub fn single_prefactor(&self) -> f64 {
        1.0 / (2f64.powi(self.loops as i32) * self.aut as f64 * self.edge_symmetry as f64)
    }

    /// Weight in the double-current limit density: `C_G` times the single weight.
    pub fn double_prefactor(&self) -> f64 {
        self.colorings as f64 * self.single_prefactor()
    }

    /// `k=1;v=3;edges=1-3,2-3,3-3`, parallel edges repeated.
    pub fn canonical_string(&self) -> String {
        let mut parts = Vec::new();
        for &(u, w, m) in &self.edges {
            for _ in 0..m {
                parts.push(format!("{u}-{w}"));
            }
        }
        format!("k={};v={};edges={}", self.k, self.v, parts.join(","))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("bad backbone string {s:?}: {m}"));
        let mut k = None;
        let mut v = None;
        let mut edges = Vec::new();
        for field in s.split(';') {
            let (key, val) = field.split_once('=').ok_or_else(|| bad("missing '='"))?;
            match key {
                "k" => k = Some(val.parse::<usize>().map_err(|_| bad("k"))?),
                "v" => v = Some(val.parse::<usize>().map_err(|_| bad("v"))?),
                "edges" => {
                    for e in val.split(',').filter(|e| !e.is_empty()) {
                        let (a, b) = e.split_once('-').ok_or_else(|| bad("edge"))?;
                        edges.push((a.parse().map_err(|_| bad("edge"))?, b.parse().map_err(|_| bad("edge"))?));
                    }
                }
                _ => return Err(bad("unknown key")),
            }
        }
        Self::from_edges(k.ok_or_else(|| bad("k"))?, v.ok_or_else(|| bad("v"))?, &edges)
    }

    /// Metadata as JSON.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "graph": self.canonical_string(),
            "partition": self.component_partition.to_string(),
            "l_per_component": self.l_per_component,
            "loops": self.loops,
            "aut": self.aut,
            "edge_symmetry": self.edge_symmetry,
            "colorings": self.colorings,
        })
    }

    /// Multiplicity matrix over all `v` vertices (0-based), loops on the diagonal.
    pub fn multiplicity_matrix(&self) -> Vec<Vec<u32>> {
        let mut m = vec![vec![0u32; self.v]; self.v];
        for &(u, w, c) in &self.edges {
            let (a, b) = (u as usize - 1, w as usize - 1);
            m[a][b] += c;
            if a != b {
                m[b][a] += c;
            }
        }
        m
    }
}

impl fmt::Display for BackboneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

/// Symmetric multiplicity matrix, 0-based; `m[u][u]` is the loop count at `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Adjacency {
    k: usize,
    m: Vec<Vec<u8>>,
}

impl Adjacency {
    fn from_edge_list(k: usize, v: usize, edge_list: &[(u32, u32)]) -> Result<Self> {
        if v < 2 * k || k == 0 {
            return Err(Error::Invalid(format!("need k >= 1 and v >= 2k, got k={k}, v={v}")));
        }
        let mut m = vec![vec![0u8; v]; v];
        for &(a, b) in edge_list {
            if a == 0 || b == 0 || a as usize > v || b as usize > v {
                return Err(Error::Invalid(format!("edge {a}-{b} out of range 1..={v}")));
            }
            let (a, b) = (a as usize - 1, b as usize - 1);
            m[a][b] += 1;
            if a != b {
                m[b][a] += 1;
            }
        }
        Ok(Self { k, m })
    }

    fn v(&self) -> usize {
        self.m.len()
    }

    fn degree(&self, u: usize) -> usize {
        self.m[u].iter().map(|&x| x as usize).sum::<usize>() + self.m[u][u] as usize
    }

    fn validate(&self) -> Result<()> {
        for u in 0..self.v() {
            let want = if u < 2 * self.k { 1 } else { 4 };
            if self.degree(u) != want {
                return Err(Error::Invalid(format!("vertex {} has degree {}, expected {want}", u + 1, self.degree(u))));
            }
        }
        let mut uf = UnionFind::<usize>::new(self.v());
        for a in 0..self.v() {
            for b in a + 1..self.v() {
                if self.m[a][b] > 0 {
                    uf.union(a, b);
                }
            }
        }
        let source_roots: BTreeSet<usize> = (0..2 * self.k).map(|s| uf.find(s)).collect();
        if (0..self.v()).any(|u| !source_roots.contains(&uf.find(u))) {
            return Err(Error::Invalid("every component must contain a source".into()));
        }
        Ok(())
    }

    /// Colour refinement over internal vertices; sources keep distinct fixed colours.
    /// Returns colour ranks that depend only on the isomorphism class.
    fn refined_colors(&self) -> Vec<usize> {
        let v = self.v();
        let s = 2 * self.k;
        let mut color: Vec<usize> = (0..v).map(|u| if u < s { u } else { s }).collect();
        loop {
            let sigs: Vec<(usize, Vec<(usize, u8)>, u8)> = (0..v)
                .map(|u| {
                    let mut nb: Vec<(usize, u8)> =
                        (0..v).filter(|&w| w != u && self.m[u][w] > 0).map(|w| (color[w], self.m[u][w])).collect();
                    nb.sort_unstable();
                    (color[u], nb, self.m[u][u])
                })
                .collect();
            let distinct: BTreeSet<&(usize, Vec<(usize, u8)>, u8)> = sigs.iter().collect();
            let rank: BTreeMap<&(usize, Vec<(usize, u8)>, u8), usize> =
                distinct.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
            let next: Vec<usize> = sigs.iter().map(|s| rank[s]).collect();
            let classes = |c: &[usize]| c.iter().collect::<BTreeSet<_>>().len();
            if classes(&next) == classes(&color) {
                return next;
            }
            color = next;
        }
    }

    /// Internal-vertex orders consistent with the refined colours.
    fn candidate_orders(&self, visit: &mut dyn FnMut(&[usize])) {
        let s = 2 * self.k;
        let color = self.refined_colors();
        let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for u in s..self.v() {
            cells.entry(color[u]).or_default().push(u);
        }
        let cells: Vec<Vec<usize>> = cells.into_values().collect();
        let mut order: Vec<usize> = Vec::with_capacity(self.v() - s);
        fn rec_cells(cells: &[Vec<usize>], ci: usize, order: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
            if ci == cells.len() {
                visit(order);
                return;
            }
            let mut used = vec![false; cells[ci].len()];
            let mut local = Vec::new();
            permute(&cells[ci], &mut used, &mut local, &mut |perm| {
                let before = order.len();
                order.extend_from_slice(perm);
                rec_cells(cells, ci + 1, order, visit);
                order.truncate(before);
            });
        }
        rec_cells(&cells, 0, &mut order, visit);
    }

    fn relabel(&self, order: &[usize]) -> Adjacency {
        let s = 2 * self.k;
        let v = self.v();
        let mut map = vec![0usize; v];
        for (i, m) in map.iter_mut().enumerate().take(s) {
            *m = i;
        }
        for (pos, &u) in order.iter().enumerate() {
            map[u] = s + pos;
        }
        let mut m = vec![vec![0u8; v]; v];
        for a in 0..v {
            for b in 0..v {
                m[map[a]][map[b]] = self.m[a][b];
            }
        }
        Adjacency { k: self.k, m }
    }

    /// Sorted `(u, w, mult)` triples with `u <= w`, 1-based.
    fn edge_triples(&self) -> Vec<(u32, u32, u32)> {
        let mut out = Vec::new();
        for a in 0..self.v() {
            for b in a..self.v() {
                if self.m[a][b] > 0 {
                    out.push((a as u32 + 1, b as u32 + 1, self.m[a][b] as u32));
                }
            }
        }
        out
    }

    /// Minimal edge encoding over colour-consistent relabellings, and the number of
    /// relabellings attaining it (the source-fixing automorphism count).
    fn canonical(&self) -> Canonical {
        let mut best: Option<Vec<(u32, u32, u32)>> = None;
        let mut best_adj = self.clone();
        let mut count = 0u64;
        self.candidate_orders(&mut |order| {
            let r = self.relabel(order);
            let enc = r.edge_triples();
            match best.as_ref().map(|b| enc.cmp(b)) {
                None | Some(std::cmp::Ordering::Less) => {
                    best = Some(enc);
                    best_adj = r;
                    count = 1;
                }
                Some(std::cmp::Ordering::Equal) => count += 1,
                Some(std::cmp::Ordering::Greater) => {}
            }
        });
        Canonical { adj: best_adj, aut: count }
    }

    fn coloring_count(&self) -> u64 {
        let s = 2 * self.k;
        let v = self.v();
        // One unknown per non-source, non-loop edge copy; loops are always free.
        let mut rows: Vec<u64> = vec![0; v];
        let mut unknowns = 0usize;
        for a in s..v {
            for b in a + 1..v {
                for _ in 0..self.m[a][b] {
                    rows[a] |= 1 << unknowns;
                    rows[b] |= 1 << unknowns;
                    unknowns += 1;
                }
            }
        }
        let loops: usize = (s..v).map(|u| self.m[u][u] as usize).sum();
        let rank = gf2_rank(rows[s..].to_vec());
        1u64 << (unknowns - rank + loops)
    }
}

struct Canonical {
    adj: Adjacency,
    aut: u64,
}

impl Canonical {
    fn into_graph(self) -> BackboneGraph {
        let adj = self.adj;
        let (k, v) = (adj.k, adj.v());
        let s = 2 * k;
        let mut uf = UnionFind::<usize>::new(v);
        for a in 0..v {
            for b in a + 1..v {
                if adj.m[a][b] > 0 {
                    uf.union(a, b);
                }
            }
        }
        let labels: Vec<u8> = {
            let mut roots: Vec<usize> = Vec::new();
            (0..s)
                .map(|x| {
                    let r = uf.find(x);
                    let pos = roots.iter().position(|&y| y == r).unwrap_or_else(|| {
                        roots.push(r);
                        roots.len() - 1
                    });
                    pos as u8
                })
                .collect()
        };
        let ground: Vec<u32> = (1..=s as u32).collect();
        let partition = Partition::from_labels(&ground, &labels);
        let component_partition = EvenPartition::try_from(partition).expect("components of a backbone graph hold even source sets");
        let l_per_component = component_partition
            .blocks()
            .iter()
            .map(|block| {
                let root = uf.find(block[0] as usize - 1);
                let mut l = 0usize;
                for a in 0..v {
                    for b in a..v {
                        if adj.m[a][b] > 0 && uf.find(a) == root {
                            l += adj.m[a][b] as usize;
                        }
                    }
                }
                l
            })
            .collect();
        let loops = (0..v).map(|u| adj.m[u][u] as usize).sum();
        let factorial = |x: u8| (1..=x as u64).product::<u64>();
        let mut edge_symmetry = 1u64;
        for a in 0..v {
            for b in a..v {
                edge_symmetry *= factorial(adj.m[a][b]);
            }
        }
        let colorings = adj.coloring_count();
        BackboneGraph {
            k,
            v,
            edges: adj.edge_triples(),
            component_partition,
            l_per_component,
            loops,
            aut: self.aut,
            edge_symmetry,
            colorings,
        }
    }
}

fn permute(items: &[usize], used: &mut [bool], current: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if current.len() == items.len() {
        visit(current);
        return;
    }
    for i in 0..items.len() {
        if !used[i] {
            used[i] = true;
            current.push(items[i]);
            permute(items, used, current, visit);
            current.pop();
            used[i] = false;
        }
    }
}

/// Rank over GF(2) of rows given as bit masks.
pub fn gf2_rank(mut rows: Vec<u64>) -> usize {
    let mut rank = 0;
    for bit in 0..64 {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r] >> bit & 1 == 1) else {
            continue;
        };
        rows.swap(rank, pivot);
        let p = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row >> bit & 1 == 1 {
                *row ^= p;
            }
        }
        rank += 1;
    }
    rank
}

/// Number of source-fixing vertex automorphisms, by direct search over internal
/// vertex permutations preserving the multiplicity matrix.
pub fn automorphism_count(g: &BackboneGraph) -> u64 {
    let m = g.multiplicity_matrix();
    let s = 2 * g.k;
    let internal: Vec<usize> = (s..g.v).collect();
    let mut used = vec![false; internal.len()];
    let mut count = 0u64;
    permute(&internal, &mut used, &mut Vec::new(), &mut |perm| {
        let map = |u: usize| if u < s { u } else { perm[u - s] };
        if (0..g.v).all(|a| (0..g.v).all(|b| m[map(a)][map(b)] == m[a][b])) {
            count += 1;
        }
    });
    count
}

/// Colourings counted through the GF(2) solution space.
pub fn coloring_count(g: &BackboneGraph) -> u64 {
    let adj = Adjacency { k: g.k, m: g.multiplicity_matrix().into_iter().map(|r| r.into_iter().map(|x| x as u8).collect()).collect() };
    adj.coloring_count()
}

/// Growth state: multiplicity matrix and remaining half-edges per vertex.
struct Grower {
    k: usize,
    max_internal: usize,
    m: Vec<Vec<u8>>,
    free: Vec<u8>,
    /// Smallest partner allowed for the vertex currently being completed.
    floor: Vec<usize>,
}

impl Grower {
    fn run(&mut self, out: &mut BTreeSet<Vec<(u32, u32, u32)>>, seen_raw: &mut BTreeSet<Vec<Vec<u8>>>, sink: &mut Vec<Adjacency>) {
        let Some(u) = (0..self.free.len()).find(|&x| self.free[x] > 0) else {
            if seen_raw.insert(self.m.clone()) {
                let adj = Adjacency { k: self.k, m: self.m.clone() };
                let c = adj.canonical();
                let enc = c.adj.edge_triples();
                if out.insert(enc) {
                    sink.push(c.adj);
                }
            }
            return;
        };
        let nv = self.free.len();
        let lo = self.floor[u].max(u);
        for w in lo..nv {
            let ok = if w == u { self.free[u] >= 2 && u >= 2 * self.k } else { self.free[w] > 0 };
            if !ok {
                continue;
            }
            self.connect(u, w);
            let saved = self.floor[u];
            self.floor[u] = w;
            self.run(out, seen_raw, sink);
            self.floor[u] = saved;
            self.disconnect(u, w);
        }
        if nv - 2 * self.k < self.max_internal {
            let w = nv;
            for row in &mut self.m {
                row.push(0);
            }
            self.m.push(vec![0; nv + 1]);
            self.free.push(4);
            self.floor.push(0);
            self.connect(u, w);
            let saved = self.floor[u];
            self.floor[u] = w;
            self.run(out, seen_raw, sink);
            self.floor[u] = saved;
            self.disconnect(u, w);
            self.free.pop();
            self.floor.pop();
            self.m.pop();
            for row in &mut self.m {
                row.pop();
            }
        }
    }

    fn connect(&mut self, u: usize, w: usize) {
        self.m[u][w] += 1;
        if u != w {
            self.m[w][u] += 1;
            self.free[u] -= 1;
            self.free[w] -= 1;
        } else {
            self.free[u] -= 2;
        }
    }

    fn disconnect(&mut self, u: usize, w: usize) {
        self.m[u][w] -= 1;
        if u != w {
            self.m[w][u] -= 1;
            self.free[u] += 1;
            self.free[w] += 1;
        } else {
            self.free[u] += 2;
        }
    }
}

/// All isomorphism classes of backbone graphs with `k` source pairs and at most
/// `v_max` vertices, sorted by `(v, edge encoding)`.
pub fn enumerate_all(k: usize, v_max: usize) -> Result<Vec<BackboneGraph>> {
    if k == 0 {
        return Err(Error::InvalidParams("backbone graphs need k >= 1".into()));
    }
    if v_max < 2 * k {
        return Err(Error::InvalidParams(format!("v_max = {v_max} is below 2k = {}", 2 * k)));
    }
    let s = 2 * k;
    let mut grower = Grower {
        k,
        max_internal: v_max - s,
        m: vec![vec![0; s]; s],
        free: vec![1; s],
        floor: vec![0; s],
    };
    let mut seen = BTreeSet::new();
    let mut raw = BTreeSet::new();
    let mut sink = Vec::new();
    grower.run(&mut seen, &mut raw, &mut sink);
    let mut graphs: Vec<BackboneGraph> = sink.into_iter().map(|adj| Canonical { aut: adj.canonical().aut, adj }.into_graph()).collect();
    graphs.sort_by(|a, b| (a.v, &a.edges).cmp(&(b.v, &b.edges)));
    Ok(graphs)
}

/// Isomorphism classes inducing exactly the partition `p` of `{1..2k}`.
pub fn enumerate(k: usize, p: &EvenPartition, v_max: usize) -> Result<Vec<BackboneGraph>> {
    let ground: Vec<u32> = (1..=2 * k as u32).collect();
    if p.partition().ground() != ground {
        return Err(Error::Invalid(format!("{p} is not a partition of 1..={}", 2 * k)));
    }
    Ok(enumerate_all(k, v_max)?.into_iter().filter(|g| &g.component_partition == p).collect())
}
