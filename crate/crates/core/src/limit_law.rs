//! Limiting joint law of the rescaled source-cluster sizes and the induced partition,
//! as a finite sum over backbone graphs normalised by its own total mass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneGraph;
use crate::error::{Error, Result};
use crate::exact::MeasureKind;
use crate::limit::{box_cutoff, MassKernel};
use crate::model::EvenPartition;
use crate::numeric::{compensated_sum, log_sum_exp};
use crate::quad::{Estimate, QuadratureSpec};
use crate::series::BackboneSeries;

/// Relative size of the last vertex shell below which the automatic backbone
/// truncation stops growing.
pub const SHELL_TOLERANCE: f64 = 1e-4;

/// A box probability request. Upper bounds may be `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitDensityQuery {
    pub k: usize,
    pub lambda: f64,
    pub g: f64,
    pub partition: EvenPartition,
    #[serde(with = "bounds_serde")]
    pub bounds: Vec<(f64, f64)>,
    pub kind: MeasureKind,
    pub v_max: Option<usize>,
}

impl LimitDensityQuery {
    /// Probability of the partition itself: every box is `[0, inf)`.
    pub fn partition_only(k: usize, lambda: f64, g: f64, partition: EvenPartition, kind: MeasureKind) -> Self {
        let bounds = vec![(0.0, f64::INFINITY); partition.blocks().len()];
        Self { k, lambda, g, partition, bounds, kind, v_max: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("limit densities need k >= 1".into()));
        }
        if !(self.g > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParams(format!("need g > 0 and finite lambda, got g={}, lambda={}", self.g, self.lambda)));
        }
        if let Some(v) = self.v_max {
            if v < 2 * self.k {
                return Err(Error::InvalidParams(format!("v_max = {v} is below 2k = {}", 2 * self.k)));
            }
        }
        let ground: Vec<u32> = (1..=2 * self.k as u32).collect();
        if self.partition.partition().ground() != ground {
            return Err(Error::Invalid(format!("{} is not a partition of 1..={}", self.partition, 2 * self.k)));
        }
        if self.bounds.len() != self.partition.blocks().len() {
            return Err(Error::Invalid(format!(
                "{} box intervals given for {} blocks",
                self.bounds.len(),
                self.partition.blocks().len()
            )));
        }
        for &(a, b) in &self.bounds {
            if a.is_nan() || b.is_nan() || a < 0.0 || b < a {
                return Err(Error::Invalid(format!("invalid box interval [{a}, {b}]")));
            }
        }
        Ok(())
    }
}

/// Answer to a [`LimitDensityQuery`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitDensityResult {
    pub query: LimitDensityQuery,
    pub value: f64,
    pub abs_err_estimate: f64,
    pub v_max_used: usize,
    /// Share of the normalising mass contributed by graphs with exactly `v_max_used` vertices.
    pub last_shell_mass: f64,
}

mod bounds_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(bounds: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(f64, Option<f64>)> = bounds.iter().map(|&(a, b)| (a, b.is_finite().then_some(b))).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        let v: Vec<(f64, Option<f64>)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(a, b)| (a, b.unwrap_or(f64::INFINITY))).collect())
    }
}

fn prefactor(g: &BackboneGraph, kind: MeasureKind) -> f64 {
    match kind {
        MeasureKind::Single => g.single_prefactor(),
        MeasureKind::Double => g.double_prefactor(),
    }
}

fn graph_mass(g: &BackboneGraph, lambda: f64, bounds: &[(f64, f64)], kind: MeasureKind, spec: &QuadratureSpec) -> Result<Estimate> {
    if bounds.len() != g.l_per_component().len() {
        return Err(Error::Invalid(format!("{} has {} components, got {} intervals", g, g.l_per_component().len(), bounds.len())));
    }
    let kernel = MassKernel::new(lambda, kind);
    let w = prefactor(g, kind);
    let e = kernel.box_integral(g.l_per_component(), bounds, spec)?;
    Ok(Estimate { value: w * e.value, abs_err: w * e.abs_err })
}

/// Unnormalised single-current mass of one backbone graph over a box (one interval
/// per component, in block order).
pub fn single_mass(g: &BackboneGraph, lambda: f64, bounds: &[(f64, f64)], spec: &QuadratureSpec) -> Result<Estimate> {
    graph_mass(g, lambda, bounds, MeasureKind::Single, spec)
}

/// Unnormalised double-current mass of one backbone graph over a box.
pub fn double_mass(g: &BackboneGraph, lambda: f64, bounds: &[(f64, f64)], spec: &QuadratureSpec) -> Result<Estimate> {
    graph_mass(g, lambda, bounds, MeasureKind::Double, spec)
}

/// Largest internal-vertex count the automatic truncation will reach.
pub const MAX_INTERNAL_VERTICES: usize = 512;

/// Terms below this fraction of the total are skipped in box sums.
const NEGLIGIBLE: f64 = 1e-18;

/// Normalised backbone sum for fixed `(k, lambda, kind)`.
///
/// The mass of a backbone graph over a box depends only on its component structure:
/// the source block and internal-vertex count `j_C` of each component. Graph weights
/// summed over isomorphism classes come from [`BackboneSeries`], so the sum over all
/// graphs with at most `v_max` vertices is a sum over partitions and `j`-vectors.
#[derive(Debug, Clone)]
pub struct LimitLaw {
    k: usize,
    lambda: f64,
    kind: MeasureKind,
    spec: QuadratureSpec,
    kernel: MassKernel,
    series: BackboneSeries,
    j_used: usize,
    /// `ln` full-box mass per total edge count `k + 2j`, indexed by `j`.
    ln_full: Vec<(f64, f64)>,
    /// Per block-size shape, `ln` of the summed weights of `j`-vectors with total `j`.
    shape_weights: BTreeMap<Vec<usize>, Vec<f64>>,
    total: f64,
    last_shell_mass: f64,
}

fn shape_of(p: &EvenPartition) -> Vec<usize> {
    let mut s: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
    s.sort_unstable();
    s
}

/// Log-domain convolution of two non-negative sequences given by their logarithms.
fn ln_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    (0..n).map(|j| log_sum_exp((0..=j).map(|i| a[i] + b[j - i]))).collect()
}

impl LimitLaw {
    /// With `v_max = None` the sum grows one internal vertex at a time until the newest
    /// shell is decreasing and carries less than [`SHELL_TOLERANCE`] of the running total.
    pub fn new(k: usize, lambda: f64, kind: MeasureKind, v_max: Option<usize>, spec: QuadratureSpec) -> Result<Self> {
        Self::with_shell_tolerance(k, lambda, kind, v_max, SHELL_TOLERANCE, spec)
    }

    /// As [`LimitLaw::new`] with a custom relative shell size for the automatic truncation.
    pub fn with_shell_tolerance(
        k: usize,
        lambda: f64,
        kind: MeasureKind,
        v_max: Option<usize>,
        shell_tolerance: f64,
        spec: QuadratureSpec,
    ) -> Result<Self> {
        if !(shell_tolerance > 0.0) {
            return Err(Error::InvalidParams(format!("shell tolerance must be positive, got {shell_tolerance}")));
        }
        if k == 0 {
            return Err(Error::InvalidParams("limit densities need k >= 1".into()));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParams(format!("lambda must be finite, got {lambda}")));
        }
        let mut j_max = match v_max {
            Some(v) if v < 2 * k => return Err(Error::InvalidParams(format!("v_max = {v} is below 2k = {}", 2 * k))),
            Some(v) => v - 2 * k,
            None => 32,
        };
        loop {
            let law = Self::build(k, lambda, kind, j_max, v_max.is_some(), shell_tolerance, spec);
            if v_max.is_some() || law.j_used < j_max || j_max >= MAX_INTERNAL_VERTICES {
                return Ok(law);
            }
            j_max = (2 * j_max).min(MAX_INTERNAL_VERTICES);
        }
    }

    fn build(k: usize, lambda: f64, kind: MeasureKind, j_max: usize, fixed: bool, tol: f64, spec: QuadratureSpec) -> Self {
        let series = BackboneSeries::new(k, j_max, kind);
        let l_max = (k + 2 * j_max) as f64;
        let x_max = (3.0 * box_cutoff(lambda)).max(l_max.sqrt() + lambda.abs() + 30.0);
        let kernel = MassKernel::with_range(lambda, kind, x_max);
        let ln_full: Vec<(f64, f64)> = (0..=j_max).map(|j| kernel.ln_full_box(k + 2 * j, &spec)).collect();
        let ground: Vec<u32> = (1..=2 * k as u32).collect();
        let mut shape_counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for p in EvenPartition::enumerate(&ground) {
            *shape_counts.entry(shape_of(&p)).or_insert(0) += 1;
        }
        let mut shape_weights = BTreeMap::new();
        for shape in shape_counts.keys() {
            let mut acc: Vec<f64> = (0..=j_max).map(|j| series.ln_weight(shape[0], j)).collect();
            for &b in &shape[1..] {
                let next: Vec<f64> = (0..=j_max).map(|j| series.ln_weight(b, j)).collect();
                acc = ln_convolve(&acc, &next);
            }
            shape_weights.insert(shape.clone(), acc);
        }
        let shells: Vec<f64> = (0..=j_max)
            .map(|j| {
                compensated_sum(shape_counts.iter().map(|(s, &c)| c as f64 * (shape_weights[s][j] + ln_full[j].0).exp()))
            })
            .collect();
        let mut running = 0.0;
        let mut j_used = j_max;
        for j in 0..=j_max {
            running += shells[j];
            if !fixed && j >= 1 && shells[j] <= shells[j - 1] && shells[j] < tol * running {
                j_used = j;
                break;
            }
        }
        let total = compensated_sum(shells[..=j_used].iter().copied());
        Self {
            k,
            lambda,
            kind,
            spec,
            kernel,
            series,
            j_used,
            ln_full,
            shape_weights,
            total,
            last_shell_mass: shells[j_used] / total,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn kind(&self) -> MeasureKind {
        self.kind
    }
    pub fn v_max_used(&self) -> usize {
        2 * self.k + self.j_used
    }
    pub fn last_shell_mass(&self) -> f64 {
        self.last_shell_mass
    }
    /// Unnormalised total mass of all graphs up to `v_max_used` vertices over full boxes.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    fn check_partition(&self, p: &EvenPartition, bounds: &[(f64, f64)]) -> Result<()> {
        let ground: Vec<u32> = (1..=2 * self.k as u32).collect();
        if p.partition().ground() != ground {
            return Err(Error::Invalid(format!("{p} is not a partition of 1..={}", 2 * self.k)));
        }
        if bounds.len() != p.blocks().len() {
            return Err(Error::Invalid(format!("{} box intervals given for {} blocks", bounds.len(), p.blocks().len())));
        }
        for &(a, b) in bounds {
            if a.is_nan() || b.is_nan() || a < 0.0 || b < a {
                return Err(Error::Invalid(format!("invalid box interval [{a}, {b}]")));
            }
        }
        Ok(())
    }

    /// Probability that the partition is `p` and each block's rescaled cluster size
    /// lies in its interval.
    pub fn probability(&self, p: &EvenPartition, bounds: &[(f64, f64)]) -> Result<Estimate> {
        self.check_partition(p, bounds)?;
        if bounds.iter().all(|&(a, b)| a == 0.0 && b == f64::INFINITY) {
            // The Dirichlet integral reduces a full box to the total edge count.
            let w = &self.shape_weights[&shape_of(p)];
            let terms: Vec<f64> = (0..=self.j_used).map(|j| (w[j] + self.ln_full[j].0).exp()).collect();
            let err: f64 = (0..=self.j_used).map(|j| terms[j] * self.ln_full[j].1).sum();
            return Ok(Estimate { value: compensated_sum(terms) / self.total, abs_err: err / self.total });
        }
        let sizes: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
        let mut values = Vec::new();
        let mut errs = Vec::new();
        let mut js = vec![0usize; sizes.len()];
        loop {
            let jt: usize = js.iter().sum();
            if jt <= self.j_used {
                let ln_w: f64 = sizes.iter().zip(&js).map(|(&b, &j)| self.series.ln_weight(b, j)).sum();
                let upper = (ln_w + self.ln_full[jt].0).exp();
                if upper > NEGLIGIBLE * self.total {
                    let ells: Vec<usize> = sizes.iter().zip(&js).map(|(&b, &j)| b / 2 + 2 * j).collect();
                    // The absolute tolerance applies to this term's share of the probability.
                    let spec = QuadratureSpec { abs_tol: self.spec.abs_tol * self.total / ln_w.exp(), ..self.spec };
                    let e = self.kernel.box_integral(&ells, bounds, &spec)?;
                    values.push(ln_w.exp() * e.value);
                    errs.push(ln_w.exp() * e.abs_err);
                }
            }
            // Next j-vector with total at most j_used.
            let mut i = 0;
            loop {
                if i == js.len() {
                    return Ok(Estimate {
                        value: compensated_sum(values) / self.total,
                        abs_err: errs.iter().sum::<f64>() / self.total,
                    });
                }
                js[i] += 1;
                if js.iter().sum::<usize>() <= self.j_used {
                    break;
                }
                js[i] = 0;
                i += 1;
            }
        }
    }

    /// Probabilities of every even partition of `1..=2k`.
    pub fn partition_probabilities(&self) -> Result<Vec<(EvenPartition, f64)>> {
        let ground: Vec<u32> = (1..=2 * self.k as u32).collect();
        EvenPartition::enumerate(&ground)
            .into_iter()
            .map(|p| {
                let bounds = vec![(0.0, f64::INFINITY); p.blocks().len()];
                let v = self.probability(&p, &bounds)?.value;
                Ok((p, v))
            })
            .collect()
    }

    /// `P[Y_i <= t]` for the rescaled size of the cluster of source `i`, summing over
    /// partitions with the block of `i` restricted to `[0, t]`.
    pub fn source_cluster_cdf(&self, source: u32, t: f64) -> Result<f64> {
        if source == 0 || source as usize > 2 * self.k {
            return Err(Error::VertexOutOfRange { vertex: source, n: 2 * self.k });
        }
        let ground: Vec<u32> = (1..=2 * self.k as u32).collect();
        let mut total = Vec::new();
        for p in EvenPartition::enumerate(&ground) {
            let bounds: Vec<(f64, f64)> =
                p.blocks().iter().map(|b| if b.contains(&source) { (0.0, t.max(0.0)) } else { (0.0, f64::INFINITY) }).collect();
            total.push(self.probability(&p, &bounds)?.value);
        }
        Ok(compensated_sum(total).min(1.0))
    }
}

/// Evaluates a query from scratch.
pub fn limit_law(query: &LimitDensityQuery, spec: &QuadratureSpec) -> Result<LimitDensityResult> {
    query.validate()?;
    let law = LimitLaw::new(query.k, query.lambda, query.kind, query.v_max, *spec)?;
    let est = law.probability(&query.partition, &query.bounds)?;
    Ok(LimitDensityResult {
        query: query.clone(),
        value: est.value,
        abs_err_estimate: est.abs_err,
        v_max_used: law.v_max_used(),
        last_shell_mass: law.last_shell_mass(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn k1_single_partition_is_certain() {
        let q = LimitDensityQuery::partition_only(1, 0.0, 1.0 / 12.0, EvenPartition::new(vec![vec![1, 2]]).unwrap(), MeasureKind::Single);
        let r = limit_law(&q, &spec()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-13);
        assert!(r.v_max_used > 2);
        assert!(r.last_shell_mass > 0.0 && r.last_shell_mass < SHELL_TOLERANCE);
    }

    #[test]
    fn k2_partitions_sum_to_one_and_are_positive() {
        for kind in [MeasureKind::Single, MeasureKind::Double] {
            let law = LimitLaw::new(2, 0.5, kind, Some(7), spec()).unwrap();
            let probs = law.partition_probabilities().unwrap();
            assert_eq!(probs.len(), 4);
            assert!((probs.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(probs.iter().all(|x| x.1 > 0.0));
        }
    }

    #[test]
    fn explicit_full_box_agrees_with_dirichlet_reduction() {
        let law = LimitLaw::new(2, 0.0, MeasureKind::Double, Some(6), spec()).unwrap();
        let p = EvenPartition::new(vec![vec![1, 2], vec![3, 4]]).unwrap();
        let full = law.probability(&p, &[(0.0, f64::INFINITY), (0.0, f64::INFINITY)]).unwrap().value;
        let boxed = law.probability(&p, &[(0.0, 1e3), (0.0, 1e3)]).unwrap().value;
        assert!((full - boxed).abs() < 1e-9 * full);
    }

    #[test]
    fn degenerate_and_shrinking_boxes() {
        let law = LimitLaw::new(1, 0.0, MeasureKind::Single, Some(6), spec()).unwrap();
        let p = EvenPartition::new(vec![vec![1, 2]]).unwrap();
        assert_eq!(law.probability(&p, &[(0.7, 0.7)]).unwrap().value, 0.0);
        let mut prev = 1.0;
        for b in [2.0, 1.0, 0.1, 0.01] {
            let v = law.probability(&p, &[(0.0, b)]).unwrap().value;
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn cdf_increasing() {
        let law = LimitLaw::new(1, 0.0, MeasureKind::Double, Some(5), spec()).unwrap();
        let mut prev = 0.0;
        for t in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let c = law.source_cluster_cdf(1, t).unwrap();
            assert!(c > prev);
            prev = c;
        }
        assert!((law.source_cluster_cdf(1, 50.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_queries() {
        let p = EvenPartition::new(vec![vec![1, 2]]).unwrap();
        let mut q = LimitDensityQuery::partition_only(1, 0.0, 1.0 / 12.0, p, MeasureKind::Single);
        q.v_max = Some(1);
        assert!(limit_law(&q, &spec()).is_err());
        q.v_max = None;
        q.bounds = vec![(1.0, 0.5)];
        assert!(limit_law(&q, &spec()).is_err());
        assert!(LimitLaw::new(0, 0.0, MeasureKind::Single, None, spec()).is_err());
    }

    #[test]
    fn result_json_round_trip() {
        let p = EvenPartition::new(vec![vec![1, 2]]).unwrap();
        let mut q = LimitDensityQuery::partition_only(1, 0.0, 1.0 / 12.0, p, MeasureKind::Single);
        q.v_max = Some(4);
        let r = limit_law(&q, &spec()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"v_max_used\":4"));
        let back: LimitDensityResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back.query.bounds[0].1, f64::INFINITY);
    }
}
