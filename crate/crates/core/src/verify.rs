//! The acceptance suite: thirteen numbered criteria, each reduced to a list of checks with
//! a pass/fail verdict. Monte Carlo budgets scale with [`VerifyConfig::budget`].

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backbone::{enumerate_all, BackboneGraph};
use crate::error::{Error, Result};
use crate::exact::{
    enumerate_current_law, exact_correlation, exact_rho_tilde, ising_log_partition, magnetization_pmf, MeasureKind,
};
use crate::limit::{gs_limit_cdf, ln_sqrt_2pie, log_z_lambda, n_active_limit_moment, phi4_moment};
use crate::limit_law::LimitLaw;
use crate::model::{ClusterReport, EvenPartition, ModelParams, SourceSet};
use crate::numeric::ols_slope;
use crate::phi4::{
    ect_trend, rho_block_measure, switching_check, wick_check, BlockSpec, FiniteGraph, MomentFunction, Phi4Params,
    TanglingFunctional,
};
use crate::quad::QuadratureSpec;
use crate::sampler::{RunConfig, Sampler};
use crate::stats::{chi_square, integrated_autocorrelation, ks_distance, ks_distance_discrete};

/// Number of criteria in the suite.
pub const CRITERIA: u8 = 13;

const G_CRITICAL: f64 = 1.0 / 12.0;
const LAMBDAS: [f64; 3] = [-1.0, 0.0, 1.0];
const MIN_EXPECTED: f64 = 5.0;

/// Which criteria to run and how much Monte Carlo work to spend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Multiplier on every Monte Carlo sample count; 1 gives the stated sizes.
    pub budget: f64,
    /// Criteria to run; empty runs all of them.
    pub criteria: Vec<u8>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 20_261_014, budget: 1.0, criteria: Vec::new() }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::InvalidParams(format!("budget must be positive, got {}", self.budget)));
        }
        if let Some(&c) = self.criteria.iter().find(|&&c| c == 0 || c > CRITERIA) {
            return Err(Error::InvalidParams(format!("no criterion {c}; criteria are 1..={CRITERIA}")));
        }
        Ok(())
    }

    pub fn selected(&self) -> Vec<u8> {
        if self.criteria.is_empty() {
            (1..=CRITERIA).collect()
        } else {
            let mut c = self.criteria.clone();
            c.sort_unstable();
            c.dedup();
            c
        }
    }

    fn scaled(&self, samples: u64) -> u64 {
        ((samples as f64 * self.budget).round() as u64).max(50)
    }

    fn seed_for(&self, criterion: u8, cell: u64) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1000 * criterion as u64 + cell)
    }
}

/// One numeric check inside a criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    /// Human-readable requirement, e.g. `"> 0.01"`.
    pub requirement: String,
    pub passed: bool,
}

impl Check {
    fn new(label: impl Into<String>, value: f64, requirement: impl Into<String>, passed: bool) -> Self {
        Self { label: label.into(), value, requirement: requirement.into(), passed }
    }
    fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(label, value, format!("<= {bound:.3e}"), value <= bound)
    }
    fn at_least(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(label, value, format!("> {bound}"), value > bound)
    }
}

/// Verdict of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    /// Set when the criterion is known to fail at the stated sizes, with the reason.
    pub known_gap: Option<String>,
    pub checks: Vec<Check>,
    /// Sample counts and other run facts.
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// `PASS`/`FAIL` followed by the criterion number, title and check tally.
    pub fn line(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let mut s = format!(
            "{} {:>2} {} ({ok}/{} checks, {:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks.len(),
            self.seconds
        );
        if let Some(g) = &self.known_gap {
            s.push_str(&format!(" [known gap: {g}]"));
        }
        s
    }

    /// The line followed by every failing check.
    pub fn report(&self) -> String {
        let mut s = self.line();
        for c in self.checks.iter().filter(|c| !c.passed) {
            s.push_str(&format!("\n      {}: {:.6e} (needs {})", c.label, c.value, c.requirement));
        }
        s
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "sampler matches the exact current law",
        2 => "truncated vacuum partition function matches sector sums",
        3 => "finite-n tangling laws obey the switching relation",
        4 => "partition-function and magnetisation asymptotics",
        5 => "rescaled correlations converge to quartic moments",
        6 => "source cluster size law at n = 10^4",
        7 => "tangling law of four sources at n = 10^4",
        8 => "moments of the active-vertex count",
        9 => "scaling of open edges, source degrees and triple edges",
        10 => "backbone classes and colouring counts",
        11 => "Wick pairing sums",
        12 => "switching identity for tangled currents",
        13 => "tangling limits for small and large coupling",
        _ => "unknown",
    }
}

/// Criteria that fail at the stated sizes for reasons outside the implementation. A known gap
/// may still pass when its failure is a matter of sampling noise.
pub fn known_gap(id: u8) -> Option<&'static str> {
    match id {
        4 => Some("at lambda = -1 the n = 10^4 partition-function ratio is 0.9896, the finite-size correction still exceeds 1%"),
        5 => Some("at n = 2^14 the p = 4 gaps and the p = 2, lambda = -1 gap still exceed 0.02; they halve per factor 4 in n"),
        8 => Some("the exact n = 10^4 second moment at k = 0 is 1.5% below the limit, leaving 0.5% for a Monte Carlo error of about 1.7%"),
        _ => None,
    }
}

/// Runs one criterion.
pub fn run_criterion(id: u8, cfg: &VerifyConfig) -> Result<CriterionOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut notes = Vec::new();
    let checks = match id {
        1 => oracle_equivalence(cfg, &mut notes)?,
        2 => vacuum_partition_function()?,
        3 => finite_switching()?,
        4 => partition_asymptotics()?,
        5 => correlation_convergence()?,
        6 => cluster_size_law(cfg, &mut notes)?,
        7 => four_source_tanglings(cfg, &mut notes)?,
        8 => active_vertex_moments_mc(cfg, &mut notes)?,
        9 => scaling_trends(cfg, &mut notes)?,
        10 => backbone_cross_check()?,
        11 => wick_law()?,
        12 => switching_identity()?,
        13 => interpolation_limits(&mut notes)?,
        _ => return Err(Error::InvalidParams(format!("no criterion {id}"))),
    };
    if cfg.budget != 1.0 && matches!(id, 1 | 6 | 7 | 8 | 9) {
        notes.push(format!("Monte Carlo budget scaled by {}", cfg.budget));
    }
    Ok(CriterionOutcome {
        id,
        title: title(id).to_string(),
        passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
        known_gap: known_gap(id).map(str::to_string),
        checks,
        notes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the selected criteria in order, handing each outcome to `on_outcome` as it finishes.
pub fn run_suite(cfg: &VerifyConfig, mut on_outcome: impl FnMut(&CriterionOutcome)) -> Result<Vec<CriterionOutcome>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for id in cfg.selected() {
        let o = run_criterion(id, cfg)?;
        on_outcome(&o);
        out.push(o);
    }
    Ok(out)
}

fn sampler(p: &ModelParams, s: &SourceSet, double: bool, seed: u64, burn_in: u64, thinning: u64) -> Result<Sampler> {
    Sampler::new(p, s, RunConfig { seed, burn_in, samples: 1, thinning, double, ..RunConfig::default() })
}

/// Thinning of twice the largest integrated autocorrelation time (in sweeps) of the
/// observables over a pilot run.
fn pilot_thinning(sm: &mut Sampler, sweeps: usize, observables: &dyn Fn(&ClusterReport) -> Vec<f64>) -> (u64, f64) {
    let mut series: Vec<Vec<f64>> = Vec::new();
    for _ in 0..sweeps {
        sm.sweep();
        let obs = observables(&sm.report());
        series.resize(obs.len(), Vec::new());
        for (s, v) in series.iter_mut().zip(obs) {
            s.push(v);
        }
    }
    let tau = series.iter().map(|s| integrated_autocorrelation(s)).fold(1.0, f64::max);
    ((2.0 * tau).ceil() as u64, tau)
}

fn outcome_key(sizes: &[usize], partition: &str) -> (Vec<usize>, String) {
    (sizes.to_vec(), partition.to_string())
}

fn oracle_equivalence(cfg: &VerifyConfig, notes: &mut Vec<String>) -> Result<Vec<Check>> {
    let samples = cfg.scaled(1_000_000);
    let mut checks = Vec::new();
    let mut cell = 0;
    for n in [4usize, 5] {
        for k in [2usize, 1] {
            let s = SourceSet::first(k);
            for lambda in LAMBDAS {
                cell += 1;
                let p = ModelParams::critical(n, lambda)?;
                let law = enumerate_current_law(&p, &s, 8, MeasureKind::Single)?;
                let index: BTreeMap<(Vec<usize>, String), usize> = law
                    .support
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (outcome_key(&o.sizes, &o.partition.partition().canonical_string()), i))
                    .collect();
                let mut sm = sampler(&p, &s, false, cfg.seed_for(1, cell), 1000, 1)?;
                sm.burn_in();
                let watched: Vec<usize> = (0..law.support.len()).filter(|&i| law.probabilities[i] > 0.01).collect();
                let (thin, tau) = pilot_thinning(&mut sm, 20_000, &|r| {
                    let cell = index.get(&outcome_key(&r.sizes, &r.partition.canonical_string()));
                    let mut obs: Vec<f64> = watched.iter().map(|&i| f64::from(cell == Some(&i))).collect();
                    obs.push(r.n_open_edges as f64);
                    obs
                });
                let mut sm = sampler(&p, &s, false, cfg.seed_for(1, 100 + cell), 1000, thin)?;
                let mut counts = vec![0u64; law.support.len()];
                let mut outside = 0u64;
                for _ in 0..samples {
                    let r = sm.next_sample().report;
                    match index.get(&outcome_key(&r.sizes, &r.partition.canonical_string())) {
                        Some(&i) => counts[i] += 1,
                        None => outside += 1,
                    }
                }
                sm.check_sources()?;
                let label = format!("n={n} |S|={} lambda={lambda}", s.len());
                notes.push(format!("{label}: {samples} samples, thinning {thin} sweeps (tau {tau:.1})"));
                if outside > 0 {
                    checks.push(Check::new(format!("{label} samples outside the oracle support"), outside as f64, "= 0", false));
                    continue;
                }
                let chi = chi_square(&counts, &law.probabilities, MIN_EXPECTED)?;
                checks.push(Check::at_least(format!("{label} chi-square p ({} cells)", chi.cells), chi.p_value, 0.01));
            }
        }
    }
    Ok(checks)
}

fn vacuum_partition_function() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for n in 2..=5 {
        for lambda in LAMBDAS {
            let p = ModelParams::critical(n, lambda)?;
            let law = enumerate_current_law(&p, &SourceSet::empty(), 10, MeasureKind::Single)?;
            let z = (ising_log_partition(&p) - n as f64 * std::f64::consts::LN_2).exp();
            let defect = law.truncation.absolute_defect(&p, MeasureKind::Single) / z;
            let rel = (z - law.z_truncated).abs() / z;
            checks.push(Check::at_most(format!("n={n} lambda={lambda} relative gap"), rel, 1e-10 + defect));
        }
    }
    Ok(checks)
}

fn finite_switching() -> Result<Vec<Check>> {
    let (s1, s2) = (SourceSet::new(vec![1, 2])?, SourceSet::new(vec![3, 4])?);
    let s = s1.union(&s2);
    let mut checks = Vec::new();
    for n in [4usize, 5] {
        for lambda in LAMBDAS {
            let p = ModelParams::critical(n, lambda)?;
            let split = exact_rho_tilde(&p, &s1, &s2, 8)?;
            let joint = exact_rho_tilde(&p, &s, &SourceSet::empty(), 8)?;
            let ratio = exact_correlation(&p, 4)? / exact_correlation(&p, 2)?.powi(2);
            for part in &split.partitions {
                let lhs = split.probability(part);
                let rhs = ratio * joint.probability(part);
                let rel = (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE);
                checks.push(Check::at_most(
                    format!("n={n} lambda={lambda} P={}", part.partition().canonical_string()),
                    rel,
                    1e-10 + split.defect_bound + joint.defect_bound,
                ));
            }
        }
    }
    Ok(checks)
}

fn partition_asymptotics() -> Result<Vec<Check>> {
    let n = 10_000usize;
    let mut checks = Vec::new();
    for lambda in LAMBDAS {
        let p = ModelParams::critical(n, lambda)?;
        let ln_ratio = ising_log_partition(&p)
            - n as f64 * std::f64::consts::LN_2
            - 0.25 * (n as f64).ln()
            - log_z_lambda(lambda)
            + ln_sqrt_2pie();
        let r = ln_ratio.exp();
        checks.push(Check::new(format!("lambda={lambda} partition-function ratio"), r, "in [0.99, 1.01]", (0.99..=1.01).contains(&r)));
        let scale = (n as f64).powf(0.75);
        let atoms: Vec<(f64, f64)> = magnetization_pmf(&p).into_iter().map(|(m, q)| (m as f64 / scale, q)).collect();
        let ks = ks_distance_discrete(&atoms, |s| gs_limit_cdf(lambda, s));
        checks.push(Check::at_most(format!("lambda={lambda} magnetisation KS"), ks, 0.02));
    }
    Ok(checks)
}

fn correlation_convergence() -> Result<Vec<Check>> {
    let ns = [1usize << 8, 1 << 10, 1 << 12, 1 << 14];
    let mut checks = Vec::new();
    for p_order in [2usize, 4] {
        for lambda in LAMBDAS {
            let target = phi4_moment(G_CRITICAL, lambda / 2.0, p_order)?;
            let gaps: Vec<f64> = ns
                .iter()
                .map(|&n| {
                    let p = ModelParams::critical(n, lambda)?;
                    let scale = p.c_n() * n as f64;
                    Ok((scale.powi(p_order as i32) * exact_correlation(&p, p_order)? - target).abs())
                })
                .collect::<Result<_>>()?;
            let label = format!("p={p_order} lambda={lambda}");
            let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
            checks.push(Check::new(format!("{label} gaps decrease in n"), gaps[0] - gaps[3], "strictly decreasing", decreasing));
            checks.push(Check::at_most(format!("{label} gap at n=2^14"), gaps[3], 0.02));
        }
    }
    Ok(checks)
}

fn cluster_size_law(cfg: &VerifyConfig, notes: &mut Vec<String>) -> Result<Vec<Check>> {
    let n = 10_000usize;
    let samples = cfg.scaled(100_000);
    let thinning = 5;
    let p = ModelParams::critical(n, 0.0)?;
    let s = SourceSet::first(1);
    let root_n = (n as f64).sqrt();
    let mut checks = Vec::new();
    for (cell, kind) in [MeasureKind::Single, MeasureKind::Double].into_iter().enumerate() {
        let law = LimitLaw::new(1, 0.0, kind, None, QuadratureSpec::default())?;
        let mut sm = sampler(&p, &s, kind == MeasureKind::Double, cfg.seed_for(6, cell as u64), 2000, thinning)?;
        let xs: Vec<f64> = (0..samples).map(|_| sm.next_sample().report.sizes[0] as f64 / root_n).collect();
        sm.check_sources()?;
        let tau = integrated_autocorrelation(&xs);
        notes.push(format!("{kind:?}: {samples} samples every {thinning} sweeps, tau of the samples {tau:.1}"));
        let mut cdf_err = None;
        let ks = ks_distance(&xs, |t| {
            law.source_cluster_cdf(1, t).unwrap_or_else(|e| {
                cdf_err = Some(e);
                f64::NAN
            })
        })?;
        if let Some(e) = cdf_err {
            return Err(e);
        }
        checks.push(Check::at_most(format!("{kind:?} KS of |C_1|/sqrt(n)"), ks, 0.03));
    }
    Ok(checks)
}

fn four_source_tanglings(cfg: &VerifyConfig, notes: &mut Vec<String>) -> Result<Vec<Check>> {
    let n = 10_000usize;
    let samples = cfg.scaled(4_000);
    let s = SourceSet::first(2);
    let mut checks = Vec::new();
    for (cell, lambda) in [0.0, 1.0].into_iter().enumerate() {
        let law = LimitLaw::new(2, lambda, MeasureKind::Double, None, QuadratureSpec::default())?;
        let probs = law.partition_probabilities()?;
        let p = ModelParams::critical(n, lambda)?;
        let mut sm = sampler(&p, &s, true, cfg.seed_for(7, cell as u64), 2000, 1)?;
        sm.burn_in();
        let parts: Vec<EvenPartition> = probs.iter().map(|x| x.0.clone()).collect();
        let (thin, tau) = pilot_thinning(&mut sm, 5_000, &|r| {
            parts.iter().map(|q| if q.partition() == &r.partition { 1.0 } else { 0.0 }).collect()
        });
        let mut sm = sampler(&p, &s, true, cfg.seed_for(7, 10 + cell as u64), 2000, thin)?;
        let mut counts = vec![0u64; probs.len()];
        for _ in 0..samples {
            let r = sm.next_sample().report;
            let i = probs.iter().position(|(q, _)| q.partition() == &r.partition).ok_or_else(|| {
                Error::Invalid(format!("sampled partition {} is not an even partition of the sources", r.partition.canonical_string()))
            })?;
            counts[i] += 1;
        }
        sm.check_sources()?;
        notes.push(format!("lambda={lambda}: {samples} samples, thinning {thin} sweeps (tau {tau:.1})"));
        let expected: Vec<f64> = probs.iter().map(|x| x.1).collect();
        let chi = chi_square(&counts, &expected, MIN_EXPECTED)?;
        checks.push(Check::at_least(format!("lambda={lambda} chi-square p"), chi.p_value, 0.01));
        for ((q, pr), &c) in probs.iter().zip(&counts) {
            let support = *pr > 0.0 && c > 0;
            let label = format!("lambda={lambda} P={} theory and frequency", q.partition().canonical_string());
            checks.push(Check::new(label, pr.min(c as f64 / samples as f64), "> 0", support));
        }
    }
    Ok(checks)
}

fn active_vertex_moments_mc(cfg: &VerifyConfig, notes: &mut Vec<String>) -> Result<Vec<Check>> {
    let n = 10_000usize;
    let thinning = 10;
    let p = ModelParams::critical(n, 0.0)?;
    let scale = p.active_scale();
    let mut checks = Vec::new();
    for (k, base) in [(0usize, 120_000u64), (1, 50_000)] {
        let samples = cfg.scaled(base);
        let mut sm = sampler(&p, &SourceSet::first(k), false, cfg.seed_for(8, k as u64), 2000, thinning)?;
        let xs: Vec<f64> = (0..samples).map(|_| sm.next_sample().report.n_active as f64 / scale).collect();
        sm.check_sources()?;
        notes.push(format!("k={k}: {samples} samples every {thinning} sweeps, tau {:.1}", integrated_autocorrelation(&xs)));
        for r in [1usize, 2] {
            let emp = xs.iter().map(|x| x.powi(r as i32)).sum::<f64>() / xs.len() as f64;
            let lim = n_active_limit_moment(k, 0.0, G_CRITICAL, r)?;
            checks.push(Check::at_most(format!("k={k} r={r} relative error ({emp:.4} vs {lim:.4})"), (emp / lim - 1.0).abs(), 0.02));
        }
    }
    Ok(checks)
}

/// Expected number of edges of multiplicity at least three given the parity of every
/// edge: conditionally on the rest, each multiplicity is Poisson(`d`) restricted to its parity.
pub fn expected_triple_edges(report: &ClusterReport, n: usize, d: f64) -> f64 {
    let (odd_tail, even_tail) = parity_tails(d);
    let pairs = (n * (n - 1) / 2) as f64;
    report.odd_edges as f64 * odd_tail + (pairs - report.odd_edges as f64) * even_tail
}

/// `(P[N >= 3 | N odd], P[N >= 4 | N even])` for `N ~ Poisson(d)`, by series.
fn parity_tails(d: f64) -> (f64, f64) {
    let mut term = 1.0;
    let (mut odd, mut even, mut odd_tail, mut even_tail) = (0.0, 0.0, 0.0, 0.0);
    for m in 0..200u32 {
        if m > 0 {
            term *= d / m as f64;
        }
        if m % 2 == 1 {
            odd += term;
            if m >= 3 {
                odd_tail += term;
            }
        } else {
            even += term;
            if m >= 4 {
                even_tail += term;
            }
        }
        if m > 4 && term < 1e-30 * even {
            break;
        }
    }
    (odd_tail / odd, even_tail / even)
}

fn scaling_trends(cfg: &VerifyConfig, notes: &mut Vec<String>) -> Result<Vec<Check>> {
    let s = SourceSet::first(1);
    let mut ln_n = Vec::new();
    let (mut open, mut degree, mut triple) = (Vec::new(), Vec::new(), Vec::new());
    for (cell, (n, base)) in [(100usize, 200_000u64), (1_000, 100_000), (10_000, 200_000)].into_iter().enumerate() {
        let samples = cfg.scaled(base);
        let p = ModelParams::critical(n, 0.0)?;
        let mut sm = sampler(&p, &s, false, cfg.seed_for(9, cell as u64), 2000, 1)?;
        let (mut o, mut dg, mut t) = (0.0, 0u64, 0.0);
        for _ in 0..samples {
            let r = sm.next_sample().report;
            o += r.n_open_edges as f64;
            dg += u64::from(r.source_degrees[0] >= 2);
            t += expected_triple_edges(&r, n, p.d_n());
        }
        sm.check_sources()?;
        let m = samples as f64;
        notes.push(format!("n={n}: {samples} sweeps, open {:.3}, P[deg>=2] {:.5}, triple edges {:.4e}", o / m, dg as f64 / m, t / m));
        if dg == 0 {
            return Err(Error::Invalid(format!("no source of degree >= 2 observed at n={n}; raise the budget")));
        }
        ln_n.push((n as f64).ln());
        open.push((o / m).ln());
        degree.push((dg as f64 / m).ln());
        triple.push((t / m).ln());
    }
    let mut checks = Vec::new();
    for (label, ys, target) in [("open edges", &open, 0.5), ("P[source degree >= 2]", &degree, -0.5), ("triple edges", &triple, -1.5)] {
        let slope = ols_slope(&ln_n, ys);
        checks.push(Check::new(format!("{label} slope (target {target})"), slope, format!("within 0.2 of {target}"), (slope - target).abs() <= 0.2));
    }
    Ok(checks)
}

/// Edge lists of every loopless-or-looped multigraph on `1..=v` where the first `2k`
/// vertices have degree one and the rest degree four.
fn labelled_multigraphs(k: usize, v: usize) -> Vec<Vec<(u32, u32)>> {
    let pairs: Vec<(usize, usize)> = (0..v).flat_map(|a| (a..v).map(move |b| (a, b))).collect();
    let want: Vec<usize> = (0..v).map(|u| if u < 2 * k { 1 } else { 4 }).collect();
    let mut out = Vec::new();
    let mut deg = vec![0usize; v];
    let mut mult = vec![0usize; pairs.len()];
    fn rec(i: usize, pairs: &[(usize, usize)], want: &[usize], deg: &mut [usize], mult: &mut [usize], out: &mut Vec<Vec<(u32, u32)>>) {
        if i == pairs.len() {
            if deg == want {
                let mut e = Vec::new();
                for (p, &m) in pairs.iter().zip(mult.iter()) {
                    e.extend(std::iter::repeat((p.0 as u32 + 1, p.1 as u32 + 1)).take(m));
                }
                out.push(e);
            }
            return;
        }
        let (a, b) = pairs[i];
        let step = if a == b { 2 } else { 1 };
        let mut m = 0;
        while deg[a] + step * m <= want[a] && (a == b || deg[b] + m <= want[b]) {
            deg[a] += step * m;
            if a != b {
                deg[b] += m;
            }
            mult[i] = m;
            let last_for_a = pairs.get(i + 1).is_none_or(|p| p.0 != a);
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

/// Colourings of the edge instances with every source edge red and even red degree at
/// every internal vertex, by trying all subsets.
fn exhaustive_colourings(g: &BackboneGraph) -> u64 {
    let s = 2 * g.k() as u32;
    let instances: Vec<(u32, u32)> =
        g.edges().iter().flat_map(|&(u, w, m)| std::iter::repeat((u, w)).take(m as usize)).collect();
    let mut count = 0;
    for mask in 0u32..(1 << instances.len()) {
        let red = |i: usize| mask >> i & 1 == 1;
        if !instances.iter().enumerate().all(|(i, &(u, w))| red(i) || (u > s && w > s)) {
            continue;
        }
        let mut red_deg = vec![0u32; g.v() + 1];
        for (_, &(u, w)) in instances.iter().enumerate().filter(|&(i, _)| red(i)) {
            red_deg[u as usize] += 1;
            red_deg[w as usize] += 1;
        }
        if (s + 1..=g.v() as u32).all(|x| red_deg[x as usize] % 2 == 0) {
            count += 1;
        }
    }
    count
}

fn backbone_cross_check() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for v in 2..=4usize {
        let mut buckets: BTreeMap<String, u64> = BTreeMap::new();
        for edges in labelled_multigraphs(1, v) {
            if let Ok(g) = BackboneGraph::from_edges(1, v, &edges) {
                *buckets.entry(g.canonical_string()).or_insert(0) += 1;
            }
        }
        let classes: Vec<BackboneGraph> = enumerate_all(1, v)?.into_iter().filter(|g| g.v() == v).collect();
        let same = classes.len() == buckets.len();
        checks.push(Check::new(format!("v={v} class count"), classes.len() as f64, format!("= {}", buckets.len()), same));
        let factorial = |m: usize| (1..=m as u64).product::<u64>();
        let bad = classes
            .iter()
            .filter(|g| buckets.get(&g.canonical_string()).copied().unwrap_or(0) * g.automorphism_count() != factorial(v - 2))
            .count();
        checks.push(Check::new(format!("v={v} classes with wrong multiplicity"), bad as f64, "= 0", bad == 0));
    }
    let mut tested = 0usize;
    let mut bad = 0usize;
    for k in 1..=2 {
        for g in enumerate_all(k, 2 * k + 4)? {
            if g.edge_count() <= 10 {
                tested += 1;
                bad += usize::from(g.coloring_count() != exhaustive_colourings(&g));
            }
        }
    }
    checks.push(Check::new(format!("colouring mismatches among {tested} graphs"), bad as f64, "= 0", bad == 0 && tested > 0));
    Ok(checks)
}

/// Every simple graph on `n` labelled vertices.
fn labelled_graphs(n: usize) -> Result<Vec<FiniteGraph>> {
    let all: Vec<(usize, usize)> = (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect();
    (0u32..1 << all.len())
        .map(|mask| FiniteGraph::new(n, all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect()))
        .collect()
}

fn moment_functions(n: usize, max_total: u32) -> Vec<MomentFunction> {
    let mut out = Vec::new();
    let mut a = vec![0u32; n];
    loop {
        let t: u32 = a.iter().sum();
        if t % 2 == 0 {
            out.push(MomentFunction::new(a.clone()).expect("even total"));
        }
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            a[i] += 1;
            if a.iter().sum::<u32>() <= max_total {
                break;
            }
            a[i] = 0;
            i += 1;
        }
    }
}

fn wick_law() -> Result<Vec<Check>> {
    let (a, beta) = (1.0, 0.3);
    let mut checks = Vec::new();
    for n in 1..=4 {
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for g in labelled_graphs(n)? {
            for m in moment_functions(n, 6) {
                let w = wick_check(&g, a, beta, &m)?;
                let rel = (w.pairing_sum - w.direct_moment).abs() / w.direct_moment.abs().max(1e-300);
                worst = worst.max(if w.direct_moment == 0.0 { w.pairing_sum.abs() } else { rel });
                count += 1;
            }
        }
        checks.push(Check::at_most(format!("{n} vertices: worst relative gap over {count} cases"), worst, 1e-10));
    }
    Ok(checks)
}

fn switching_identity() -> Result<Vec<Check>> {
    let quad = QuadratureSpec::default();
    let beta = 0.3;
    let cases: Vec<(FiniteGraph, Vec<u32>, Vec<u32>)> = vec![
        (FiniteGraph::path(2)?, vec![1, 1], vec![1, 1]),
        (FiniteGraph::path(2)?, vec![2, 0], vec![0, 2]),
        (FiniteGraph::path(3)?, vec![1, 1, 0], vec![0, 1, 1]),
        (FiniteGraph::path(3)?, vec![1, 0, 1], vec![1, 0, 1]),
    ];
    let mut checks = Vec::new();
    for (g, a) in [(G_CRITICAL, 0.0), (1e-3, 1.0), (4.0, -8.0)] {
        let params = Phi4Params::new(g, a, beta)?;
        for (graph, first, second) in &cases {
            for functional in [TanglingFunctional::One, TanglingFunctional::SingleClassAt(0)] {
                let r = switching_check(
                    graph,
                    &MomentFunction::new(first.clone())?,
                    &MomentFunction::new(second.clone())?,
                    &params,
                    functional,
                    6,
                    &quad,
                )?;
                let label = format!("g={g:.4} a={a} {} vertices A={first:?} B={second:?} {functional:?} |lhs-rhs|", graph.vertex_count());
                checks.push(Check::at_most(label, r.discrepancy(), 10.0 * r.defect_bound));
            }
        }
    }
    Ok(checks)
}

fn interpolation_limits(notes: &mut Vec<String>) -> Result<Vec<Check>> {
    let quad = QuadratureSpec::default();
    let mut checks = Vec::new();
    let specs = [BlockSpec::new(4, 0, 0, 0), BlockSpec::new(2, 0, 2, 0), BlockSpec::new(2, 0, 4, 0), BlockSpec::new(6, 0, 0, 0)];
    let a = 1.0;
    for spec in &specs {
        let tv: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&g| Ok(rho_block_measure(spec, crate::model::lambda_from_a(g, a), &quad)?.tv_to_uniform_pairings()))
            .collect::<Result<_>>()?;
        let label = format!("block {}+{}", spec.first_size(), spec.second_size());
        checks.push(Check::at_most(format!("{label} TV to uniform pairings at g=1e-3"), tv[2], 0.05));
        checks.push(Check::new(format!("{label} TV decreases as g falls"), tv[0] - tv[2], "strictly decreasing", tv[0] > tv[1] && tv[1] > tv[2]));
    }
    for spec in &specs {
        let trend = ect_trend(&[1.0, 4.0, 16.0], spec, &quad)?;
        let label = format!("block {}+{}", spec.first_size(), spec.second_size());
        let monotone = trend.windows(2).all(|w| w[1].1 > w[0].1);
        checks.push(Check::new(format!("{label} ECT increases over g in {{1, 4, 16}}"), trend[2].1 - trend[0].1, "strictly increasing", monotone));
        if spec.size() == 4 {
            checks.push(Check::at_least(format!("{label} ECT at g=16"), trend[2].1, 0.95));
        } else {
            notes.push(format!("{label} ECT at g = 1, 4, 16: {:.4}, {:.4}, {:.4}", trend[0].1, trend[1].1, trend[2].1));
        }
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_tails_match_closed_forms() {
        let d: f64 = 0.3;
        let (odd, even) = parity_tails(d);
        assert!((odd - (1.0 - d / d.sinh())).abs() < 1e-14);
        assert!((even - (1.0 - (1.0 + d * d / 2.0) / d.cosh())).abs() < 1e-14);
        let (odd, _) = parity_tails(1e-4);
        assert!((odd / (1e-8 / 6.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn moment_function_enumeration() {
        // Even totals at most 2 on two vertices: 00, 20, 11, 02.
        assert_eq!(moment_functions(2, 2).len(), 4);
        assert_eq!(labelled_graphs(3).unwrap().len(), 8);
    }

    #[test]
    fn config_validation() {
        assert!(VerifyConfig { criteria: vec![14], ..Default::default() }.validate().is_err());
        assert!(VerifyConfig { budget: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(VerifyConfig { criteria: vec![3, 2, 3], ..Default::default() }.selected(), vec![2, 3]);
    }

    #[test]
    fn exact_criteria_pass() {
        for id in [2, 3, 11] {
            let o = run_criterion(id, &VerifyConfig::default()).unwrap();
            assert!(o.passed, "{}", o.report());
        }
    }
}
