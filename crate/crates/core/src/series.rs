//! Backbone weights from the configuration model.
//!
//! For a component whose sources form a set of size `2m` and which has `j` internal
//! vertices, the sum of `1/(2^L |Aut| prod mult! prod loops_v!)` over isomorphism
//! classes equals `F_{2m}(j)/(24^j j!)`, where `F_{2m}(j)` counts perfect matchings of
//! the half-edges (one per source, four per labelled internal vertex) whose graph is
//! connected. In the double kind each matching is also weighted by its number of
//! admissible red/blue colourings.
//!
//! `F` is obtained exactly in integers: all matchings, divided by the sourceless ones
//! as exponential generating functions, then a Möbius step over the block containing
//! the first source.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::exact::MeasureKind;
use crate::numeric::ln_bigint;

/// Connected-component weights for source blocks of size `2, 4, ..., 2 m_max` and up to
/// `j_max` internal vertices.
#[derive(Debug, Clone)]
pub struct BackboneSeries {
    kind: MeasureKind,
    j_max: usize,
    connected: Vec<Vec<BigInt>>,
    ln_weight: Vec<Vec<f64>>,
}

fn double_factorials(max_odd_arg: usize) -> Vec<BigInt> {
    // df[i] = (2i - 1)!!, with df[0] = 1.
    let mut df = Vec::with_capacity(max_odd_arg + 1);
    df.push(BigInt::one());
    for i in 1..=max_odd_arg {
        let next = &df[i - 1] * BigInt::from(2 * i - 1);
        df.push(next);
    }
    df
}

/// Exponential (binomial) convolution of two coefficient sequences.
fn egf_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let n = a.len().min(b.len());
    let mut out = vec![BigInt::zero(); n];
    let mut row = vec![BigInt::one()];
    for (j, o) in out.iter_mut().enumerate() {
        if j > 0 {
            let mut next = vec![BigInt::one(); j + 1];
            for i in 1..j {
                next[i] = &row[i - 1] + &row[i];
            }
            row = next;
        }
        let mut s = BigInt::zero();
        for i in 0..=j {
            if !a[i].is_zero() && !b[j - i].is_zero() {
                s += &row[i] * &a[i] * &b[j - i];
            }
        }
        *o = s;
    }
    out
}

/// `a / v` for exponential generating functions with `v[0] = 1`.
fn egf_div(a: &[BigInt], v: &[BigInt]) -> Vec<BigInt> {
    assert!(v[0].is_one());
    let n = a.len().min(v.len());
    let mut q: Vec<BigInt> = Vec::with_capacity(n);
    let mut row = vec![BigInt::one()];
    for j in 0..n {
        if j > 0 {
            let mut next = vec![BigInt::one(); j + 1];
            for i in 1..j {
                next[i] = &row[i - 1] + &row[i];
            }
            row = next;
        }
        let mut s = a[j].clone();
        for (i, qi) in q.iter().enumerate() {
            s -= &row[i] * qi * &v[j - i];
        }
        q.push(s);
    }
    q
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

impl BackboneSeries {
    pub fn new(m_max: usize, j_max: usize, kind: MeasureKind) -> Self {
        let len = j_max + 1;
        let df = double_factorials(m_max + 2 * j_max + 1);
        // all[m][j]: matchings (colourings included) of 2m sources and j internal vertices.
        let all: Vec<Vec<BigInt>> = match kind {
            MeasureKind::Single => (0..=m_max).map(|m| (0..len).map(|j| df[m + 2 * j].clone()).collect()).collect(),
            MeasureKind::Double => {
                // Coefficients of (1 + 6z + z^2)^j, z marking pairs of blue half-edges.
                let mut poly = vec![BigInt::one()];
                let mut all = vec![Vec::with_capacity(len); m_max + 1];
                for j in 0..len {
                    if j > 0 {
                        let mut next = vec![BigInt::zero(); poly.len() + 2];
                        for (i, c) in poly.iter().enumerate() {
                            next[i] += c;
                            next[i + 1] += c * BigInt::from(6);
                            next[i + 2] += c;
                        }
                        poly = next;
                    }
                    for (m, row) in all.iter_mut().enumerate() {
                        // 2i blue half-edges, 2m + 4j - 2i red ones.
                        let mut s = BigInt::zero();
                        for (i, c) in poly.iter().enumerate() {
                            s += c * &df[i] * &df[m + 2 * j - i];
                        }
                        row.push(s);
                    }
                }
                all
            }
        };
        let quotient: Vec<Vec<BigInt>> = all.iter().map(|a| egf_div(a, &all[0])).collect();
        let mut connected: Vec<Vec<BigInt>> = vec![Vec::new(); m_max + 1];
        for m in 1..=m_max {
            let mut f = quotient[m].clone();
            for c in 1..m {
                let coef = binomial(2 * m - 1, 2 * c - 1);
                let prod = egf_mul(&connected[c], &quotient[m - c]);
                for (fj, pj) in f.iter_mut().zip(prod) {
                    *fj -= &coef * pj;
                }
            }
            debug_assert!(f.iter().all(|x| x >= &BigInt::zero()));
            connected[m] = f;
        }
        let ln24 = 24f64.ln();
        let mut ln_fact = vec![0.0f64; len];
        for j in 1..len {
            ln_fact[j] = ln_fact[j - 1] + (j as f64).ln();
        }
        let ln_weight = connected
            .iter()
            .map(|row| row.iter().enumerate().map(|(j, c)| ln_bigint(c) - j as f64 * ln24 - ln_fact[j]).collect())
            .collect();
        Self { kind, j_max, connected, ln_weight }
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }
    pub fn j_max(&self) -> usize {
        self.j_max
    }
    pub fn max_block(&self) -> usize {
        2 * (self.connected.len() - 1)
    }

    /// Connected labelled count `F_{block}(j)`.
    pub fn connected_count(&self, block: usize, j: usize) -> &BigInt {
        assert!(block % 2 == 0 && block >= 2 && block <= self.max_block() && j <= self.j_max);
        &self.connected[block / 2][j]
    }

    /// `ln(F_{block}(j) / (24^j j!))`; `-inf` when no connected graph exists.
    pub fn ln_weight(&self, block: usize, j: usize) -> f64 {
        assert!(block % 2 == 0 && block >= 2 && block <= self.max_block() && j <= self.j_max);
        self.ln_weight[block / 2][j]
    }
}
