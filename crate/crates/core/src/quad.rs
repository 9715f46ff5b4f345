//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

/// Tolerances for adaptive integration. The routine stops once the summed
/// error estimate is below `max(abs_tol, rel_tol * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 2000 }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }

    /// Both tolerances halved; used for self-consistency checks.
    pub fn halved(&self) -> Self {
        Self { abs_tol: self.abs_tol / 2.0, rel_tol: self.rel_tol / 2.0, ..*self }
    }
}

/// Integral value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub abs_err: f64,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    let value = kronrod * h;
    let diff = ((kronrod - gauss) * h).abs();
    // QUADPACK-style error scaling, which is conservative for smooth integrands.
    let err = if diff == 0.0 { 0.0 } else { diff.min(200.0 * diff * (200.0 * diff).sqrt()).max(diff * 1e-3) };
    Segment { a, b, value, err: err.max(value.abs() * f64::EPSILON * 50.0) }
}

/// Adaptive integral of `f` over the finite interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Estimate {
    if a == b {
        return Estimate { value: 0.0, abs_err: 0.0 };
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut heap = BinaryHeap::new();
    let first = gk15(&mut f, lo, hi);
    let mut value = first.value;
    let mut err = first.err;
    heap.push(first);
    while err > spec.abs_tol.max(spec.rel_tol * value.abs()) && heap.len() < spec.max_intervals {
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        value += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to avoid drift from the running updates.
    let mut segs: Vec<Segment> = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value: f64 = segs.iter().map(|s| s.value).sum();
    let abs_err: f64 = segs.iter().map(|s| s.err).sum();
    Estimate { value: sign * value, abs_err }
}

/// Adaptive integral over `[a, inf)` via the substitution `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, spec: &QuadratureSpec) -> Estimate {
    integrate(
        |t| {
            let u = 1.0 - t;
            let v = f(a + t / u);
            if v == 0.0 {
                0.0
            } else {
                v / (u * u)
            }
        },
        0.0,
        1.0,
        spec,
    )
}

/// Adaptive integral over the whole real line.
pub fn integrate_real_line<F: FnMut(f64) -> f64>(mut f: F, spec: &QuadratureSpec) -> Estimate {
    let right = integrate_to_infinity(&mut f, 0.0, spec);
    let left = integrate_to_infinity(|x| f(-x), 0.0, spec);
    Estimate { value: left.value + right.value, abs_err: left.abs_err + right.abs_err }
}

/// Integral of `exp(log_f)` over `[a, b]`, returned as a logarithm. The maximum of
/// `log_f` is located on a grid first and factored out, so integrands far outside
/// the range of `f64` are handled.
pub fn log_integrate<F: FnMut(f64) -> f64>(mut log_f: F, a: f64, b: f64, spec: &QuadratureSpec) -> (f64, f64) {
    let grid = 256;
    let mut m = f64::NEG_INFINITY;
    for i in 0..=grid {
        let x = a + (b - a) * i as f64 / grid as f64;
        let v = log_f(x);
        if v > m {
            m = v;
        }
    }
    if m == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, 0.0);
    }
    let est = integrate(|x| (log_f(x) - m).exp(), a, b, spec);
    (m + est.value.ln(), est.abs_err / est.value)
}
