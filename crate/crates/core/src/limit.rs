//! Closed-form scaling limits evaluated by quadrature: single-site quartic moments,
//! the renormalising factor `z(lambda)`, source-count constants, the active-vertex
//! limit and the one-dimensional kernels behind the cluster-size densities.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::exact::MeasureKind;
use crate::quad::{integrate, log_integrate, Estimate, QuadratureSpec};

/// `ln sqrt(2 pi e)`.
pub fn ln_sqrt_2pie() -> f64 {
    0.5 * (2.0 * PI * E).ln()
}

/// Upper end of the positive half-line beyond which `exp(-g t^4 - a t^2) t^p` is
/// below `exp(-80)` relative to its maximum.
fn quartic_cutoff(g: f64, a: f64, p: usize) -> f64 {
    let peak = if a < 0.0 { (-a / (2.0 * g)).sqrt() } else { 0.0 };
    let spread = (120.0 / g).powf(0.25) + if a > 0.0 { (120.0 / a).sqrt().min((120.0 / g).powf(0.25)) } else { 0.0 };
    peak + spread + (p as f64 / g).powf(0.25) * 1.5 + 1.0
}

/// `ln int_R t^p exp(-g t^4 - a t^2) dt` for even `p`.
pub fn log_quartic_moment_integral(g: f64, a: f64, p: usize, spec: &QuadratureSpec) -> (f64, f64) {
    let top = quartic_cutoff(g, a, p);
    let pf = p as f64;
    let (l, rel) = log_integrate(
        |t| {
            let base = -g * t * t * t * t - a * t * t;
            if p == 0 {
                base
            } else {
                pf * t.ln() + base
            }
        },
        0.0,
        top,
        spec,
    );
    (l + std::f64::consts::LN_2, rel)
}

/// `<phi^p>` under the single-site density proportional to `exp(-g t^4 - a t^2)`.
/// Odd moments are exactly zero.
pub fn phi4_moment(g: f64, a: f64, p: usize) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::InvalidParams(format!("g must be positive, got {g}")));
    }
    if p % 2 == 1 {
        return Ok(0.0);
    }
    if p == 0 {
        return Ok(1.0);
    }
    let spec = QuadratureSpec::default();
    let (lp, _) = log_quartic_moment_integral(g, a, p, &spec);
    let (l0, _) = log_quartic_moment_integral(g, a, 0, &spec);
    Ok((lp - l0).exp())
}

/// Table of `<phi^p>` for `p = 0..=p_max` at fixed `(g, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phi4Moments {
    pub g: f64,
    pub a: f64,
    values: Vec<f64>,
}

impl Phi4Moments {
    pub fn new(g: f64, a: f64, p_max: usize) -> Result<Self> {
        let values = (0..=p_max).map(|p| phi4_moment(g, a, p)).collect::<Result<_>>()?;
        Ok(Self { g, a, values })
    }
    pub fn get(&self, p: usize) -> Option<f64> {
        self.values.get(p).copied()
    }
    pub fn max_order(&self) -> usize {
        self.values.len() - 1
    }
}

/// `ln z(lambda)`, with `z(lambda) = int_R exp(-s^4/12 - lambda s^2/2) ds`.
pub fn log_z_lambda(lambda: f64) -> f64 {
    log_quartic_moment_integral(1.0 / 12.0, lambda / 2.0, 0, &QuadratureSpec::default()).0
}

pub fn z_lambda(lambda: f64) -> f64 {
    log_z_lambda(lambda).exp()
}

/// `<s^p>` under the density proportional to `exp(-s^4/12 - lambda s^2/2)`.
pub fn scaled_moment(lambda: f64, p: usize) -> f64 {
    phi4_moment(1.0 / 12.0, lambda / 2.0, p).expect("g = 1/12 is valid")
}

/// `K_S(lambda) = g_tilde^{2k} <phi^{2k}> z(lambda)/sqrt(2 pi e)`, where the moment is
/// taken under the quartic measure at `(g, a(lambda))`. The product does not depend on `g`.
pub fn k_s(lambda: f64, g: f64, k: usize) -> Result<f64> {
    let g_tilde = (12.0 * g).powf(0.25);
    let a = lambda * g_tilde * g_tilde / 2.0;
    let m = phi4_moment(g, a, 2 * k)?;
    Ok(g_tilde.powi(2 * k as i32) * m * (log_z_lambda(lambda) - ln_sqrt_2pie()).exp())
}

/// `E[(g_tilde^4/2)^r Z^{2r}]` for the variable with density proportional to
/// `phi^{2k} d rho_{g,a(lambda)}`: `g_tilde^{4r} <phi^{2k+2r}>/(2^r <phi^{2k}>)`.
pub fn n_active_limit_moment(k: usize, lambda: f64, g: f64, r: usize) -> Result<f64> {
    if r == 0 {
        return Ok(1.0);
    }
    let g_tilde = (12.0 * g).powf(0.25);
    let a = lambda * g_tilde * g_tilde / 2.0;
    let num = phi4_moment(g, a, 2 * k + 2 * r)?;
    let den = phi4_moment(g, a, 2 * k)?;
    Ok(g_tilde.powi(4 * r as i32) * num / (2f64.powi(r as i32) * den))
}

/// CDF of the limiting rescaled magnetisation, density `exp(-t^4/12 - lambda t^2/2)/z(lambda)`.
pub fn gs_limit_cdf(lambda: f64, s: f64) -> f64 {
    let spec = QuadratureSpec::default();
    let lz = log_z_lambda(lambda);
    let shift = if lambda < 0.0 { 0.75 * lambda * lambda } else { 0.0 };
    let half = integrate(|t| (-t.powi(4) / 12.0 - lambda * t * t / 2.0 - shift).exp(), 0.0, s.abs(), &spec).value;
    let frac = half * (shift - lz).exp();
    (0.5 + s.signum() * frac).clamp(0.0, 1.0)
}

const CHEB_NODES: usize = 16;

/// Piecewise Chebyshev interpolant of a smooth function on `[0, x_max]`.
#[derive(Debug, Clone)]
struct ChebTable {
    width: f64,
    coeffs: Vec<[f64; CHEB_NODES]>,
}

impl ChebTable {
    fn new(x_max: f64, width: f64, mut f: impl FnMut(f64) -> f64) -> Self {
        let panels = (x_max / width).ceil().max(1.0) as usize;
        let mut coeffs = Vec::with_capacity(panels);
        let nodes: Vec<f64> = (0..CHEB_NODES).map(|k| ((k as f64 + 0.5) * PI / CHEB_NODES as f64).cos()).collect();
        for p in 0..panels {
            let (lo, hi) = (p as f64 * width, (p + 1) as f64 * width);
            let vals: Vec<f64> = nodes.iter().map(|t| f(0.5 * (lo + hi) + 0.5 * (hi - lo) * t)).collect();
            let mut c = [0.0; CHEB_NODES];
            for (j, cj) in c.iter_mut().enumerate() {
                let s: f64 = vals
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (j as f64 * (k as f64 + 0.5) * PI / CHEB_NODES as f64).cos())
                    .sum();
                *cj = 2.0 * s / CHEB_NODES as f64;
            }
            c[0] *= 0.5;
            coeffs.push(c);
        }
        Self { width, coeffs }
    }

    fn x_max(&self) -> f64 {
        self.width * self.coeffs.len() as f64
    }

    fn eval(&self, x: f64) -> f64 {
        let p = ((x / self.width) as usize).min(self.coeffs.len() - 1);
        let lo = p as f64 * self.width;
        let t = 2.0 * (x - lo) / self.width - 1.0;
        let c = &self.coeffs[p];
        let (mut b1, mut b2) = (0.0, 0.0);
        for j in (1..CHEB_NODES).rev() {
            let b0 = 2.0 * t * b1 - b2 + c[j];
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + c[0]
    }
}

/// The one-dimensional kernel of the cluster-size densities,
/// `h(x) = exp(-x^2/2 - lambda x) I(lambda + x)^m / sqrt(2 pi e)` with
/// `I(u) = int_R exp(-s^4/12 - u s^2/2) ds`, `m = 1` (single) or `2` (double).
///
/// A backbone graph with components of `l_1, ..., l_r` edges contributes
/// `prefactor * int prod_i x_i^{l_i - 1}/(l_i - 1)! h(x_1 + ... + x_r) dx` over its box.
#[derive(Debug, Clone)]
pub struct MassKernel {
    lambda: f64,
    kind: MeasureKind,
    table: ChebTable,
}

impl MassKernel {
    /// Kernel tabulated on `[0, x_max]`.
    pub fn with_range(lambda: f64, kind: MeasureKind, x_max: f64) -> Self {
        let power = match kind {
            MeasureKind::Single => 1.0,
            MeasureKind::Double => 2.0,
        };
        let c = ln_sqrt_2pie();
        let table = ChebTable::new(x_max, 0.5, |x| -x * x / 2.0 - lambda * x + power * log_z_lambda(lambda + x) - c);
        Self { lambda, kind, table }
    }

    /// Kernel over the default domain `[0, 3 (12 + |lambda|)]`, wide enough for
    /// sums of up to three box coordinates each truncated at `12 + |lambda|`.
    pub fn new(lambda: f64, kind: MeasureKind) -> Self {
        Self::with_range(lambda, kind, 3.0 * box_cutoff(lambda))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn kind(&self) -> MeasureKind {
        self.kind
    }
    pub fn x_max(&self) -> f64 {
        self.table.x_max()
    }

    pub fn ln_h(&self, x: f64) -> f64 {
        self.table.eval(x)
    }

    /// Direct (untabulated) `ln h(x)`.
    pub fn ln_h_direct(&self, x: f64) -> f64 {
        let power = match self.kind {
            MeasureKind::Single => 1.0,
            MeasureKind::Double => 2.0,
        };
        -x * x / 2.0 - self.lambda * x + power * log_z_lambda(self.lambda + x) - ln_sqrt_2pie()
    }

    /// `ln int_0^inf x^{l-1}/(l-1)! h(x) dx`, the full-box mass of total edge count `l`.
    /// The domain is the whole tabulated range.
    pub fn ln_full_box(&self, l: usize, spec: &QuadratureSpec) -> (f64, f64) {
        assert!(l >= 1);
        let lf = (l - 1) as f64;
        let lg = ln_gamma(l as f64);
        log_integrate(
            |x| {
                let poly = if l == 1 { 0.0 } else { lf * x.ln() };
                poly - lg + self.ln_h(x)
            },
            0.0,
            self.x_max(),
            spec,
        )
    }

    /// `int_box prod_i x_i^{l_i-1}/(l_i-1)! h(sum x) dx` by nested adaptive quadrature.
    /// Infinite upper bounds are truncated at `12 + |lambda|`.
    pub fn box_integral(&self, ells: &[usize], bounds: &[(f64, f64)], spec: &QuadratureSpec) -> Result<Estimate> {
        if ells.len() != bounds.len() {
            return Err(Error::Invalid("one box interval per component is required".into()));
        }
        if ells.is_empty() || ells.len() > 3 {
            return Err(Error::SizeLimit(format!("box integrals support 1..=3 components, got {}", ells.len())));
        }
        for &(a, b) in bounds {
            if a < 0.0 || b < a || a.is_nan() {
                return Err(Error::Invalid(format!("invalid box interval [{a}, {b}]")));
            }
        }
        if ells.iter().any(|&l| l == 0) {
            return Err(Error::Invalid("component edge counts are positive".into()));
        }
        let cut = box_cutoff(self.lambda);
        let bounds: Vec<(f64, f64)> = bounds.iter().map(|&(a, b)| (a.min(cut), b.min(cut))).collect();
        if bounds.iter().any(|(a, b)| a == b) {
            return Ok(Estimate { value: 0.0, abs_err: 0.0 });
        }
        let lgs: Vec<f64> = ells.iter().map(|&l| ln_gamma(l as f64)).collect();
        let factor = |i: usize, x: f64| -> f64 {
            if ells[i] == 1 {
                (-lgs[i]).exp()
            } else {
                ((ells[i] - 1) as f64 * x.ln() - lgs[i]).exp()
            }
        };
        let inner = QuadratureSpec { abs_tol: spec.abs_tol * 1e-2, rel_tol: spec.rel_tol * 1e-1, ..*spec };
        let est = match ells.len() {
            1 => integrate(|x| factor(0, x) * self.ln_h(x).exp(), bounds[0].0, bounds[0].1, spec),
            2 => integrate(
                |x1| {
                    factor(0, x1)
                        * integrate(|x2| factor(1, x2) * self.ln_h(x1 + x2).exp(), bounds[1].0, bounds[1].1, &inner).value
                },
                bounds[0].0,
                bounds[0].1,
                spec,
            ),
            _ => integrate(
                |x1| {
                    factor(0, x1)
                        * integrate(
                            |x2| {
                                factor(1, x2)
                                    * integrate(
                                        |x3| factor(2, x3) * self.ln_h(x1 + x2 + x3).exp(),
                                        bounds[2].0,
                                        bounds[2].1,
                                        &inner,
                                    )
                                    .value
                            },
                            bounds[1].0,
                            bounds[1].1,
                            &inner,
                        )
                        .value
                },
                bounds[0].0,
                bounds[0].1,
                spec,
            ),
        };
        Ok(est)
    }
}

/// Truncation point `12 + |lambda|` for box coordinates.
pub fn box_cutoff(lambda: f64) -> f64 {
    12.0 + lambda.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma;

    #[test]
    fn moments_against_gamma_forms() {
        // int_R t^p e^{-t^4/12} dt = 12^{(p+1)/4} Gamma((p+1)/4)/2
        let z0 = 12f64.powf(0.25) * gamma(0.25) / 2.0;
        assert_relative_eq!(z_lambda(0.0), z0, max_relative = 1e-12);
        assert_relative_eq!(z0, 3.3740, max_relative = 1e-4);
        let m2 = 12f64.powf(0.75) * gamma(0.75) / (2.0 * z0);
        assert_relative_eq!(phi4_moment(1.0 / 12.0, 0.0, 2).unwrap(), m2, max_relative = 1e-12);
        let m4 = 12f64.powf(1.25) * gamma(1.25) / (2.0 * z0);
        assert_relative_eq!(phi4_moment(1.0 / 12.0, 0.0, 4).unwrap(), m4, max_relative = 1e-12);
        // Gamma(5/4) = Gamma(1/4)/4 makes the fourth moment exactly 3.
        assert_relative_eq!(m4, 3.0, max_relative = 1e-13);
        assert_eq!(phi4_moment(1.0, 0.3, 3).unwrap(), 0.0);
        assert_eq!(phi4_moment(1.0, 0.3, 0).unwrap(), 1.0);
    }

    #[test]
    fn extreme_parameters() {
        // Nearly Gaussian: g -> 0 with a = 1 gives variance 1/2.
        assert_relative_eq!(phi4_moment(1e-9, 1.0, 2).unwrap(), 0.5, max_relative = 1e-6);
        // Double well, concentrated near t^2 = -a/(2g) = 1.
        let m2 = phi4_moment(16.0, -32.0, 2).unwrap();
        assert!((m2 - 1.0).abs() < 0.02, "{m2}");
        assert_relative_eq!(z_lambda(100.0), (2.0 * PI / 100.0).sqrt(), max_relative = 0.01);
    }

    #[test]
    fn z_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let z = z_lambda(-6.0 + 0.4 * i as f64);
            assert!(z < prev);
            prev = z;
        }
    }

    #[test]
    fn k_s_is_g_free() {
        for k in 0..4 {
            let a = k_s(0.7, 1.0 / 12.0, k).unwrap();
            let b = k_s(0.7, 3.0, k).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        assert_relative_eq!(k_s(0.0, 1.0 / 12.0, 0).unwrap(), z_lambda(0.0) / (2.0 * PI * E).sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn active_moment_examples() {
        assert_eq!(n_active_limit_moment(1, 0.0, 1.0, 0).unwrap(), 1.0);
        let m2 = phi4_moment(1.0 / 12.0, 0.0, 2).unwrap();
        assert_relative_eq!(n_active_limit_moment(0, 0.0, 1.0 / 12.0, 1).unwrap(), 0.5 * m2, max_relative = 1e-12);
        assert_relative_eq!(n_active_limit_moment(0, 0.0, 1.0 / 12.0, 2).unwrap(), 0.75, max_relative = 1e-12);
    }

    #[test]
    fn cdf_examples() {
        assert_relative_eq!(gs_limit_cdf(0.3, 0.0), 0.5);
        assert!(gs_limit_cdf(-2.0, 50.0) > 1.0 - 1e-12);
        // Midpoint Riemann sum at step 1e-4 as an independent reference.
        let h = 1e-4;
        let (mut inner, mut total) = (0.0, 0.0);
        for i in 0..200_000 {
            let t = -10.0 + (i as f64 + 0.5) * h;
            let w = (-t.powi(4) / 12.0).exp();
            total += w;
            if t < 1.0 {
                inner += w;
            }
        }
        assert_relative_eq!(gs_limit_cdf(0.0, 1.0), inner / total, max_relative = 1e-7);
    }

    #[test]
    fn kernel_table_accuracy() {
        for kind in [MeasureKind::Single, MeasureKind::Double] {
            for lambda in [-4.6, 0.0, 1.0, 18.0] {
                let k = MassKernel::new(lambda, kind);
                for i in 0..50 {
                    let x = 0.013 + i as f64 * 0.71;
                    if x > k.x_max() {
                        break;
                    }
                    assert_relative_eq!(k.ln_h(x), k.ln_h_direct(x), epsilon = 1e-11);
                }
            }
        }
    }

    #[test]
    fn dirichlet_reduction_matches_tensor_product() {
        let spec = QuadratureSpec::new(1e-13, 1e-10);
        let k = MassKernel::new(0.4, MeasureKind::Double);
        let full = |ells: &[usize]| {
            let b = vec![(0.0, f64::INFINITY); ells.len()];
            k.box_integral(ells, &b, &spec).unwrap().value
        };
        for ells in [vec![3usize], vec![1, 2], vec![2, 3], vec![1, 1, 3]] {
            let l: usize = ells.iter().sum();
            let reduced = k.ln_full_box(l, &spec).0.exp();
            assert_relative_eq!(full(&ells), reduced, max_relative = 1e-8);
        }
    }

    #[test]
    fn simplest_mass_by_riemann_grid() {
        // (1/sqrt(2 pi e)) int_0^inf int_R exp(-x^2/2 - s^4/12 - x s^2/2) ds dx
        let h = 1e-3;
        let mut sum = 0.0;
        for i in 0..8000 {
            let x = (i as f64 + 0.5) * h;
            for j in 0..16000 {
                let s = -8.0 + (j as f64 + 0.5) * h;
                sum += (-x * x / 2.0 - s.powi(4) / 12.0 - x * s * s / 2.0).exp();
            }
        }
        let riemann = sum * h * h / (2.0 * PI * E).sqrt();
        let k = MassKernel::new(0.0, MeasureKind::Single);
        let spec = QuadratureSpec::default();
        assert_relative_eq!(k.ln_full_box(1, &spec).0.exp(), riemann, max_relative = 1e-6);
        let boxed = k.box_integral(&[1], &[(0.0, f64::INFINITY)], &spec).unwrap().value;
        assert_relative_eq!(boxed, riemann, max_relative = 1e-6);
    }
}
