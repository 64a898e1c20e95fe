//! Heat-kernel attractors `H_P^t(x) = (2 pi)^{-d} int e^{-t P(xi)} e^{-i x.xi} dxi`,
//! local-limit attractor sums, and Fourier inversion of convolution powers.
//!
//! When `P` is a sum of univariate polynomials the integral factorizes. Each
//! factor is integrated along a horizontal line `Im z = sigma` chosen among
//! the saddle points of the exponent, which removes the cancellation that
//! otherwise destroys relative accuracy far from the origin. Results are
//! kept as `mantissa * exp(log_scale)` so that values below the `f64` range
//! can still be compared.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxDomain, LatticeFunction};
use crate::quadrature::{poly_roots, GaussLegendre};
use crate::sampling::weighted_sphere_min;
use crate::series::{PowerSeries, RealPoly};
use crate::spectral::FrequencyPoint;
use crate::DEFAULT_SEED;

pub const DEFAULT_TARGET_EPS: f64 = 1e-10;
/// Point budget for tensor quadrature and torus inversion grids.
pub const DEFAULT_MAX_POINTS: usize = 1 << 26;

const MAX_DOUBLINGS: usize = 6;
const PROFILE_POINTS: usize = 801;
/// Extra log-magnitude below the threshold kept inside integration windows.
const WINDOW_MARGIN: f64 = 7.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Box halfwidths `L_j` for the tensor rule; empty means derived per call.
    pub halfwidths: Vec<f64>,
    /// Node counts `N_j`; empty means derived per call. Entries below the
    /// derived minimum are raised.
    pub nodes: Vec<usize>,
    pub target_eps: f64,
    pub max_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            halfwidths: Vec::new(),
            nodes: Vec::new(),
            target_eps: DEFAULT_TARGET_EPS,
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

impl QuadratureSpec {
    pub fn with_eps(target_eps: f64) -> Self {
        Self {
            target_eps,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.target_eps > 0.0 && self.target_eps < 1.0) {
            return Err(Error::Input(format!(
                "target_eps must lie in (0, 1), got {}",
                self.target_eps
            )));
        }
        if self.halfwidths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Input("quadrature halfwidths must be positive".into()));
        }
        Ok(())
    }
}

/// `mantissa * exp(log_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledComplex {
    pub log_scale: f64,
    pub mantissa: Complex64,
}

impl ScaledComplex {
    pub fn zero() -> Self {
        Self {
            log_scale: f64::NEG_INFINITY,
            mantissa: Complex64::default(),
        }
    }

    pub fn from_complex(c: Complex64) -> Self {
        Self {
            log_scale: 0.0,
            mantissa: c,
        }
    }

    pub fn to_complex(&self) -> Complex64 {
        if self.mantissa == Complex64::default() || self.log_scale == f64::NEG_INFINITY {
            return Complex64::default();
        }
        self.mantissa * self.log_scale.exp()
    }

    /// `ln |value|`.
    pub fn ln_abs(&self) -> f64 {
        self.log_scale + self.mantissa.norm().ln()
    }

    /// Principal logarithm of the value.
    pub fn ln(&self) -> Complex64 {
        self.mantissa.ln() + self.log_scale
    }

    pub fn mul(&self, other: &ScaledComplex) -> ScaledComplex {
        ScaledComplex {
            log_scale: self.log_scale + other.log_scale,
            mantissa: self.mantissa * other.mantissa,
        }
    }

    pub fn scale(&self, c: Complex64) -> ScaledComplex {
        ScaledComplex {
            log_scale: self.log_scale,
            mantissa: self.mantissa * c,
        }
    }

    pub fn add(&self, other: &ScaledComplex) -> ScaledComplex {
        if self.mantissa == Complex64::default() {
            return *other;
        }
        if other.mantissa == Complex64::default() {
            return *self;
        }
        let top = self.log_scale.max(other.log_scale);
        ScaledComplex {
            log_scale: top,
            mantissa: self.mantissa * (self.log_scale - top).exp() + other.mantissa * (other.log_scale - top).exp(),
        }
    }

    /// Moves the magnitude of the mantissa into the scale.
    fn normalized(self) -> Self {
        let a = self.mantissa.norm();
        if a == 0.0 || !a.is_finite() {
            return self;
        }
        Self {
            log_scale: self.log_scale + a.ln(),
            mantissa: self.mantissa / a,
        }
    }
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::default(), |acc, &a| acc * z + a)
}

/// `int_R exp(-t p(s) - i x s) ds` for a univariate polynomial `p`
/// (coefficient `k` multiplies `s^k`) with positive real leading part.
pub fn line_integral_1d(p: &[Complex64], t: f64, x: f64, eps: f64) -> Result<ScaledComplex> {
    let mut p = p.to_vec();
    while p.len() > 1 && p.last().is_some_and(|c| c.norm() == 0.0) {
        p.pop();
    }
    let deg = p.len() - 1;
    if deg < 2 || deg % 2 == 1 || !(p[deg].re > 0.0) {
        return Err(Error::Precondition(format!(
            "univariate factor of degree {deg} with leading coefficient {} does not decay",
            p[deg]
        )));
    }
    let i = Complex64::i();
    // g(z) = -t p(z) - i x z.
    let mut g: Vec<Complex64> = p.iter().map(|c| -c * t).collect();
    g[1] -= i * x;
    // Saddles: g'(z) = 0.
    let dg: Vec<Complex64> = (1..=deg).map(|k| g[k] * k as f64).collect();
    let mut candidates: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for z in poly_roots(&dg) {
        if z.re.is_finite() && z.im.is_finite() {
            candidates.push((z.im, z.re));
        }
    }
    let threshold = (1.0 / eps).ln() + WINDOW_MARGIN;
    let lead = t * p[deg].re;
    let mut best: Option<(f64, f64, f64, f64)> = None; // (peak, sigma, lo, hi)
    for (sigma, center) in candidates {
        let prof = profile(&g, sigma, center, lead, deg, threshold)?;
        if best.is_none_or(|b| prof.0 < b.0 - 1e-12) {
            best = Some((prof.0, sigma, prof.1, prof.2));
        }
    }
    let (peak, sigma, lo, hi) = best.expect("at least one candidate");
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let integrate = |n: usize| -> (Complex64, f64) {
        let gl = GaussLegendre::get(n);
        let mut acc = Complex64::default();
        let mut abs = 0.0;
        for (u, w) in gl.nodes.iter().zip(&gl.weights) {
            let z = Complex64::new(mid + half * u, sigma);
            let v = (horner(&g, z) - peak).exp();
            acc += v * *w;
            abs += v.norm() * w;
        }
        (acc * half, abs * half)
    };
    let mut n = 64;
    let (mut prev, _) = integrate(n);
    for _ in 0..MAX_DOUBLINGS {
        n *= 2;
        let (cur, abs) = integrate(n);
        if (cur - prev).norm() <= eps * cur.norm().max(abs) {
            return Ok(ScaledComplex {
                log_scale: peak,
                mantissa: cur,
            }
            .normalized());
        }
        prev = cur;
    }
    Err(Error::Numerical(format!(
        "one-dimensional heat-kernel factor did not converge after {MAX_DOUBLINGS} doublings (t={t}, x={x})"
    )))
}

/// Peak of `Re g` along `Im z = sigma` and the window where it lies within
/// `threshold` of the peak.
fn profile(g: &[Complex64], sigma: f64, center: f64, lead: f64, deg: usize, threshold: f64) -> Result<(f64, f64, f64)> {
    let scan = |span: f64| -> (f64, Vec<f64>, Vec<f64>) {
        let s: Vec<f64> = (0..PROFILE_POINTS)
            .map(|k| center + span * (2.0 * k as f64 / (PROFILE_POINTS - 1) as f64 - 1.0))
            .collect();
        let l: Vec<f64> = s.iter().map(|&sk| horner(g, Complex64::new(sk, sigma)).re).collect();
        let peak = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (peak, s, l)
    };
    let mut span = (threshold / lead).powf(1.0 / deg as f64).max(1e-300) + sigma.abs();
    for _ in 0..200 {
        let (peak, s, l) = scan(span);
        let ends_low = l[0] < peak - threshold && l[PROFILE_POINTS - 1] < peak - threshold;
        if ends_low {
            // A second scan at twice the span guards against distant peaks.
            let (peak2, _, _) = scan(2.0 * span);
            if peak2 <= peak + 1e-9 * (1.0 + peak.abs()) {
                let first = l.iter().position(|&v| v >= peak - threshold).unwrap_or(0);
                let last = l
                    .iter()
                    .rposition(|&v| v >= peak - threshold)
                    .unwrap_or(PROFILE_POINTS - 1);
                let lo = s[first.saturating_sub(1)];
                let hi = s[(last + 1).min(PROFILE_POINTS - 1)];
                return Ok((peak, lo, hi));
            }
        }
        span *= 2.0;
        if !span.is_finite() {
            break;
        }
    }
    Err(Error::Numerical("could not bracket the heat-kernel integrand".into()))
}

/// `H_P^t(x)` in scaled form.
pub fn heat_kernel_eval_scaled(p: &PowerSeries, t: f64, x: &[f64], spec: &QuadratureSpec) -> Result<ScaledComplex> {
    spec.validate()?;
    if !(t > 0.0) {
        return Err(Error::Input(format!("time must be positive, got {t}")));
    }
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: x.len(),
        });
    }
    match p.separable_parts() {
        Some(parts) => heat_kernel_separable(&parts, t, x, spec.target_eps),
        None => heat_kernel_tensor(p, t, x, spec),
    }
}

pub fn heat_kernel_eval(p: &PowerSeries, t: f64, x: &[f64], spec: &QuadratureSpec) -> Result<Complex64> {
    Ok(heat_kernel_eval_scaled(p, t, x, spec)?.to_complex())
}

fn heat_kernel_separable(parts: &[Vec<Complex64>], t: f64, x: &[f64], eps: f64) -> Result<ScaledComplex> {
    let d = parts.len();
    let c0 = parts[0][0];
    let mut acc = ScaledComplex {
        log_scale: -(d as f64) * (2.0 * PI).ln() - t * c0.re,
        mantissa: Complex64::from_polar(1.0, -t * c0.im),
    };
    for (j, part) in parts.iter().enumerate() {
        let mut q = part.clone();
        q[0] = Complex64::default();
        acc = acc.mul(&line_integral_1d(&q, t, x[j], eps)?);
    }
    Ok(acc)
}

/// Per-variable weights implied by the degree of `Re P` in each variable.
fn degree_weights(r: &PowerSeries) -> Vec<u32> {
    (0..r.dim()).map(|j| r.degree_in(j).div_ceil(2).max(1)).collect()
}

/// Halfwidths for which `t Re P >= ln(1/eps)` holds on the sampled box boundary.
pub fn tensor_halfwidths(p: &PowerSeries, t: f64, eps: f64) -> Result<Vec<f64>> {
    let d = p.dim();
    let r = p.real_part();
    let rp = RealPoly::from_series(&r);
    let m = degree_weights(&r);
    let c = weighted_sphere_min(|u| rp.value(u), &m, 4000, DEFAULT_SEED).value;
    if !(c > 0.0) {
        return Err(Error::Precondition("Re P is not coercive".into()));
    }
    let target = (1.0 / eps).ln();
    let mut l: Vec<f64> = m
        .iter()
        .map(|&mj| (target / (t * c * d as f64)).powf(1.0 / (2.0 * f64::from(mj))))
        .collect();
    for _ in 0..40 {
        if boundary_ok(&rp, &l, t, target) {
            return Ok(l);
        }
        l.iter_mut().for_each(|v| *v *= 2.0);
    }
    Err(Error::Resource(
        "tail bound cannot be met within the quadrature box limits".into(),
    ))
}

fn boundary_ok(rp: &RealPoly, l: &[f64], t: f64, target: f64) -> bool {
    let d = l.len();
    let k = 64usize;
    let per_face = k.pow(d.saturating_sub(1) as u32).min(1 << 14);
    for face in 0..d {
        for sign in [-1.0, 1.0] {
            for idx in 0..per_face {
                let mut c = idx;
                let mut pt = vec![0.0; d];
                for (j, v) in pt.iter_mut().enumerate() {
                    if j == face {
                        *v = sign * l[j];
                    } else {
                        *v = -l[j] + 2.0 * l[j] * (c % k) as f64 / (k - 1) as f64;
                        c /= k;
                    }
                }
                if t * rp.value(&pt) < target {
                    return false;
                }
            }
        }
    }
    true
}

/// Tensor Gauss-Legendre evaluation over the truncation box; used when `P`
/// does not split. Also available for separable `P` as a cross-check.
pub fn heat_kernel_eval_tensor(p: &PowerSeries, t: f64, x: &[f64], spec: &QuadratureSpec) -> Result<ScaledComplex> {
    spec.validate()?;
    heat_kernel_tensor(p, t, x, spec)
}

fn heat_kernel_tensor(p: &PowerSeries, t: f64, x: &[f64], spec: &QuadratureSpec) -> Result<ScaledComplex> {
    let d = p.dim();
    let l = if spec.halfwidths.is_empty() {
        tensor_halfwidths(p, t, spec.target_eps)?
    } else if spec.halfwidths.len() == d {
        spec.halfwidths.clone()
    } else {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: spec.halfwidths.len(),
        });
    };
    let mut nodes: Vec<usize> = (0..d)
        .map(|j| {
            let osc = (l[j] * x[j].abs() / PI).ceil() as usize;
            let base = (16 + 2 * osc).next_multiple_of(2);
            spec.nodes.get(j).copied().unwrap_or(0).max(base).next_multiple_of(2)
        })
        .collect();
    let terms: Vec<(Vec<u32>, Complex64)> = p.terms().map(|(a, c)| (a.0.clone(), c * t)).collect();
    let eval = |nodes: &[usize]| -> Result<(Complex64, f64)> {
        let total: usize = nodes.iter().product();
        if total > spec.max_points {
            return Err(Error::Resource(format!(
                "tensor quadrature needs {total} points ({nodes:?}), budget is {}",
                spec.max_points
            )));
        }
        let rules: Vec<_> = nodes.iter().map(|&n| GaussLegendre::get(n)).collect();
        let mut acc = Complex64::default();
        let mut abs = 0.0;
        let mut idx = vec![0usize; d];
        let mut xi = vec![0.0; d];
        for _ in 0..total {
            let mut w = 1.0;
            let mut phase = 0.0;
            for j in 0..d {
                xi[j] = l[j] * rules[j].nodes[idx[j]];
                w *= l[j] * rules[j].weights[idx[j]];
                phase -= x[j] * xi[j];
            }
            let mut tp = Complex64::default();
            for (a, c) in &terms {
                let mut mono = *c;
                for (j, &k) in a.iter().enumerate() {
                    if k > 0 {
                        mono *= xi[j].powi(k as i32);
                    }
                }
                tp += mono;
            }
            let v = (-tp + Complex64::new(0.0, phase)).exp();
            acc += v * w;
            abs += v.norm() * w;
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < nodes[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok((acc, abs))
    };
    let (mut prev, _) = eval(&nodes)?;
    for _ in 0..MAX_DOUBLINGS {
        nodes.iter_mut().for_each(|n| *n *= 2);
        let (cur, abs) = eval(&nodes)?;
        if (cur - prev).norm() <= spec.target_eps * abs.max(cur.norm()) {
            return Ok(ScaledComplex {
                log_scale: -(d as f64) * (2.0 * PI).ln(),
                mantissa: cur,
            }
            .normalized());
        }
        prev = cur;
    }
    Err(Error::Numerical(format!(
        "tensor heat-kernel quadrature did not converge after {MAX_DOUBLINGS} doublings"
    )))
}

/// One summand of the local-limit attractor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttractorTerm {
    pub xi: FrequencyPoint,
    #[serde(with = "crate::cjson")]
    pub value: Complex64,
    pub alpha: Vec<f64>,
    pub p: PowerSeries,
}

impl AttractorTerm {
    pub fn new(xi: FrequencyPoint, value: Complex64, alpha: Vec<f64>, p: PowerSeries) -> Result<Self> {
        if (value.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("attractor term value {value} is not unimodular")));
        }
        Ok(Self { xi, value, alpha, p })
    }

    /// `value^n`, computed in polar form.
    fn value_pow(&self, n: u64) -> Complex64 {
        Complex64::from_polar(self.value.norm().powf(n as f64), self.value.arg() * n as f64)
    }
}

/// `sum_k e^{-i x.xi_k} value_k^n H_{P_k}^n(x - n alpha_k)` in scaled form.
pub fn attractor_sum_scaled(
    terms: &[AttractorTerm],
    n: u64,
    x: &[i64],
    spec: &QuadratureSpec,
) -> Result<ScaledComplex> {
    if n == 0 {
        return Err(Error::Input("n must be at least 1".into()));
    }
    let nf = n as f64;
    let mut acc = ScaledComplex::zero();
    for term in terms {
        let shifted: Vec<f64> = x.iter().zip(&term.alpha).map(|(&xj, a)| xj as f64 - nf * a).collect();
        let h = heat_kernel_eval_scaled(&term.p, nf, &shifted, spec)?;
        let phase: f64 = x.iter().zip(term.xi.coords()).map(|(&xj, k)| -(xj as f64) * k).sum();
        let factor = Complex64::from_polar(1.0, phase) * term.value_pow(n);
        acc = acc.add(&h.scale(factor));
    }
    Ok(acc)
}

pub fn attractor_sum(terms: &[AttractorTerm], n: u64, x: &[i64], spec: &QuadratureSpec) -> Result<Complex64> {
    Ok(attractor_sum_scaled(terms, n, x, spec)?.to_complex())
}

/// Attractor sum at every point of `window`, in row-major order. Separable
/// terms are evaluated once per coordinate value and combined by outer
/// products.
pub fn attractor_grid(
    terms: &[AttractorTerm],
    n: u64,
    window: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<Vec<Complex64>> {
    use rayon::prelude::*;
    spec.validate()?;
    if n == 0 {
        return Err(Error::Input("n must be at least 1".into()));
    }
    let d = window.dim();
    let volume = window.volume()?;
    let nf = n as f64;
    let mut out = vec![Complex64::default(); volume];
    let shape = window.shape();
    for term in terms {
        if term.p.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: term.p.dim(),
            });
        }
        let coeff = term.value_pow(n);
        match term.p.separable_parts() {
            Some(parts) => {
                let c0 = parts[0][0];
                let base = ScaledComplex {
                    log_scale: -(d as f64) * (2.0 * PI).ln() - nf * c0.re,
                    mantissa: Complex64::from_polar(1.0, -nf * c0.im) * coeff,
                };
                let mut axes: Vec<Vec<ScaledComplex>> = Vec::with_capacity(d);
                for j in 0..d {
                    let mut q = parts[j].clone();
                    q[0] = Complex64::default();
                    let vals: Result<Vec<ScaledComplex>> = (0..shape[j])
                        .into_par_iter()
                        .map(|k| {
                            let xj = window.lo()[j] + k as i64;
                            let s = line_integral_1d(&q, nf, xj as f64 - nf * term.alpha[j], spec.target_eps)?;
                            let phase = -(xj as f64) * term.xi.coords()[j];
                            Ok(s.scale(Complex64::from_polar(1.0, phase)))
                        })
                        .collect();
                    axes.push(vals?);
                }
                out.par_iter_mut().enumerate().for_each(|(flat, slot)| {
                    let mut k = flat;
                    let mut v = base;
                    for j in (0..d).rev() {
                        v = v.mul(&axes[j][k % shape[j]]);
                        k /= shape[j];
                    }
                    *slot += v.to_complex();
                });
            }
            None => {
                let vals: Result<Vec<Complex64>> = (0..volume)
                    .into_par_iter()
                    .map(|flat| {
                        let x = window.point_at(flat);
                        let shifted: Vec<f64> = x.iter().zip(&term.alpha).map(|(&xj, a)| xj as f64 - nf * a).collect();
                        let h = heat_kernel_eval_scaled(&term.p, nf, &shifted, spec)?;
                        let phase: f64 = x.iter().zip(term.xi.coords()).map(|(&xj, k)| -(xj as f64) * k).sum();
                        Ok(h.scale(Complex64::from_polar(1.0, phase) * coeff).to_complex())
                    })
                    .collect();
                for (slot, v) in out.iter_mut().zip(vals?) {
                    *slot += v;
                }
            }
        }
    }
    Ok(out)
}

/// Minimum torus nodes per axis for exact inversion of `f^(n)`.
pub fn inversion_nodes(f: &LatticeFunction, n: u64) -> Result<usize> {
    let width = f.support_box()?.shape().into_iter().max().unwrap_or(1) as u64;
    let need = (4 * n)
        .checked_mul(width)
        .ok_or_else(|| Error::Resource("node count overflow".into()))?;
    Ok(need.max(64) as usize)
}

/// `f^(n)(x)` at several points via the trapezoid rule on the torus.
pub fn fourier_invert_power_many(
    f: &LatticeFunction,
    n: u64,
    xs: &[Vec<i64>],
    spec: &QuadratureSpec,
) -> Result<Vec<Complex64>> {
    use rayon::prelude::*;
    if n == 0 || n > u64::from(u32::MAX) {
        return Err(Error::Input(format!("power {n} is outside 1..=2^32-1")));
    }
    let d = f.dim();
    let min_nodes = inversion_nodes(f, n)?;
    let nodes: Vec<usize> = (0..d)
        .map(|j| spec.nodes.get(j).copied().unwrap_or(0).max(min_nodes))
        .collect();
    let total = nodes
        .iter()
        .try_fold(1usize, |acc, &k| acc.checked_mul(k))
        .ok_or_else(|| Error::Resource("inversion grid overflow".into()))?;
    if total > spec.max_points {
        return Err(Error::Resource(format!(
            "torus inversion needs {total} nodes ({nodes:?}), budget is {}",
            spec.max_points
        )));
    }
    for x in xs {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
    }
    let entries: Vec<(Vec<i64>, Complex64)> = f.iter().map(|(x, c)| (x.to_vec(), c)).collect();
    let angle = |j: usize, k: usize| -PI + 2.0 * PI * k as f64 / nodes[j] as f64;
    // Per-axis phase tables e^{i y_j xi_j} for each support coordinate y_j.
    let tables: Vec<Vec<Vec<Complex64>>> = (0..d)
        .map(|j| {
            entries
                .iter()
                .map(|(y, _)| {
                    (0..nodes[j])
                        .map(|k| Complex64::from_polar(1.0, y[j] as f64 * angle(j, k)))
                        .collect()
                })
                .collect()
        })
        .collect();
    // Per-axis output phases e^{-i x_j xi_j} for each requested point.
    let out_tables: Vec<Vec<Vec<Complex64>>> = xs
        .iter()
        .map(|x| {
            (0..d)
                .map(|j| {
                    (0..nodes[j])
                        .map(|k| Complex64::from_polar(1.0, -(x[j] as f64) * angle(j, k)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let outer = nodes[0];
    let inner = total / outer;
    let per_row: Vec<Vec<Complex64>> = (0..outer)
        .into_par_iter()
        .map(|k0| {
            let mut partial = vec![Complex64::default(); xs.len()];
            let mut idx = vec![0usize; d];
            idx[0] = k0;
            for _ in 0..inner {
                let mut s = Complex64::default();
                for (e, (_, c)) in entries.iter().enumerate() {
                    let mut v = *c;
                    for j in 0..d {
                        v *= tables[j][e][idx[j]];
                    }
                    s += v;
                }
                let pw = s.powu(n as u32);
                for (slot, tab) in partial.iter_mut().zip(&out_tables) {
                    let mut ph = pw;
                    for j in 0..d {
                        ph *= tab[j][idx[j]];
                    }
                    *slot += ph;
                }
                for j in (1..d).rev() {
                    idx[j] += 1;
                    if idx[j] < nodes[j] {
                        break;
                    }
                    idx[j] = 0;
                }
            }
            partial
        })
        .collect();
    let mut out = vec![Complex64::default(); xs.len()];
    for row in per_row {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let norm = total as f64;
    Ok(out.into_iter().map(|v| v / norm).collect())
}

pub fn fourier_invert_power(f: &LatticeFunction, n: u64, x: &[i64], spec: &QuadratureSpec) -> Result<Complex64> {
    Ok(fourier_invert_power_many(f, n, &[x.to_vec()], spec)?[0])
}
