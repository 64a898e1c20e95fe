//! Characteristic functions, maximizer sets and logarithmic expansions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeFunction;
use crate::series::{MultiIndex, PowerSeries};

/// Default membership tolerance for the maximizer set.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Maximizers closer than this in torus distance are merged.
pub const DEFAULT_MERGE_RADIUS: f64 = 1e-4;
/// Largest supported truncation order of [`gamma_series`].
pub const MAX_SERIES_ORDER: u32 = 16;

/// Largest denominator tried when snapping maximizer coordinates to `k pi / q`.
const SNAP_MAX_DENOM: i64 = 24;
/// Coordinates farther than this from a rational multiple of pi are not snapped.
const SNAP_RADIUS: f64 = 1e-5;
/// Cap on the scan grid size.
const MAX_SCAN_POINTS: usize = 1 << 22;

/// Maps an angle to `(-pi, pi]`.
pub fn canonical_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if (t + PI).abs() < 1e-12 || (t - PI).abs() < 1e-12 {
        t = PI;
    }
    t
}

/// Distance between two angles on the circle.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyPoint {
    coords: Vec<f64>,
}

impl FrequencyPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self {
            coords: coords.into_iter().map(canonical_angle).collect(),
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn torus_distance(&self, other: &FrequencyPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| circle_distance(*a, *b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f64>> for FrequencyPoint {
    type Error = String;
    fn try_from(v: Vec<f64>) -> std::result::Result<Self, String> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err("frequency coordinates must be finite".into());
        }
        Ok(Self::new(v))
    }
}

impl From<FrequencyPoint> for Vec<f64> {
    fn from(p: FrequencyPoint) -> Self {
        p.coords
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaximizerSet {
    pub points: Vec<FrequencyPoint>,
    #[serde(with = "crate::cjson::vec")]
    pub values: Vec<Complex64>,
    pub tol: f64,
    pub merge_radius: f64,
}

impl MaximizerSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `sum_x f(x) e^{i x.xi}`.
pub fn eval_charfn(f: &LatticeFunction, xi: &FrequencyPoint) -> Complex64 {
    eval_charfn_at(f, xi.coords())
}

/// Same as [`eval_charfn`] on raw coordinates.
pub fn eval_charfn_at(f: &LatticeFunction, xi: &[f64]) -> Complex64 {
    f.iter()
        .map(|(x, c)| {
            let phase: f64 = x.iter().zip(xi).map(|(&a, &b)| a as f64 * b).sum();
            c * Complex64::from_polar(1.0, phase)
        })
        .sum()
}

/// Value, gradient and Hessian (row-major) of the characteristic function.
pub fn charfn_derivatives(f: &LatticeFunction, xi: &[f64]) -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
    let d = xi.len();
    let mut v = Complex64::default();
    let mut g = vec![Complex64::default(); d];
    let mut h = vec![Complex64::default(); d * d];
    let i = Complex64::i();
    for (x, c) in f.iter() {
        let phase: f64 = x.iter().zip(xi).map(|(&a, &b)| a as f64 * b).sum();
        let e = c * Complex64::from_polar(1.0, phase);
        v += e;
        for j in 0..d {
            g[j] += e * i * x[j] as f64;
            for k in 0..d {
                h[j * d + k] -= e * (x[j] * x[k]) as f64;
            }
        }
    }
    (v, g, h)
}

/// Scan resolution used when the caller passes no explicit grid size.
pub fn default_grid_per_axis(f: &LatticeFunction) -> usize {
    let width = f
        .support_box()
        .map(|b| b.shape().into_iter().max().unwrap_or(1))
        .unwrap_or(1);
    let d = f.dim().max(1) as u32;
    let cap = (MAX_SCAN_POINTS as f64).powf(1.0 / f64::from(d)).floor() as usize;
    (64 * width).clamp(8, cap.max(8))
}

struct ScanResult {
    max_sq: f64,
    peaks: Vec<Vec<f64>>,
}

/// Dense scan of `|f^|^2`. Returns the grid max and the discrete local
/// maxima within `window` (in `|f^|`) of that max.
fn scan(f: &LatticeFunction, n: usize, window: f64) -> ScanResult {
    let d = f.dim();
    let total = n.pow(d as u32);
    let h = 2.0 * PI / n as f64;
    let angle = |k: usize| -PI + h * (k as f64 + 1.0);
    let mut vals = vec![0.0; total];
    let entries: Vec<(Vec<i64>, Complex64)> = f.iter().map(|(x, c)| (x.to_vec(), c)).collect();
    let mut idx = vec![0usize; d];
    for slot in vals.iter_mut() {
        let xi: Vec<f64> = idx.iter().map(|&k| angle(k)).collect();
        let mut s = Complex64::default();
        for (x, c) in &entries {
            let phase: f64 = x.iter().zip(&xi).map(|(&a, &b)| a as f64 * b).sum();
            s += c * Complex64::from_polar(1.0, phase);
        }
        *slot = s.norm_sqr();
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
        }
    }
    let max_sq = vals.iter().copied().fold(0.0, f64::max);
    let threshold = (max_sq.sqrt() - window).max(0.0).powi(2);
    let mut peaks = Vec::new();
    let offsets: Vec<Vec<i64>> = neighbour_offsets(d);
    for (flat, &v) in vals.iter().enumerate() {
        if v < threshold {
            continue;
        }
        let mut k = flat;
        let mut pos = vec![0usize; d];
        for j in (0..d).rev() {
            pos[j] = k % n;
            k /= n;
        }
        let is_peak = offsets.iter().all(|off| {
            let mut nb = 0usize;
            for j in 0..d {
                let q = (pos[j] as i64 + off[j]).rem_euclid(n as i64) as usize;
                nb = nb * n + q;
            }
            // Ties resolve towards the lower flat index.
            vals[nb] < v || (vals[nb] == v && nb > flat)
        });
        if is_peak {
            peaks.push(pos.iter().map(|&q| angle(q)).collect());
        }
    }
    ScanResult { max_sq, peaks }
}

fn neighbour_offsets(d: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        let off: Vec<i64> = (0..d)
            .map(|_| {
                let o = (c % 3) as i64 - 1;
                c /= 3;
                o
            })
            .collect();
        if off.iter().any(|&o| o != 0) {
            out.push(off);
        }
    }
    out
}

/// Damped Newton ascent on `|f^|^2` from `start`.
fn polish(f: &LatticeFunction, start: &[f64]) -> Vec<f64> {
    let d = start.len();
    let mut xi = start.to_vec();
    let objective = |z: &[f64]| eval_charfn_at(f, z).norm_sqr();
    let mut value = objective(&xi);
    for _ in 0..200 {
        let (v, g, h) = charfn_derivatives(f, &xi);
        let grad: Vec<f64> = (0..d).map(|j| 2.0 * (v.conj() * g[j]).re).collect();
        let mut hess = nalgebra::DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                hess[(j, k)] = 2.0 * (g[k].conj() * g[j] + v.conj() * h[j * d + k]).re;
            }
        }
        let gvec = nalgebra::DVector::from_vec(grad.clone());
        if gvec.norm() < 1e-300 {
            break;
        }
        // Newton direction on the negated Hessian, regularized until it is
        // positive definite; falls back to gradient direction.
        let neg = -hess;
        let mut shift = 0.0;
        let mut dir = gvec.clone();
        for _ in 0..60 {
            let mat = &neg + nalgebra::DMatrix::<f64>::identity(d, d) * shift;
            if let Some(ch) = mat.clone().cholesky() {
                dir = ch.solve(&gvec);
                break;
            }
            shift = if shift == 0.0 {
                1e-8 * (1.0 + neg.norm())
            } else {
                shift * 10.0
            };
        }
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = xi.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
            let tv = objective(&trial);
            if tv >= value {
                let delta: f64 = dir.iter().map(|x| (step * x).abs()).fold(0.0, f64::max);
                moved = delta > 0.0 && trial != xi;
                xi = trial;
                value = tv;
                if delta < 1e-16 {
                    moved = false;
                }
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    xi
}

/// Snaps coordinates to nearby `k pi / q` when doing so does not lower `|f^|`
/// by more than roundoff. Degenerate maxima are only located to about
/// `1e-6` by Newton in double precision.
fn snap_rational(f: &LatticeFunction, xi: &[f64]) -> Vec<f64> {
    let base = eval_charfn_at(f, xi).norm();
    let mut out = xi.to_vec();
    for j in 0..xi.len() {
        let mut best: Option<f64> = None;
        for q in 1..=SNAP_MAX_DENOM {
            let k = (xi[j] * q as f64 / PI).round();
            let cand = k * PI / q as f64;
            if (cand - xi[j]).abs() < SNAP_RADIUS {
                best = Some(cand);
                break;
            }
        }
        if let Some(c) = best {
            let mut trial = out.clone();
            trial[j] = c;
            if eval_charfn_at(f, &trial).norm() >= base - 1e-13 {
                out = trial;
            }
        }
    }
    out
}

/// Global maximum of `|f^|` on the torus.
pub fn sup_abs_charfn(f: &LatticeFunction, grid_per_axis: usize) -> f64 {
    let n = grid_per_axis.max(8);
    let res = scan(f, n, 1e-2);
    let mut best = res.max_sq.sqrt();
    for p in &res.peaks {
        let q = polish(f, p);
        best = best.max(eval_charfn_at(f, &q).norm());
    }
    best
}

/// Points of the torus where `|f^| >= 1 - tol`, for a normalized `f`.
pub fn find_maximizers(f: &LatticeFunction, grid_per_axis: usize, tol: f64) -> Result<MaximizerSet> {
    let n = grid_per_axis.max(8);
    if f.is_empty() {
        return Err(Error::EmptySupport);
    }
    let res = scan(f, n, 1e-2);
    let mut found: Vec<(FrequencyPoint, Complex64)> = Vec::new();
    let mut sup = res.max_sq.sqrt();
    for p in &res.peaks {
        let polished = snap_rational(f, &polish(f, p));
        let point = FrequencyPoint::new(polished);
        let value = eval_charfn(f, &point);
        sup = sup.max(value.norm());
        found.push((point, value));
    }
    if (sup - 1.0).abs() > tol {
        return Err(Error::Precondition(format!(
            "sup |f^| = {sup:.15} is not 1 within {tol:e}; divide the input by sup_abs_charfn first"
        )));
    }
    found.retain(|(_, v)| v.norm() >= 1.0 - tol);
    // Merge near-duplicates, keeping the larger modulus.
    found.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()));
    let mut merged: Vec<(FrequencyPoint, Complex64)> = Vec::new();
    for (p, v) in found {
        if merged.iter().all(|(q, _)| q.torus_distance(&p) > DEFAULT_MERGE_RADIUS) {
            merged.push((p, v));
        }
    }
    merged.sort_by(|a, b| {
        a.0.coords()
            .iter()
            .zip(b.0.coords())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (points, values) = merged.into_iter().unzip();
    Ok(MaximizerSet {
        points,
        values,
        tol,
        merge_radius: DEFAULT_MERGE_RADIUS,
    })
}

/// Tolerance on `|f^(xi0)| = 1` required by [`gamma_series`].
pub const GAMMA_UNIT_TOL: f64 = 1e-8;

/// Truncated series of `Log(f^(xi + xi0) / f^(xi0))` through total degree `order`.
pub fn gamma_series(f: &LatticeFunction, xi0: &FrequencyPoint, order: u32) -> Result<PowerSeries> {
    if order < 2 {
        return Err(Error::Input(format!("series order must be at least 2, got {order}")));
    }
    if order > MAX_SERIES_ORDER {
        return Err(Error::Resource(format!(
            "series order {order} exceeds the maximum {MAX_SERIES_ORDER}"
        )));
    }
    let d = f.dim();
    if xi0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: xi0.dim(),
        });
    }
    let v0 = eval_charfn(f, xi0);
    if (v0.norm() - 1.0).abs() > GAMMA_UNIT_TOL {
        return Err(Error::Precondition(format!(
            "|f^(xi0)| = {} is not 1; expansion point must be a maximizer",
            v0.norm()
        )));
    }
    let i = Complex64::i();
    let multis = MultiIndex::all_up_to(d, order);
    let phased: Vec<(Vec<i64>, Complex64)> = f
        .iter()
        .map(|(x, c)| {
            let phase: f64 = x.iter().zip(xi0.coords()).map(|(&a, &b)| a as f64 * b).sum();
            (x.to_vec(), c * Complex64::from_polar(1.0, phase) / v0)
        })
        .collect();
    let mut ratio = PowerSeries::zero(d, order);
    for alpha in multis {
        let fact = alpha.factorial();
        let mut s = Complex64::default();
        for (x, c) in &phased {
            let mut term = *c;
            for (j, &a) in alpha.0.iter().enumerate() {
                if a > 0 {
                    term *= (i * x[j] as f64).powu(a);
                }
            }
            s += term;
        }
        ratio.set(alpha, s / fact);
    }
    let c0 = ratio.constant_term();
    if (c0 - 1.0).norm() > 1e-10 {
        return Err(Error::Internal(format!(
            "constant term of the ratio series is {c0}, expected 1"
        )));
    }
    ratio.set(MultiIndex::zero(d), Complex64::default());
    let log = ratio.log1p()?;
    Ok(log.map_coeffs(|c| {
        Complex64::new(
            if c.re.abs() < crate::series::SNAP_TOL {
                0.0
            } else {
                c.re
            },
            if c.im.abs() < crate::series::SNAP_TOL {
                0.0
            } else {
                c.im
            },
        )
    }))
}
