//! Truncated multivariate power series with complex coefficients.
//!
//! A [`PowerSeries`] is a finite map from multi-indices to coefficients,
//! truncated at a total degree `order`. Polynomials are series whose order is
//! at least their degree; every product is truncated, so the algebra is the
//! quotient by monomials of degree `order + 1`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients below this magnitude are stored as exact zero.
pub const SNAP_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn unit(dim: usize, j: usize, power: u32) -> Self {
        let mut v = vec![0; dim];
        v[j] = power;
        Self(v)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Variables with a positive exponent.
    pub fn active_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &a)| a > 0).map(|(j, _)| j)
    }

    /// `alpha!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&a| (1..=a).map(f64::from).product::<f64>())
            .product()
    }

    /// All multi-indices in `dim` variables with total degree `<= order`.
    pub fn all_up_to(dim: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; dim];
        fn rec(j: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if j == cur.len() {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for a in 0..=left {
                cur[j] = a;
                rec(j + 1, left - a, cur, out);
            }
            cur[j] = 0;
        }
        rec(0, order, &mut cur, &mut out);
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (j, a) in self.0.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries {
    dim: usize,
    order: u32,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

impl PowerSeries {
    pub fn zero(dim: usize, order: u32) -> Self {
        Self {
            dim,
            order,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, order: u32, c: Complex64) -> Self {
        let mut s = Self::zero(dim, order);
        s.set(MultiIndex::zero(dim), c);
        s
    }

    /// Builds a series from `(exponents, coefficient)` terms; terms above
    /// `order` are rejected.
    pub fn from_terms<I>(dim: usize, order: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, Complex64)>,
    {
        let mut s = Self::zero(dim, order);
        for (alpha, c) in terms {
            if alpha.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: alpha.len(),
                });
            }
            let alpha = MultiIndex(alpha);
            if alpha.total() > order {
                return Err(Error::Input(format!("term {alpha} exceeds truncation order {order}")));
            }
            let sum = s.coeff(&alpha) + c;
            s.set(alpha, sum);
        }
        Ok(s)
    }

    /// Polynomial with real coefficients, truncation order equal to its degree.
    pub fn real_polynomial(dim: usize, terms: &[(&[u32], f64)]) -> Result<Self> {
        let degree = terms.iter().map(|(a, _)| a.iter().sum::<u32>()).max().unwrap_or(0);
        Self::from_terms(
            dim,
            degree,
            terms.iter().map(|(a, c)| (a.to_vec(), Complex64::new(*c, 0.0))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Complex64 {
        self.coeffs.get(alpha).copied().unwrap_or_default()
    }

    pub fn coeff_of(&self, alpha: &[u32]) -> Complex64 {
        self.coeff(&MultiIndex(alpha.to_vec()))
    }

    /// Sets a coefficient, snapping tiny values to zero.
    pub fn set(&mut self, alpha: MultiIndex, c: Complex64) {
        debug_assert_eq!(alpha.dim(), self.dim);
        if alpha.total() > self.order {
            return;
        }
        if c.norm() < SNAP_TOL {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, c);
        }
    }

    /// Nonzero terms in multi-index order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, Complex64)> {
        self.coeffs.iter().map(|(a, c)| (a, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest total degree among nonzero terms.
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(MultiIndex::total).max().unwrap_or(0)
    }

    /// Largest exponent of variable `j` among nonzero terms.
    pub fn degree_in(&self, j: usize) -> u32 {
        self.coeffs.keys().map(|a| a.0[j]).max().unwrap_or(0)
    }

    /// Same coefficients, different truncation order (terms above it dropped).
    pub fn with_order(&self, order: u32) -> Self {
        Self {
            dim: self.dim,
            order,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(a, _)| a.total() <= order)
                .map(|(a, c)| (a.clone(), *c))
                .collect(),
        }
    }

    pub fn filter<F: Fn(&MultiIndex, Complex64) -> bool>(&self, keep: F) -> Self {
        Self {
            dim: self.dim,
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(a, c)| keep(a, **c))
                .map(|(a, c)| (a.clone(), *c))
                .collect(),
        }
    }

    pub fn map_coeffs<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        let mut out = Self::zero(self.dim, self.order);
        for (a, c) in &self.coeffs {
            out.set(a.clone(), f(*c));
        }
        out
    }

    pub fn real_part(&self) -> Self {
        self.map_coeffs(|c| Complex64::new(c.re, 0.0))
    }

    pub fn scale(&self, k: Complex64) -> Self {
        self.map_coeffs(|c| c * k)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.with_order(self.order.min(other.order));
        for (a, c) in &other.coeffs {
            let v = out.coeff(a) + c;
            out.set(a.clone(), v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Truncated product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let order = self.order.min(other.order);
        let mut acc: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for (a, x) in &self.coeffs {
            let ta = a.total();
            if ta > order {
                continue;
            }
            for (b, y) in &other.coeffs {
                if ta + b.total() <= order {
                    *acc.entry(a.add(b)).or_default() += x * y;
                }
            }
        }
        let mut out = Self::zero(self.dim, order);
        for (a, c) in acc {
            out.set(a, c);
        }
        Ok(out)
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeff(&MultiIndex::zero(self.dim))
    }

    /// Formal `log(1 + u)` for a series `u` with zero constant term.
    pub fn log1p(&self) -> Result<Self> {
        if self.constant_term().norm() > 0.0 {
            return Err(Error::Internal("log1p needs a series without constant term".into()));
        }
        let mut out = Self::zero(self.dim, self.order);
        let mut power = self.clone();
        for j in 1..=self.order {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            out = out.add(&power.scale(Complex64::new(sign / f64::from(j), 0.0)))?;
            if j < self.order {
                power = power.mul(self)?;
                if power.is_zero() {
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Formal `exp(s)` for a series with zero constant term.
    pub fn exp(&self) -> Result<Self> {
        if self.constant_term().norm() > 0.0 {
            return Err(Error::Internal("exp needs a series without constant term".into()));
        }
        let one = Self::constant(self.dim, self.order, Complex64::new(1.0, 0.0));
        let mut out = one.clone();
        let mut power = one;
        for j in 1..=self.order {
            power = power.mul(self)?.scale(Complex64::new(1.0 / f64::from(j), 0.0));
            if power.is_zero() {
                break;
            }
            out = out.add(&power)?;
        }
        Ok(out)
    }

    /// Evaluates the (truncated) series at a complex point.
    pub fn eval_complex(&self, z: &[Complex64]) -> Complex64 {
        debug_assert_eq!(z.len(), self.dim);
        let max_pow = self.order as usize;
        let pows: Vec<Vec<Complex64>> = z
            .iter()
            .map(|&zj| {
                let mut p = Vec::with_capacity(max_pow + 1);
                let mut acc = Complex64::new(1.0, 0.0);
                for _ in 0..=max_pow {
                    p.push(acc);
                    acc *= zj;
                }
                p
            })
            .collect();
        self.coeffs
            .iter()
            .map(|(a, c)| {
                a.0.iter()
                    .enumerate()
                    .fold(*c, |acc, (j, &k)| acc * pows[j][k as usize])
            })
            .sum()
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        let z: Vec<Complex64> = xi.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.eval_complex(&z)
    }

    /// `P(A xi)` as a series in `xi`. Linear substitution preserves total
    /// degree, so the truncation order is unchanged.
    pub fn compose_linear(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: a.nrows(),
            });
        }
        let d = self.dim;
        let order = self.order;
        // Row j of A as a linear form.
        let forms: Vec<PowerSeries> = (0..d)
            .map(|j| {
                let mut s = Self::zero(d, order);
                for k in 0..d {
                    s.set(MultiIndex::unit(d, k, 1), Complex64::new(a[(j, k)], 0.0));
                }
                s
            })
            .collect();
        let max_deg = self.degree() as usize;
        let mut powers: Vec<Vec<PowerSeries>> = Vec::with_capacity(d);
        for form in &forms {
            let mut ps = vec![Self::constant(d, order, Complex64::new(1.0, 0.0))];
            for k in 1..=max_deg {
                let next = ps[k - 1].mul(form)?;
                ps.push(next);
            }
            powers.push(ps);
        }
        let mut out = Self::zero(d, order);
        for (alpha, c) in &self.coeffs {
            let mut term = Self::constant(d, order, *c);
            for (j, &k) in alpha.0.iter().enumerate() {
                if k > 0 {
                    term = term.mul(&powers[j][k as usize])?;
                }
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// Univariate pieces `p_j` when every monomial involves at most one
    /// variable, so that `P(xi) = c + sum_j p_j(xi_j)`. Entry `k` of piece `j`
    /// is the coefficient of `xi_j^k` (the constant is placed in piece 0).
    pub fn separable_parts(&self) -> Option<Vec<Vec<Complex64>>> {
        let mut parts = vec![vec![Complex64::default(); self.degree() as usize + 1]; self.dim];
        for (a, c) in &self.coeffs {
            let active: Vec<usize> = a.active_vars().collect();
            match active.as_slice() {
                [] => parts[0][0] += c,
                [j] => parts[*j][a.0[*j] as usize] = *c,
                _ => return None,
            }
        }
        for p in parts.iter_mut() {
            while p.len() > 1 && p.last().is_some_and(|c| c.norm() == 0.0) {
                p.pop();
            }
        }
        Some(parts)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    alpha: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct SeriesRecord {
    dim: usize,
    order: u32,
    coeffs: Vec<TermRecord>,
}

impl Serialize for PowerSeries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesRecord {
            dim: self.dim,
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .map(|(a, c)| TermRecord {
                    alpha: a.0.clone(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PowerSeries {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = SeriesRecord::deserialize(d)?;
        PowerSeries::from_terms(
            rec.dim,
            rec.order,
            rec.coeffs.into_iter().map(|t| (t.alpha, Complex64::new(t.re, t.im))),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Real polynomial compiled for fast evaluation of value, gradient and Hessian.
#[derive(Clone, Debug)]
pub struct RealPoly {
    dim: usize,
    max_pow: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl RealPoly {
    /// Real parts of the coefficients of `s`.
    pub fn from_series(s: &PowerSeries) -> Self {
        let terms: Vec<(Vec<u32>, f64)> = s
            .terms()
            .filter(|(_, c)| c.re != 0.0)
            .map(|(a, c)| (a.0.clone(), c.re))
            .collect();
        let max_pow = terms.iter().flat_map(|(a, _)| a.iter().copied()).max().unwrap_or(0) as usize;
        Self {
            dim: s.dim(),
            max_pow,
            terms,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn powers(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|&xj| {
                let mut p = Vec::with_capacity(self.max_pow + 1);
                let mut acc = 1.0;
                for _ in 0..=self.max_pow {
                    p.push(acc);
                    acc *= xj;
                }
                p
            })
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let p = self.powers(x);
        self.terms
            .iter()
            .map(|(a, c)| a.iter().enumerate().fold(*c, |acc, (j, &k)| acc * p[j][k as usize]))
            .sum()
    }

    /// Value, gradient and Hessian (row-major `d x d`).
    pub fn value_grad_hess(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let p = self.powers(x);
        let pw = |j: usize, k: i64| -> f64 {
            if k < 0 {
                0.0
            } else {
                p[j][k as usize]
            }
        };
        let mut v = 0.0;
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        for (a, c) in &self.terms {
            let mono: f64 = a.iter().enumerate().map(|(j, &k)| pw(j, k as i64)).product();
            v += c * mono;
            for i in 0..d {
                let ai = a[i] as i64;
                if ai == 0 {
                    continue;
                }
                let rest: f64 = (0..d).filter(|&j| j != i).map(|j| pw(j, a[j] as i64)).product();
                g[i] += c * ai as f64 * pw(i, ai - 1) * rest;
                h[i * d + i] += c * (ai * (ai - 1)) as f64 * pw(i, ai - 2) * rest;
                for k in (i + 1)..d {
                    let ak = a[k] as i64;
                    if ak == 0 {
                        continue;
                    }
                    let rest2: f64 = (0..d)
                        .filter(|&j| j != i && j != k)
                        .map(|j| pw(j, a[j] as i64))
                        .product();
                    let val = c * (ai * ak) as f64 * pw(i, ai - 1) * pw(k, ak - 1) * rest2;
                    h[i * d + k] += val;
                    h[k * d + i] += val;
                }
            }
        }
        (v, g, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn log_of_one_plus_x() {
        let u = PowerSeries::from_terms(1, 6, [(vec![1], c(1.0))]).unwrap();
        let l = u.log1p().unwrap();
        for k in 1..=6u32 {
            let expected = if k % 2 == 1 { 1.0 } else { -1.0 } / f64::from(k);
            assert!((l.coeff_of(&[k]).re - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn factored_quartic_in_rotated_coordinates() {
        // (η+ζ)^2 + (η-ζ)^4 composed with the rotation by π/4.
        let p = PowerSeries::real_polynomial(
            2,
            &[
                (&[2, 0], 1.0),
                (&[1, 1], 2.0),
                (&[0, 2], 1.0),
                (&[4, 0], 1.0),
                (&[3, 1], -4.0),
                (&[2, 2], 6.0),
                (&[1, 3], -4.0),
                (&[0, 4], 1.0),
            ],
        )
        .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = DMatrix::from_row_slice(2, 2, &[s, s, s, -s]);
        let pa = p.compose_linear(&a).unwrap();
        assert!((pa.coeff_of(&[2, 0]).re - 2.0).abs() < 1e-12);
        assert!((pa.coeff_of(&[0, 4]).re - 4.0).abs() < 1e-12);
        assert_eq!(pa.num_terms(), 2);
    }

    #[test]
    fn separable_detection() {
        let p = PowerSeries::real_polynomial(2, &[(&[2, 0], 0.5), (&[0, 4], 1.0 / 16.0)]).unwrap();
        let parts = p.separable_parts().unwrap();
        assert_eq!(parts[0].len(), 3);
        assert_eq!(parts[1].len(), 5);
        let q = PowerSeries::real_polynomial(2, &[(&[1, 1], 1.0)]).unwrap();
        assert!(q.separable_parts().is_none());
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let p = PowerSeries::real_polynomial(2, &[(&[2, 0], 1.0), (&[1, 2], -0.5), (&[0, 4], 0.25), (&[3, 1], 0.1)])
            .unwrap();
        let rp = RealPoly::from_series(&p);
        let x = [0.3, -0.7];
        let (v, g, h) = rp.value_grad_hess(&x);
        assert!((v - p.eval(&x).re).abs() < 1e-14);
        let e = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += e;
            xm[i] -= e;
            let fd = (rp.value(&xp) - rp.value(&xm)) / (2.0 * e);
            assert!((fd - g[i]).abs() < 1e-8);
            let (_, gp, _) = rp.value_grad_hess(&xp);
            let (_, gm, _) = rp.value_grad_hess(&xm);
            for k in 0..2 {
                assert!(((gp[k] - gm[k]) / (2.0 * e) - h[i * 2 + k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn json_uses_alpha_arrays() {
        let p = PowerSeries::from_terms(2, 4, [(vec![2, 0], Complex64::new(0.5, -1.0))]).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(
            text,
            r#"{"dim":2,"order":4,"coeffs":[{"alpha":[2,0],"re":0.5,"im":-1.0}]}"#
        );
        let back: PowerSeries = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn exp_inverts_log1p(a in -0.9f64..0.9, b in -0.9f64..0.9, q in -0.5f64..0.5) {
            let u = PowerSeries::from_terms(
                2,
                7,
                [(vec![1, 0], c(a)), (vec![0, 1], c(b)), (vec![1, 1], c(q))],
            )
            .unwrap();
            let back = u.log1p().unwrap().exp().unwrap();
            let one = PowerSeries::constant(2, 7, c(1.0));
            let diff = back.sub(&one).unwrap().sub(&u).unwrap();
            prop_assert!(diff.max_abs_coeff() < 1e-12);
        }

        #[test]
        fn eval_is_multiplicative(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let p = PowerSeries::real_polynomial(2, &[(&[1, 0], 1.0), (&[0, 2], -2.0)]).unwrap().with_order(6);
            let q = PowerSeries::real_polynomial(2, &[(&[0, 0], 3.0), (&[2, 1], 0.5)]).unwrap().with_order(6);
            let pq = p.mul(&q).unwrap();
            let lhs = pq.eval(&[x, y]);
            let rhs = p.eval(&[x, y]) * q.eval(&[x, y]);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
