//! Exponent matrices, semi-elliptic normal forms and the classification of
//! a logarithmic expansion into drift, principal part and remainder.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{self, weighted_sphere_min, DEFAULT_SPHERE_SAMPLES};
use crate::series::{MultiIndex, PowerSeries, RealPoly};
use crate::DEFAULT_SEED;

pub type Rational = Ratio<i64>;

/// Residual below which `t P(xi) = P(t^E xi)` is accepted.
pub const EXPONENT_TOL: f64 = 1e-10;
/// Minimum of `Re P` on the weighted sphere required for positive definiteness.
pub const PD_TOL: f64 = 1e-8;
/// Default number of `(t, xi)` samples in [`verify_exponent`].
pub const DEFAULT_EXPONENT_SAMPLES: usize = 200;
/// Default bound on the weight search.
pub const DEFAULT_M_MAX: u32 = 4;
/// Largest `k` for eigenvalue snapping to `1/(2k)`.
pub const MAX_WEIGHT: u32 = 32;

/// Coefficients of the expansion below this are treated as zero.
const COEFF_TOL: f64 = 1e-12;
/// Off-weight coefficients of `P_A` below this are dropped.
const OFF_WEIGHT_TOL: f64 = 1e-10;
const EIGEN_SNAP_TOL: f64 = 1e-8;
const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// `|alpha : 2m| = sum_j alpha_j / (2 m_j)` in exact arithmetic.
pub fn weighted_degree(alpha: &MultiIndex, m: &[u32]) -> Rational {
    alpha
        .0
        .iter()
        .zip(m)
        .map(|(&a, &mj)| Rational::new(i64::from(a), 2 * i64::from(mj)))
        .sum()
}

/// `sum_j 1 / (2 m_j)`.
pub fn homogeneous_order(m: &[u32]) -> Rational {
    m.iter().map(|&mj| Rational::new(1, 2 * i64::from(mj))).sum()
}

/// Rational with its float value, for reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalValue {
    pub num: i64,
    pub den: i64,
    pub value: f64,
}

impl From<Rational> for RationalValue {
    fn from(r: Rational) -> Self {
        Self {
            num: *r.numer(),
            den: *r.denom(),
            value: *r.numer() as f64 / *r.denom() as f64,
        }
    }
}

impl RationalValue {
    pub fn ratio(&self) -> Rational {
        Rational::new(self.num, self.den)
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Input("matrix must be square and nonempty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

mod rows_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A candidate exponent matrix `E` with `t^E = exp((ln t) E)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentMatrix {
    #[serde(with = "rows_serde")]
    mat: DMatrix<f64>,
}

impl ExponentMatrix {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return Err(Error::Input("exponent matrix must be square".into()));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("exponent matrix entries must be finite".into()));
        }
        Ok(Self { mat })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    /// `diag(1/(2 m_j))`.
    pub fn from_weights(m: &[u32]) -> Result<Self> {
        let e: Vec<f64> = m.iter().map(|&mj| 1.0 / (2.0 * f64::from(mj))).collect();
        Self::diagonal(&e)
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// `t^E`.
    pub fn power(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Input(format!("t must be positive, got {t}")));
        }
        Ok((&self.mat * t.ln()).exp())
    }

    pub fn transpose(&self) -> Self {
        Self {
            mat: self.mat.transpose(),
        }
    }
}

/// `t^E xi`.
pub fn matrix_power_apply(e: &ExponentMatrix, t: f64, xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            found: xi.len(),
        });
    }
    let m = e.power(t)?;
    Ok((m * DVector::from_column_slice(xi)).iter().copied().collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentCheck {
    pub holds: bool,
    pub max_residual: f64,
    pub worst_t: f64,
    pub worst_xi: Vec<f64>,
}

pub fn verify_exponent(p: &PowerSeries, e: &ExponentMatrix, samples: usize) -> ExponentCheck {
    verify_exponent_seeded(p, e, samples, DEFAULT_SEED)
}

/// Max over `samples` random `(t, xi)` of `|P(t^E xi) - t P(xi)| / (1 + |t P(xi)|)`,
/// with `t` log-uniform on `[1/8, 8]` and `xi` in the unit ball.
pub fn verify_exponent_seeded(p: &PowerSeries, e: &ExponentMatrix, samples: usize, seed: u64) -> ExponentCheck {
    let mut rng = sampling::rng(seed);
    let d = p.dim();
    let mut out = ExponentCheck {
        holds: true,
        max_residual: 0.0,
        worst_t: 1.0,
        worst_xi: vec![0.0; d],
    };
    if e.dim() != d {
        out.holds = false;
        out.max_residual = f64::INFINITY;
        return out;
    }
    for _ in 0..samples.max(1) {
        let t = sampling::log_uniform(&mut rng, 0.125, 8.0);
        let xi = sampling::unit_ball_point(&mut rng, d);
        let Ok(txi) = matrix_power_apply(e, t, &xi) else {
            continue;
        };
        let rhs = p.eval(&xi) * t;
        let res = (p.eval(&txi) - rhs).norm() / (1.0 + rhs.norm());
        if res > out.max_residual || res.is_nan() {
            out.max_residual = res;
            out.worst_t = t;
            out.worst_xi = xi;
        }
    }
    out.holds = out.max_residual <= EXPONENT_TOL;
    out
}

/// Minimum of `Re P` on the weighted sphere `{sum_j xi_j^{2 m_j} = 1}`.
pub fn weighted_sphere_minimum(p: &PowerSeries, m: &[u32], seed: u64) -> f64 {
    let r = RealPoly::from_series(p);
    weighted_sphere_min(|u| r.value(u), m, DEFAULT_SPHERE_SAMPLES, seed).value
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemiEllipticStructure {
    pub m: Vec<u32>,
    /// Diagonal of `D = diag(1/(2 m_j))`.
    pub d: Vec<f64>,
    #[serde(with = "rows_serde")]
    pub a: DMatrix<f64>,
    pub pa: PowerSeries,
    /// Minimum of `Re P_A` on the weighted sphere (the coercivity constant).
    pub pd_min: f64,
}

impl SemiEllipticStructure {
    pub fn mu(&self) -> Rational {
        homogeneous_order(&self.m)
    }

    pub fn is_identity(&self) -> bool {
        let d = self.a.nrows();
        (&self.a - DMatrix::<f64>::identity(d, d)).amax() == 0.0
    }

    pub fn d_matrix(&self) -> ExponentMatrix {
        ExponentMatrix::diagonal(&self.d).expect("weights are finite")
    }
}

/// Eigen-decomposition of a diagonalizable exponent matrix with snapped
/// eigenvalues `1/(2 m_j)`. Columns of `a` are ordered by ascending `m`.
pub fn exponent_eigenbasis(e: &ExponentMatrix) -> Result<(DMatrix<f64>, Vec<u32>)> {
    let d = e.dim();
    let mat = e.mat();
    let eig = mat.complex_eigenvalues();
    let mut snapped: Vec<(f64, u32)> = Vec::with_capacity(d);
    for z in eig.iter() {
        if z.im.abs() > EIGEN_SNAP_TOL {
            return Err(Error::Unsupported(format!(
                "exponent matrix has non-real eigenvalue {z}; complex exponents are not supported"
            )));
        }
        let lam = z.re;
        if lam <= 0.0 {
            return Err(Error::NotPositiveHomogeneous(format!(
                "exponent eigenvalue {lam} is not positive"
            )));
        }
        let k = (1.0 / (2.0 * lam)).round();
        if !(1.0..=f64::from(MAX_WEIGHT)).contains(&k) || (lam - 1.0 / (2.0 * k)).abs() > EIGEN_SNAP_TOL {
            return Err(Error::NotPositiveHomogeneous(format!(
                "exponent eigenvalue {lam} is not of the form 1/(2k) with k <= {MAX_WEIGHT}"
            )));
        }
        snapped.push((lam, k as u32));
    }
    let mut weights: Vec<u32> = snapped.iter().map(|s| s.1).collect();
    weights.sort_unstable();
    weights.dedup();
    let scale = 1.0 + mat.amax();
    let mut columns: Vec<(u32, DVector<f64>)> = Vec::with_capacity(d);
    for &k in &weights {
        let mult = snapped.iter().filter(|s| s.1 == k).count();
        let lam_mean = snapped.iter().filter(|s| s.1 == k).map(|s| s.0).sum::<f64>() / mult as f64;
        let shifted = mat - DMatrix::<f64>::identity(d, d) * lam_mean;
        let svd = shifted.svd(false, true);
        let v_t = svd
            .v_t
            .as_ref()
            .ok_or_else(|| Error::Internal("SVD without V".into()))?;
        let null: Vec<DVector<f64>> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= 1e-6 * scale)
            .map(|(i, _)| v_t.row(i).transpose())
            .collect();
        if null.len() < mult {
            return Err(Error::Unsupported(format!(
                "exponent matrix is not diagonalizable (eigenvalue 1/{} has algebraic multiplicity {mult} \
                 but geometric multiplicity {}); the real Jordan form construction is not implemented",
                2 * k,
                null.len()
            )));
        }
        for v in canonical_basis(&null, d) {
            columns.push((k, v));
        }
    }
    // Ascending m; ties by lexicographically descending vectors.
    columns.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            b.1.iter()
                .zip(a.1.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let a = DMatrix::from_columns(&columns.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
    let m: Vec<u32> = columns.iter().map(|c| c.0).collect();
    let dvals = DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        m.iter().map(|&k| 1.0 / (2.0 * f64::from(k))),
    ));
    let residual = (mat * &a - &a * dvals).amax();
    if residual > EIGEN_RESIDUAL_TOL {
        return Err(Error::Unsupported(format!(
            "eigendecomposition residual {residual:e} exceeds {EIGEN_RESIDUAL_TOL:e}"
        )));
    }
    if a.clone().try_inverse().is_none() {
        return Err(Error::Unsupported("eigenvector matrix is singular".into()));
    }
    Ok((a, m))
}

/// Orthonormal basis of `span(null)` obtained by projecting the standard
/// basis and orthogonalizing in order. Each vector has a positive first
/// nonzero entry.
fn canonical_basis(null: &[DVector<f64>], d: usize) -> Vec<DVector<f64>> {
    let k = null.len();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(k);
    for j in 0..d {
        if out.len() == k {
            break;
        }
        let mut e = DVector::<f64>::zeros(d);
        e[j] = 1.0;
        let mut v = DVector::<f64>::zeros(d);
        for q in null {
            v += q * q.dot(&e);
        }
        for u in &out {
            let c = u.dot(&v);
            v -= u * c;
        }
        let n = v.norm();
        if n > 1e-8 {
            let mut v = v / n;
            for x in v.iter_mut() {
                if x.abs() < 1e-15 {
                    *x = 0.0;
                }
            }
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            out.push(v);
        }
    }
    out
}

/// Drops terms of `pa` whose weighted degree differs from 1, provided they
/// are below the off-weight tolerance.
fn clean_off_weight(pa: &PowerSeries, m: &[u32]) -> Result<PowerSeries> {
    let one = Rational::from_integer(1);
    let mut out = PowerSeries::zero(pa.dim(), pa.order());
    let scale = pa.max_abs_coeff().max(1.0);
    for (alpha, c) in pa.terms() {
        if weighted_degree(alpha, m) == one {
            let re = if c.re.abs() < 1e-14 * scale { 0.0 } else { c.re };
            let im = if c.im.abs() < 1e-14 * scale { 0.0 } else { c.im };
            out.set(alpha.clone(), Complex64::new(re, im));
        } else if c.norm() >= OFF_WEIGHT_TOL {
            return Err(Error::NotPositiveHomogeneous(format!(
                "term {alpha} with coefficient {c} has weighted degree {} != 1 in the normalized coordinates",
                weighted_degree(alpha, m)
            )));
        }
    }
    Ok(out)
}

/// Linear change of variables `A` bringing `P` into semi-elliptic form.
pub fn semi_elliptic_normalize(p: &PowerSeries, e: &ExponentMatrix) -> Result<SemiEllipticStructure> {
    semi_elliptic_normalize_seeded(p, e, DEFAULT_SEED)
}

pub fn semi_elliptic_normalize_seeded(p: &PowerSeries, e: &ExponentMatrix, seed: u64) -> Result<SemiEllipticStructure> {
    let check = verify_exponent_seeded(p, e, DEFAULT_EXPONENT_SAMPLES, seed);
    if !check.holds {
        return Err(Error::Precondition(format!(
            "E is not an exponent of P (residual {:e})",
            check.max_residual
        )));
    }
    let (a, m) = exponent_eigenbasis(e)?;
    let composed = p.compose_linear(&a)?;
    let pa = clean_off_weight(&composed, &m)?;
    let pd_min = weighted_sphere_minimum(&pa, &m, seed);
    if !(pd_min > PD_TOL) {
        return Err(Error::Classification(format!(
            "Re P_A is not positive definite (weighted-sphere minimum {pd_min:e})"
        )));
    }
    Ok(SemiEllipticStructure {
        d: m.iter().map(|&k| 1.0 / (2.0 * f64::from(k))).collect(),
        m,
        a,
        pa,
        pd_min,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason")]
pub enum Status {
    PositiveHomogeneousType,
    Unclassified(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambda {
    pub value: RationalValue,
    /// The remainder has no term of low enough weight within the truncation;
    /// `value` is then a lower bound.
    pub truncation_limited: bool,
}

/// Classification of a logarithmic expansion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Expansion {
    pub order: u32,
    pub certified_to_order: u32,
    pub status: Status,
    pub alpha: Vec<f64>,
    pub p: Option<PowerSeries>,
    pub r: Option<PowerSeries>,
    pub upsilon: Option<PowerSeries>,
    pub upsilon_a: Option<PowerSeries>,
    pub structure: Option<SemiEllipticStructure>,
    pub mu: Option<RationalValue>,
    pub lambda: Option<Lambda>,
}

impl Expansion {
    pub fn is_classified(&self) -> bool {
        self.status == Status::PositiveHomogeneousType
    }

    fn unclassified(order: u32, alpha: Vec<f64>, reason: &str) -> Self {
        Self {
            order,
            certified_to_order: order,
            status: Status::Unclassified(reason.to_string()),
            alpha,
            p: None,
            r: None,
            upsilon: None,
            upsilon_a: None,
            structure: None,
            mu: None,
            lambda: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifyOptions {
    pub m_max: u32,
    /// Exponent matrix used when no weight vector fits in native coordinates.
    pub exponent_hint: Option<ExponentMatrix>,
    pub seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            m_max: DEFAULT_M_MAX,
            exponent_hint: None,
            seed: DEFAULT_SEED,
        }
    }
}

fn for_each_weight(d: usize, m_max: u32, mut f: impl FnMut(&[u32])) {
    let mut m = vec![1u32; d];
    loop {
        f(&m);
        let mut j = d;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if m[j] < m_max {
                m[j] += 1;
                for q in m.iter_mut().skip(j + 1) {
                    *q = 1;
                }
                break;
            }
        }
    }
}

/// Splits a series into its weight-one part (negated, so that it is `P`) and
/// the rest, or `None` when some term has weight below one.
fn principal_split(nonlinear: &PowerSeries, m: &[u32]) -> Option<(PowerSeries, PowerSeries)> {
    let one = Rational::from_integer(1);
    let mut p = PowerSeries::zero(nonlinear.dim(), nonlinear.order());
    let mut rest = PowerSeries::zero(nonlinear.dim(), nonlinear.order());
    for (alpha, c) in nonlinear.terms() {
        if c.norm() <= COEFF_TOL {
            continue;
        }
        let w = weighted_degree(alpha, m);
        if w < one {
            return None;
        }
        if w == one {
            p.set(alpha.clone(), -c);
        } else {
            rest.set(alpha.clone(), c);
        }
    }
    if p.is_zero() {
        None
    } else {
        Some((p, rest))
    }
}

pub fn classify_expansion(gamma: &PowerSeries, m_max: u32) -> Result<Expansion> {
    classify_expansion_with(
        gamma,
        &ClassifyOptions {
            m_max,
            ..ClassifyOptions::default()
        },
    )
}

/// Decomposes `Gamma = i alpha.xi - P + Upsilon` with a semi-elliptic
/// principal part `P`.
pub fn classify_expansion_with(gamma: &PowerSeries, opts: &ClassifyOptions) -> Result<Expansion> {
    let d = gamma.dim();
    let order = gamma.order();
    if opts.m_max == 0 {
        return Err(Error::Input("m_max must be positive".into()));
    }
    if order < 2 * opts.m_max {
        return Err(Error::Precondition(format!(
            "truncation order {order} is below 2 m_max = {}",
            2 * opts.m_max
        )));
    }
    if gamma.constant_term().norm() > COEFF_TOL {
        return Err(Error::Precondition("expansion has a nonzero constant term".into()));
    }
    let mut alpha = vec![0.0; d];
    let mut drift_ok = true;
    for (j, a) in alpha.iter_mut().enumerate() {
        let c = gamma.coeff(&MultiIndex::unit(d, j, 1));
        if c.re.abs() > 1e-10 {
            drift_ok = false;
        }
        *a = c.im;
    }
    if !drift_ok {
        return Ok(Expansion::unclassified(
            order,
            alpha,
            "first-order term not purely imaginary",
        ));
    }
    let nonlinear = gamma.filter(|a, _| a.total() >= 2);

    let mut best: Option<(Rational, Vec<u32>, PowerSeries, PowerSeries, f64)> = None;
    for_each_weight(d, opts.m_max, |m| {
        let mu = homogeneous_order(m);
        if best.as_ref().is_some_and(|b| b.0 <= mu) {
            return;
        }
        if let Some((p, rest)) = principal_split(&nonlinear, m) {
            let pd = weighted_sphere_minimum(&p, m, opts.seed);
            if pd > PD_TOL {
                best = Some((mu, m.to_vec(), p, rest, pd));
            }
        }
    });

    if let Some((mu, m, p, upsilon, pd_min)) = best {
        let structure = SemiEllipticStructure {
            d: m.iter().map(|&k| 1.0 / (2.0 * f64::from(k))).collect(),
            a: DMatrix::identity(d, d),
            pa: p.clone(),
            pd_min,
            m: m.clone(),
        };
        let lambda = lambda_of_upsilon(&upsilon, &m)?;
        return Ok(Expansion {
            order,
            certified_to_order: order,
            status: Status::PositiveHomogeneousType,
            alpha,
            r: Some(p.real_part()),
            p: Some(p),
            upsilon_a: Some(upsilon.clone()),
            upsilon: Some(upsilon),
            structure: Some(structure),
            mu: Some(mu.into()),
            lambda: Some(lambda),
        });
    }

    let Some(e) = &opts.exponent_hint else {
        return Ok(Expansion::unclassified(
            order,
            alpha,
            "no semi-elliptic principal part up to m_max",
        ));
    };
    let (a, m) = exponent_eigenbasis(e)?;
    if m.iter().any(|&k| 2 * k > order) {
        return Err(Error::Precondition(format!(
            "truncation order {order} too small for weights {m:?} of the exponent hint"
        )));
    }
    let nonlinear_a = nonlinear.compose_linear(&a)?;
    let Some((pa, upsilon_a)) = principal_split(&nonlinear_a, &m) else {
        return Ok(Expansion::unclassified(
            order,
            alpha,
            "expansion is not homogeneous with respect to the supplied exponent",
        ));
    };
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal("eigenvector matrix not invertible".into()))?;
    let p = pa.compose_linear(&a_inv)?;
    let structure = semi_elliptic_normalize_seeded(&p, e, opts.seed)?;
    let upsilon = upsilon_a.compose_linear(&a_inv)?;
    let lambda = lambda_of_upsilon(&upsilon_a, &m)?;
    Ok(Expansion {
        order,
        certified_to_order: order,
        status: Status::PositiveHomogeneousType,
        alpha,
        r: Some(p.real_part()),
        p: Some(p),
        upsilon: Some(upsilon),
        upsilon_a: Some(upsilon_a),
        mu: Some(structure.mu().into()),
        structure: Some(structure),
        lambda: Some(lambda),
    })
}

/// `lambda = min |beta : 2m| - 1` over the nonzero coefficients of `Upsilon_A`.
///
/// The minimum is certified only when it does not exceed the smallest weight
/// a term beyond the truncation could have, `(order + 1) / (2 max m)`;
/// otherwise that bound minus one is returned, flagged.
pub fn lambda_of_upsilon(upsilon_a: &PowerSeries, m: &[u32]) -> Result<Lambda> {
    let one = Rational::from_integer(1);
    let max_m = i64::from(*m.iter().max().unwrap_or(&1));
    let horizon = Rational::new(i64::from(upsilon_a.order()) + 1, 2 * max_m);
    let mut min_w: Option<Rational> = None;
    for (alpha, c) in upsilon_a.terms() {
        if c.norm() <= COEFF_TOL {
            continue;
        }
        let w = weighted_degree(alpha, m);
        if w <= one {
            return Err(Error::Internal(format!(
                "remainder term {alpha} has weighted degree {w} <= 1"
            )));
        }
        min_w = Some(min_w.map_or(w, |v: Rational| v.min(w)));
    }
    Ok(match min_w {
        Some(w) if w <= horizon => Lambda {
            value: (w - one).into(),
            truncation_limited: false,
        },
        _ => Lambda {
            value: (horizon - one).into(),
            truncation_limited: true,
        },
    })
}

/// Least common multiple of the weights.
pub fn lcm(m: &[u32]) -> u64 {
    m.iter().fold(1u64, |acc, &k| acc.lcm(&u64::from(k)))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub c_lo: f64,
    pub c_hi: f64,
}

pub fn asymptotic_compare(r: &PowerSeries, m: &[u32], n_samples: usize) -> Result<Comparison> {
    asymptotic_compare_seeded(r, m, n_samples, DEFAULT_SEED)
}

/// Empirical bounds on `R(x) / sum_j |x_j|^{2 m_j}` over `|x|` in `[1e-3, 1e3]`.
///
/// Besides the ratio spread, the claimed weights are also rejected when
/// `diag(1/(2m))` is not an exponent of `R`: a degenerate direction can
/// escape the sampled range.
pub fn asymptotic_compare_seeded(r: &PowerSeries, m: &[u32], n_samples: usize, seed: u64) -> Result<Comparison> {
    let d = r.dim();
    if m.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.len(),
        });
    }
    let rp = RealPoly::from_series(r);
    let mut rng = sampling::rng(seed);
    let mut c_lo = f64::INFINITY;
    let mut c_hi: f64 = 0.0;
    for _ in 0..n_samples.max(1) {
        let rad = sampling::log_uniform(&mut rng, 1e-3, 1e3);
        let u = sampling::unit_direction(&mut rng, d);
        let x: Vec<f64> = u.iter().map(|v| v * rad).collect();
        let ratio = rp.value(&x) / sampling::weighted_gauge(&x, m);
        c_lo = c_lo.min(ratio);
        c_hi = c_hi.max(ratio);
    }
    if !(c_lo > 0.0) || !c_hi.is_finite() || c_hi / c_lo > 1e12 {
        return Err(Error::Comparison(format!(
            "ratio range [{c_lo:e}, {c_hi:e}] is degenerate for weights {m:?}"
        )));
    }
    let dmat = ExponentMatrix::from_weights(m)?;
    let check = verify_exponent_seeded(r, &dmat, DEFAULT_EXPONENT_SAMPLES, seed);
    if !check.holds {
        return Err(Error::Comparison(format!(
            "R is not homogeneous with weights {m:?} (residual {:e})",
            check.max_residual
        )));
    }
    Ok(Comparison { c_lo, c_hi })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubhomogeneityReport {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Ratios strictly decrease (or all vanish).
    pub decreasing: bool,
}

pub const DEFAULT_SUBHOM_SAMPLES: usize = 1000;

pub fn subhomogeneity_check(
    upsilon: &PowerSeries,
    r: &PowerSeries,
    e: &ExponentMatrix,
    radii: &[f64],
) -> Result<SubhomogeneityReport> {
    subhomogeneity_check_seeded(upsilon, r, e, radii, DEFAULT_SUBHOM_SAMPLES, DEFAULT_SEED)
}

/// For each radius `t`, the sup of `|Upsilon(t^E xi)| / t` over samples on the
/// level set `R(xi) = 1`.
pub fn subhomogeneity_check_seeded(
    upsilon: &PowerSeries,
    r: &PowerSeries,
    e: &ExponentMatrix,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<SubhomogeneityReport> {
    if radii.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Input("radii must be positive".into()));
    }
    let d = r.dim();
    let rp = RealPoly::from_series(r);
    let mut rng = sampling::rng(seed);
    // Level-set points: xi = s^E u with s = 1/R(u), valid since E is an exponent of R.
    let mut level = Vec::with_capacity(samples);
    while level.len() < samples.max(1) {
        let u = sampling::unit_direction(&mut rng, d);
        let ru = rp.value(&u);
        if ru <= 0.0 {
            return Err(Error::Precondition("R is not positive definite".into()));
        }
        level.push(matrix_power_apply(e, 1.0 / ru, &u)?);
    }
    let mut ratios = Vec::with_capacity(radii.len());
    for &t in radii {
        let pt = e.power(t)?;
        let mut sup: f64 = 0.0;
        for xi in &level {
            let x: Vec<f64> = (&pt * DVector::from_column_slice(xi)).iter().copied().collect();
            sup = sup.max(upsilon.eval(&x).norm() / t);
        }
        ratios.push(sup);
    }
    let all_zero = ratios.iter().all(|&v| v == 0.0);
    let decreasing = all_zero || ratios.windows(2).all(|w| w[1] < w[0] * (1.0 - 1e-9));
    Ok(SubhomogeneityReport {
        radii: radii.to_vec(),
        ratios,
        decreasing,
    })
}
