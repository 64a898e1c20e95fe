//! Legendre-Fenchel transforms `R#(x) = sup_xi { x.xi - R(xi) }` of real
//! polynomials: closed forms for sums of pure even powers, multistart
//! damped Newton ascent otherwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogeneity::ExponentMatrix;
use crate::sampling;
use crate::series::{PowerSeries, RealPoly};
use crate::DEFAULT_SEED;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendreEvalConfig {
    pub multistart_per_axis: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub box_scale: f64,
}

impl Default for LegendreEvalConfig {
    fn default() -> Self {
        Self {
            multistart_per_axis: 5,
            max_iter: 100,
            grad_tol: 1e-12,
            box_scale: 4.0,
        }
    }
}

impl LegendreEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multistart_per_axis == 0 || self.max_iter == 0 || !(self.grad_tol > 0.0) || !(self.box_scale > 0.0) {
            return Err(Error::Input("Legendre configuration fields must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LfValue {
    pub value: f64,
    pub argmax: Vec<f64>,
}

/// `sum_j (2m_j - 1) c_j (|x_j| / (2 m_j c_j))^{2m_j/(2m_j-1)}` for
/// `R = sum_j c_j xi_j^{2 m_j}`, given as `(c_j, m_j)` pairs.
pub fn lf_closed_form_diagonal(coeffs: &[(f64, u32)], x: &[f64]) -> Result<f64> {
    if coeffs.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: coeffs.len(),
            found: x.len(),
        });
    }
    let mut total = 0.0;
    for (&(c, m), &xj) in coeffs.iter().zip(x) {
        if !(c > 0.0) || m == 0 {
            return Err(Error::Input(format!(
                "pure-power term needs c > 0 and m >= 1, got ({c}, {m})"
            )));
        }
        let two_m = 2.0 * f64::from(m);
        let q = two_m / (two_m - 1.0);
        total += (two_m - 1.0) * c * (xj.abs() / (two_m * c)).powf(q);
    }
    Ok(total)
}

/// `(c_j, m_j)` when `R` is exactly `sum_j c_j xi_j^{2 m_j}` with one term per
/// variable.
pub fn diagonal_form(r: &PowerSeries) -> Option<Vec<(f64, u32)>> {
    let d = r.dim();
    let mut out: Vec<Option<(f64, u32)>> = vec![None; d];
    for (alpha, c) in r.terms() {
        if c.re == 0.0 {
            continue;
        }
        let active: Vec<usize> = alpha.active_vars().collect();
        let [j] = active.as_slice() else {
            return None;
        };
        let k = alpha.0[*j];
        if k % 2 != 0 || out[*j].is_some() || c.re <= 0.0 {
            return None;
        }
        out[*j] = Some((c.re, k / 2));
    }
    out.into_iter().collect()
}

/// Closed form for a pure-power polynomial; cross terms are unsupported.
pub fn lf_closed_form(r: &PowerSeries, x: &[f64]) -> Result<f64> {
    let coeffs =
        diagonal_form(r).ok_or_else(|| Error::Unsupported("R is not a sum of pure even powers; use lf_eval".into()))?;
    lf_closed_form_diagonal(&coeffs, x)
}

struct Ascent {
    value: f64,
    argmax: Vec<f64>,
}

fn ascend(rp: &RealPoly, x: &[f64], start: Vec<f64>, cfg: &LegendreEvalConfig, limit: f64) -> Result<Ascent> {
    let d = x.len();
    let xn = sampling::norm(x);
    let f = |xi: &[f64]| -> f64 { x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() - rp.value(xi) };
    let mut xi = start;
    let mut value = f(&xi);
    for _ in 0..cfg.max_iter {
        let (_, g_r, h_r) = rp.value_grad_hess(&xi);
        let g = DVector::from_iterator(d, (0..d).map(|j| x[j] - g_r[j]));
        if g.norm() <= cfg.grad_tol * (1.0 + xn) {
            break;
        }
        // Newton system (Hess R + mu I) delta = grad f, regularized until solvable.
        let h = DMatrix::from_row_slice(d, d, &h_r);
        let mut mu = 0.0;
        let mut delta = g.clone();
        for _ in 0..40 {
            let mat = &h + DMatrix::<f64>::identity(d, d) * mu;
            if let Some(ch) = mat.cholesky() {
                delta = ch.solve(&g);
                break;
            }
            mu = if mu == 0.0 { 1e-10 * (1.0 + h.amax()) } else { mu * 10.0 };
        }
        let slope = g.dot(&delta);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = xi.iter().zip(delta.iter()).map(|(a, b)| a + step * b).collect();
            let tv = f(&trial);
            if tv >= value + 1e-4 * step * slope || (tv >= value && step < 1e-8) {
                accepted = trial != xi;
                xi = trial;
                value = tv;
                break;
            }
            step *= 0.5;
        }
        if sampling::norm(&xi) > limit {
            return Err(Error::Numerical(format!(
                "Legendre ascent diverged (|xi| > {limit:e}) at x = {x:?}"
            )));
        }
        if !accepted {
            break;
        }
    }
    Ok(Ascent { value, argmax: xi })
}

/// Multistart ascent for `sup_xi { x.xi - R(xi) }`.
pub fn lf_eval(r: &PowerSeries, x: &[f64], cfg: &LegendreEvalConfig) -> Result<LfValue> {
    cfg.validate()?;
    let d = r.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    let rp = RealPoly::from_series(&r.real_part());
    let half: Vec<f64> = (0..d)
        .map(|j| {
            let m = (r.degree_in(j).max(2) as f64 / 2.0).ceil();
            cfg.box_scale * (1.0 + x[j].abs()).powf(1.0 / (2.0 * m - 1.0))
        })
        .collect();
    let limit = 1e3 * half.iter().copied().fold(0.0, f64::max);
    // Odd per-axis counts so that 0 is always a start.
    let k = cfg.multistart_per_axis | 1;
    let total = k.pow(d as u32);
    let mut best = LfValue {
        value: 0.0,
        argmax: vec![0.0; d],
    };
    for code in 0..total {
        let mut c = code;
        let start: Vec<f64> = (0..d)
            .map(|j| {
                let i = c % k;
                c /= k;
                if k == 1 {
                    0.0
                } else {
                    -half[j] + 2.0 * half[j] * i as f64 / (k - 1) as f64
                }
            })
            .collect();
        let a = ascend(&rp, x, start, cfg, limit)?;
        if a.value > best.value {
            best = LfValue {
                value: a.value,
                argmax: a.argmax,
            };
        }
    }
    Ok(best)
}

/// Evaluator for the rate function `R#`.
#[derive(Clone, Debug)]
pub enum RateFunction {
    Closed(Vec<(f64, u32)>),
    Numeric {
        r: PowerSeries,
        cfg: LegendreEvalConfig,
    },
    /// `R#(x) = R_A#(A^T x)`.
    Transformed {
        inner: Box<RateFunction>,
        a_t: DMatrix<f64>,
    },
}

impl RateFunction {
    /// Closed form when `R` is diagonal, numeric ascent otherwise.
    pub fn for_polynomial(r: &PowerSeries) -> Self {
        match diagonal_form(r) {
            Some(c) => Self::Closed(c),
            None => Self::Numeric {
                r: r.real_part(),
                cfg: LegendreEvalConfig::default(),
            },
        }
    }

    /// Uses the normal form `R_A(xi) = R(A xi)` when it is diagonal.
    pub fn with_normal_form(r: &PowerSeries, r_a: &PowerSeries, a: &DMatrix<f64>) -> Self {
        if let Some(c) = diagonal_form(r) {
            return Self::Closed(c);
        }
        if let Some(c) = diagonal_form(r_a) {
            return Self::Transformed {
                inner: Box::new(Self::Closed(c)),
                a_t: a.transpose(),
            };
        }
        Self::for_polynomial(r)
    }

    pub fn is_closed_form(&self) -> bool {
        match self {
            Self::Closed(_) => true,
            Self::Numeric { .. } => false,
            Self::Transformed { inner, .. } => inner.is_closed_form(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Closed(c) => lf_closed_form_diagonal(c, x),
            Self::Numeric { r, cfg } => Ok(lf_eval(r, x, cfg)?.value),
            Self::Transformed { inner, a_t } => {
                let y: Vec<f64> = (a_t * DVector::from_column_slice(x)).iter().copied().collect();
                inner.eval(&y)
            }
        }
    }
}

pub fn lf_homogeneity_check(r: &PowerSeries, d: &ExponentMatrix, samples: usize) -> Result<f64> {
    lf_homogeneity_check_seeded(r, d, samples, DEFAULT_SEED)
}

/// Max over samples of `|R#(t^{I-D} x) - t R#(x)| / (1 + t R#(x))`.
pub fn lf_homogeneity_check_seeded(r: &PowerSeries, d: &ExponentMatrix, samples: usize, seed: u64) -> Result<f64> {
    let dim = r.dim();
    let rate = RateFunction::for_polynomial(r);
    let f = ExponentMatrix::new(DMatrix::<f64>::identity(dim, dim) - d.mat())?;
    let mut rng = sampling::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let t = sampling::log_uniform(&mut rng, 0.125, 8.0);
        let x: Vec<f64> = sampling::unit_ball_point(&mut rng, dim)
            .iter()
            .map(|v| 3.0 * v)
            .collect();
        let tx: Vec<f64> = (f.power(t)? * DVector::from_column_slice(&x)).iter().copied().collect();
        let base = t * rate.eval(&x)?;
        worst = worst.max((rate.eval(&tx)? - base).abs() / (1.0 + base));
    }
    Ok(worst)
}
