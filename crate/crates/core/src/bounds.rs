//! Generalized Gaussian envelopes `sum_k C_k n^{-e_k} exp(-n M_k R_k#((x - n alpha_k)/n))`,
//! fitting of the free constant `C`, and decay rates of local-limit errors.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attractor::{attractor_grid, AttractorTerm, QuadratureSpec};
use crate::error::{Error, Result};
use crate::lattice::{conv_power, BoxDomain, ConvMethod, LatticeFunction};
use crate::legendre::RateFunction;

/// Default sweep `{0.05, 0.10, ..., 0.60}`.
pub fn default_m_grid() -> Vec<f64> {
    (1..=12).map(|k| f64::from(k) / 20.0).collect()
}

/// Envelope values below this are excluded from fits.
pub const UNDERFLOW: f64 = 1e-300;

/// Data below this fraction of the per-n maximum is excluded from fits;
/// FFT round-off dominates there.
pub const NOISE_FLOOR_REL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct EnvelopeTerm {
    pub mu: f64,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub rate: RateFunction,
    pub c: f64,
    pub m: f64,
}

#[derive(Clone, Debug)]
pub struct EnvelopeSpec {
    pub terms: Vec<EnvelopeTerm>,
    /// Use `mu + lambda` (local-limit error) instead of `mu` (Gaussian bound).
    pub use_lambda: bool,
}

impl EnvelopeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Input("envelope needs at least one term".into()));
        }
        for t in &self.terms {
            if !(t.c > 0.0 && t.m > 0.0 && t.mu > 0.0) || (self.use_lambda && !(t.lambda > 0.0)) {
                return Err(Error::Input(format!(
                    "envelope constants must be positive (C={}, M={}, mu={}, lambda={})",
                    t.c, t.m, t.mu, t.lambda
                )));
            }
        }
        Ok(())
    }

    /// Same terms with a shared `C` and `M`.
    pub fn with_constants(&self, c: f64, m: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.c = c;
            t.m = m;
        }
        out
    }

    /// Shifts every drift by `delta` in coordinate `axis`.
    pub fn with_drift_offset(&self, axis: usize, delta: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            if let Some(a) = t.alpha.get_mut(axis) {
                *a += delta;
            }
        }
        out
    }

    fn exponent(&self, t: &EnvelopeTerm) -> f64 {
        if self.use_lambda {
            t.mu + t.lambda
        } else {
            t.mu
        }
    }

    /// `R_k#((x - n alpha_k)/n)` for every term.
    fn rates(&self, n: u64, x: &[i64]) -> Result<Vec<f64>> {
        let nf = n as f64;
        self.terms
            .iter()
            .map(|t| {
                let v: Vec<f64> = x
                    .iter()
                    .zip(&t.alpha)
                    .map(|(&xj, a)| (xj as f64 - nf * a) / nf)
                    .collect();
                t.rate.eval(&v)
            })
            .collect()
    }
}

pub fn envelope_eval(spec: &EnvelopeSpec, n: u64, x: &[i64]) -> Result<f64> {
    if n == 0 {
        return Err(Error::Input("n must be at least 1".into()));
    }
    let nf = n as f64;
    let rates = spec.rates(n, x)?;
    Ok(spec
        .terms
        .iter()
        .zip(rates)
        .map(|(t, r)| t.c * nf.powf(-spec.exponent(t)) * (-nf * t.m * r).exp())
        .sum())
}

/// Least-squares slope of `ys` against `xs` and its standard error.
pub fn regression(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let k = xs.len();
    if k < 3 || ys.len() != k {
        return Err(Error::Input(format!(
            "regression needs at least 3 paired points, got {k}"
        )));
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("regression abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    Ok((slope, (ssr / (kf - 2.0) / sxx).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Envelope rate; absent for pure decay statistics.
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub n_values: Vec<u64>,
    /// Per-n statistic: the minimal admissible `C`, or the sup error for decay fits.
    #[serde(rename = "minimal_C")]
    pub minimal_c: Vec<f64>,
    #[serde(rename = "sup_C")]
    pub sup_c: f64,
    /// Slope of the log statistic against `log n`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// Points dropped per n because of underflow.
    pub excluded: Vec<usize>,
}

impl FitResult {
    fn from_values(m: Option<f64>, n_values: Vec<u64>, values: Vec<f64>, excluded: Vec<usize>) -> Result<Self> {
        if n_values.len() < 4 {
            return Err(Error::Input(format!(
                "need at least 4 values of n, got {}",
                n_values.len()
            )));
        }
        let kept: Vec<(f64, f64)> = n_values
            .iter()
            .zip(&values)
            .filter(|(_, v)| **v > UNDERFLOW && v.is_finite())
            .map(|(&n, &v)| ((n as f64).ln(), v.ln()))
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = kept.into_iter().unzip();
        let (slope, slope_stderr) = if xs.len() >= 3 {
            regression(&xs, &ys)?
        } else {
            (f64::NAN, f64::NAN)
        };
        let sup_c = values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            m,
            n_values,
            minimal_c: values,
            sup_c,
            slope,
            slope_stderr,
            excluded,
        })
    }

    pub fn trend(&self) -> Trend {
        trend(&self.minimal_c)
    }
}

/// Quartile comparison of a per-n sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub first_quartile_max: f64,
    pub last_quartile_max: f64,
    pub earlier_max: f64,
    /// Last quartile stays within 10% of everything before it.
    pub stable: bool,
    /// Last quartile at least doubles the first quartile.
    pub unbounded: bool,
}

pub fn trend(values: &[f64]) -> Trend {
    let k = values.len();
    let q = k.div_ceil(4).max(1).min(k);
    let max = |s: &[f64]| s.iter().copied().fold(0.0, f64::max);
    let first = max(&values[..q]);
    let last = max(&values[k - q..]);
    let earlier = if k > q { max(&values[..k - q]) } else { last };
    Trend {
        first_quartile_max: first,
        last_quartile_max: last,
        earlier_max: earlier,
        stable: last <= 1.1 * earlier,
        unbounded: last >= 2.0 * first,
    }
}

pub fn fit_constant(data: &[(u64, LatticeFunction)], spec: &EnvelopeSpec, m_grid: &[f64]) -> Result<Vec<FitResult>> {
    fit_constant_with(data, spec, m_grid, NOISE_FLOOR_REL)
}

/// Fits a shared `C` for each `M`: `minimal_C(n) = max_x |data_n(x)| / envelope(C=1)`
/// over points with `|data_n(x)| >= noise_floor_rel * max |data_n|`.
/// The `C` and `M` stored in `spec` are ignored.
pub fn fit_constant_with(
    data: &[(u64, LatticeFunction)],
    spec: &EnvelopeSpec,
    m_grid: &[f64],
    noise_floor_rel: f64,
) -> Result<Vec<FitResult>> {
    if m_grid.is_empty() || m_grid.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Input("M grid must be nonempty and positive".into()));
    }
    spec.with_constants(1.0, 1.0).validate()?;
    let mut per_m: Vec<Vec<f64>> = vec![Vec::with_capacity(data.len()); m_grid.len()];
    let mut excl: Vec<Vec<usize>> = vec![Vec::with_capacity(data.len()); m_grid.len()];
    for (n, f) in data {
        if f.is_empty() {
            return Err(Error::EmptySupport);
        }
        let n = *n;
        let nf = n as f64;
        let floor = noise_floor_rel * f.max_abs();
        let mut entries: Vec<(Vec<i64>, f64)> = Vec::with_capacity(f.len());
        let mut below = 0usize;
        for (x, c) in f.iter() {
            if c.norm() >= floor {
                entries.push((x.to_vec(), c.norm()));
            } else {
                below += 1;
            }
        }
        let rates: Vec<Vec<f64>> = entries
            .par_iter()
            .map(|(x, _)| spec.rates(n, x))
            .collect::<Result<_>>()?;
        let pows: Vec<f64> = spec.terms.iter().map(|t| nf.powf(-spec.exponent(t))).collect();
        for (mi, &m) in m_grid.iter().enumerate() {
            let (best, dropped) = entries
                .par_iter()
                .zip(&rates)
                .map(|((_, a), r)| {
                    let env: f64 = pows.iter().zip(r).map(|(p, rk)| p * (-nf * m * rk).exp()).sum();
                    if env < UNDERFLOW {
                        (0.0, 1usize)
                    } else {
                        (a / env, 0)
                    }
                })
                .reduce(|| (0.0, 0), |x, y| (x.0.max(y.0), x.1 + y.1));
            per_m[mi].push(best);
            excl[mi].push(dropped + below);
        }
    }
    let n_values: Vec<u64> = data.iter().map(|(n, _)| *n).collect();
    m_grid
        .iter()
        .zip(per_m.into_iter().zip(excl))
        .map(|(&m, (vals, ex))| FitResult::from_values(Some(m), n_values.clone(), vals, ex))
        .collect()
}

/// Real-valued grid on a box, row-major.
#[derive(Clone, Debug)]
pub struct ErrorGrid {
    pub window: BoxDomain,
    pub values: Vec<f64>,
}

impl ErrorGrid {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> Vec<i64> {
        let idx = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.window.point_at(idx)
    }

    /// Writes `x1,...,xd,error[,envelope]` rows.
    pub fn write_csv<W: Write>(&self, envelope: Option<&[f64]>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.window.dim();
        let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        header.push("error".into());
        if envelope.is_some() {
            header.push("envelope".into());
        }
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.window.point_at(i).iter().map(|c| c.to_string()).collect();
            row.push(v.to_string());
            if let Some(e) = envelope {
                row.push(e[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// The grid as a real lattice function, for constant fitting.
    pub fn to_lattice(&self) -> Result<LatticeFunction> {
        LatticeFunction::from_entries(
            self.window.dim(),
            self.values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > 0.0)
                .map(|(i, v)| (self.window.point_at(i), (*v).into())),
        )
    }
}

/// `|f^(n)(x) - A^n(x)|` over `window`, with `f^(n)` computed by the convolution engine.
pub fn llt_error_grid(
    f: &LatticeFunction,
    terms: &[AttractorTerm],
    n: u64,
    window: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<ErrorGrid> {
    let power = conv_power(f, n, ConvMethod::Auto)?;
    llt_error_grid_from_power(&power, terms, n, window, spec)
}

/// As [`llt_error_grid`] with a precomputed `f^(n)`.
pub fn llt_error_grid_from_power(
    power: &LatticeFunction,
    terms: &[AttractorTerm],
    n: u64,
    window: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<ErrorGrid> {
    let dense = power.dense_on(window)?;
    let values = if terms.is_empty() {
        dense.values.iter().map(|v| v.norm()).collect()
    } else {
        let a = attractor_grid(terms, n, window, spec)?;
        dense.values.iter().zip(a).map(|(p, q)| (p - q).norm()).collect()
    };
    Ok(ErrorGrid {
        window: window.clone(),
        values,
    })
}

/// Regression of `log sup_x |f^(n) - A^n|` against `log n`. The sup runs
/// over `window`, or over the support box of each `f^(n)` when `None`.
/// Empty `terms` gives the decay of `sup |f^(n)|`.
pub fn decay_slope(
    f: &LatticeFunction,
    terms: &[AttractorTerm],
    n_list: &[u64],
    window: Option<&BoxDomain>,
    spec: &QuadratureSpec,
) -> Result<FitResult> {
    if n_list.len() < 4 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input(format!(
            "n list must hold at least 4 increasing values, got {n_list:?}"
        )));
    }
    let mut sups = Vec::with_capacity(n_list.len());
    let mut excluded = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let power = conv_power(f, n, ConvMethod::Auto)?;
        let win = match window {
            Some(w) => w.clone(),
            None => power.support_box()?,
        };
        let s = llt_error_grid_from_power(&power, terms, n, &win, spec)?.max();
        excluded.push(usize::from(!(s > UNDERFLOW)));
        sups.push(s);
    }
    FitResult::from_values(None, n_list.to_vec(), sups, excluded)
}

/// Decay regression from precomputed sup errors.
pub fn decay_fit(n_list: &[u64], sups: Vec<f64>) -> Result<FitResult> {
    let excluded = sups.iter().map(|&s| usize::from(!(s > UNDERFLOW))).collect();
    FitResult::from_values(None, n_list.to_vec(), sups, excluded)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 1.5 * x).collect();
        let (s, e) = regression(&xs, &ys).unwrap();
        assert!((s + 1.5).abs() < 1e-14 && e < 1e-14);
    }

    #[test]
    fn trend_quartiles() {
        let rising: Vec<f64> = (1..=20).map(f64::from).collect();
        let t = trend(&rising);
        assert!(!t.stable && t.unbounded);
        let flat = vec![1.0; 20];
        let t = trend(&flat);
        assert!(t.stable && !t.unbounded);
    }

    #[test]
    fn m_grid_default() {
        let g = default_m_grid();
        assert_eq!(g.len(), 12);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[11] - 0.6).abs() < 1e-15);
    }
}
