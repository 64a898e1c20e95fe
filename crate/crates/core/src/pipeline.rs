//! End-to-end analysis: maximizers, logarithmic expansions, classification,
//! rate functions, and the verification runs built on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::attractor::{AttractorTerm, QuadratureSpec};
use crate::bounds::{
    decay_fit, decay_slope, fit_constant, llt_error_grid_from_power, EnvelopeSpec, EnvelopeTerm, FitResult, Trend,
};
use crate::error::{Error, Result};
use crate::homogeneity::{classify_expansion_with, ClassifyOptions, Expansion, ExponentMatrix, Status};
use crate::lattice::{conv_power, ConvMethod, LatticeFunction};
use crate::legendre::RateFunction;
use crate::spectral::{
    default_grid_per_axis, find_maximizers, gamma_series, sup_abs_charfn, FrequencyPoint, DEFAULT_TOL,
};
use crate::DEFAULT_SEED;

pub const DEFAULT_ORDER: u32 = 8;
pub const DEFAULT_M_MAX: u32 = 4;
/// Inputs whose sup deviates from 1 by more than this are rescaled.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Default regression window for local-limit error decay.
pub const DEFAULT_LLT_N: [u64; 4] = [50, 100, 200, 400];

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub order: u32,
    pub m_max: u32,
    pub grid_per_axis: Option<usize>,
    pub tol: f64,
    pub seed: u64,
    pub exponent_hint: Option<ExponentMatrix>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            m_max: DEFAULT_M_MAX,
            grid_per_axis: None,
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            exponent_hint: None,
        }
    }
}

/// One pure-power term `c xi_j^{2m}` of a diagonal `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureTerm {
    pub c: f64,
    pub m: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSummary {
    /// `R#(x) = sum_j (2m_j - 1) c_j (|x_j| / (2 m_j c_j))^{2m_j/(2m_j-1)}`.
    ClosedForm {
        terms: Vec<PureTerm>,
    },
    /// Closed form in the coordinates `A^T x`.
    ClosedFormTransformed {
        terms: Vec<PureTerm>,
        a_t: Vec<Vec<f64>>,
    },
    Numeric,
}

impl RateSummary {
    fn of(rate: &RateFunction) -> Self {
        let pure = |c: &[(f64, u32)]| c.iter().map(|&(c, m)| PureTerm { c, m }).collect();
        match rate {
            RateFunction::Closed(c) => Self::ClosedForm { terms: pure(c) },
            RateFunction::Transformed { inner, a_t } => match inner.as_ref() {
                RateFunction::Closed(c) => Self::ClosedFormTransformed {
                    terms: pure(c),
                    a_t: a_t.row_iter().map(|r| r.iter().copied().collect()).collect(),
                },
                _ => Self::Numeric,
            },
            RateFunction::Numeric { .. } => Self::Numeric,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointReport {
    pub xi: FrequencyPoint,
    #[serde(with = "crate::cjson")]
    pub value: Complex64,
    pub expansion: Expansion,
    pub rate_function: Option<RateSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub classified: bool,
    /// `(maximizer index, reason)` for every unclassified point.
    pub unclassified: Vec<(usize, String)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub seed: String,
    pub dim: usize,
    pub order: u32,
    pub m_max: u32,
    pub grid_per_axis: usize,
    /// The input was divided by this factor before analysis.
    pub normalization: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub maximizers: Vec<PointReport>,
    pub verdict: Verdict,
}

/// Report plus the normalized input and evaluators derived from it.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub f: LatticeFunction,
    pub report: AnalysisReport,
    rates: Vec<Option<RateFunction>>,
}

pub fn format_seed(seed: u64) -> String {
    format!("0x{seed:X}")
}

pub fn analyze(input: &LatticeFunction, cfg: &AnalysisConfig) -> Result<Analysis> {
    if input.is_empty() {
        return Err(Error::EmptySupport);
    }
    let grid = cfg.grid_per_axis.unwrap_or_else(|| default_grid_per_axis(input));
    let sup = sup_abs_charfn(input, grid);
    if !(sup > 0.0) {
        return Err(Error::Input("characteristic function vanishes identically".into()));
    }
    let (f, normalization) = if (sup - 1.0).abs() > NORMALIZATION_TOL {
        (input.scale(Complex64::new(1.0 / sup, 0.0)), sup)
    } else {
        (input.clone(), 1.0)
    };
    let set = find_maximizers(&f, grid, cfg.tol)?;
    let opts = ClassifyOptions {
        m_max: cfg.m_max,
        exponent_hint: cfg.exponent_hint.clone(),
        seed: cfg.seed,
    };
    let mut maximizers = Vec::with_capacity(set.len());
    let mut rates = Vec::with_capacity(set.len());
    let mut unclassified = Vec::new();
    for (idx, (xi, value)) in set.points.iter().zip(&set.values).enumerate() {
        let gamma = gamma_series(&f, xi, cfg.order)?;
        let expansion = classify_expansion_with(&gamma, &opts)?;
        if let Status::Unclassified(reason) = &expansion.status {
            unclassified.push((idx, reason.clone()));
        }
        let rate = rate_for(&expansion);
        maximizers.push(PointReport {
            xi: xi.clone(),
            value: *value,
            rate_function: rate.as_ref().map(RateSummary::of),
            expansion,
        });
        rates.push(rate);
    }
    let report = AnalysisReport {
        seed: format_seed(cfg.seed),
        dim: f.dim(),
        order: cfg.order,
        m_max: cfg.m_max,
        grid_per_axis: grid,
        normalization,
        k: maximizers.len(),
        maximizers,
        verdict: Verdict {
            classified: unclassified.is_empty(),
            unclassified,
        },
    };
    Ok(Analysis { f, report, rates })
}

fn rate_for(e: &Expansion) -> Option<RateFunction> {
    let r = e.r.as_ref()?;
    Some(match &e.structure {
        Some(s) if !s.is_identity() => RateFunction::with_normal_form(r, &s.pa.real_part(), &s.a),
        _ => RateFunction::for_polynomial(r),
    })
}

impl Analysis {
    fn require_classified(&self) -> Result<()> {
        if self.report.verdict.classified {
            Ok(())
        } else {
            Err(Error::Classification(format!(
                "unclassified maximizers: {:?}",
                self.report.verdict.unclassified
            )))
        }
    }

    pub fn attractor_terms(&self) -> Result<Vec<AttractorTerm>> {
        self.require_classified()?;
        self.report
            .maximizers
            .iter()
            .map(|pt| {
                let p = pt
                    .expansion
                    .p
                    .clone()
                    .ok_or_else(|| Error::Internal("classified point without P".into()))?;
                AttractorTerm::new(pt.xi.clone(), pt.value, pt.expansion.alpha.clone(), p)
            })
            .collect()
    }

    /// Envelope with shared constants `c`, `m`.
    pub fn envelope_spec(&self, c: f64, m: f64, use_lambda: bool) -> Result<EnvelopeSpec> {
        self.require_classified()?;
        let terms = self
            .report
            .maximizers
            .iter()
            .zip(&self.rates)
            .map(|(pt, rate)| {
                let e = &pt.expansion;
                let missing = || Error::Internal("classified point without exponents".into());
                Ok(EnvelopeTerm {
                    mu: e.mu.ok_or_else(missing)?.value,
                    lambda: e.lambda.ok_or_else(missing)?.value.value,
                    alpha: e.alpha.clone(),
                    rate: rate.clone().ok_or_else(missing)?,
                    c,
                    m,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnvelopeSpec { terms, use_lambda })
    }

    /// Smallest `mu_k + lambda_k`: the predicted decay order of the local-limit error.
    pub fn llt_order(&self) -> Result<f64> {
        let spec = self.envelope_spec(1.0, 1.0, true)?;
        Ok(spec.terms.iter().map(|t| t.mu + t.lambda).fold(f64::INFINITY, f64::min))
    }

    /// Smallest `mu_k`: the on-diagonal decay order of `f^(n)`.
    pub fn gauss_order(&self) -> Result<f64> {
        let spec = self.envelope_spec(1.0, 1.0, false)?;
        Ok(spec.terms.iter().map(|t| t.mu).fold(f64::INFINITY, f64::min))
    }
}

/// Added to drift coordinate 0 of every term when corrupting on purpose.
pub const CORRUPT_AXIS: usize = 0;

fn corrupt_terms(terms: &mut [AttractorTerm], delta: f64) {
    for t in terms {
        t.alpha[CORRUPT_AXIS] += delta;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: FitResult,
    pub trend: Trend,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussVerification {
    pub seed: String,
    pub drift_offset: f64,
    pub fits: Vec<FitReport>,
    /// Values of `M` whose `minimal_C` sequence is stable.
    pub feasible_m: Vec<f64>,
    /// Some `M` in the sweep admits a stable constant.
    pub bounded: bool,
}

/// Fits the Gaussian bound of `|f^(n)|` for every `M`.
pub fn verify_gauss(
    a: &Analysis,
    n_list: &[u64],
    m_grid: &[f64],
    drift_offset: f64,
    seed: u64,
) -> Result<GaussVerification> {
    let spec = a
        .envelope_spec(1.0, 1.0, false)?
        .with_drift_offset(CORRUPT_AXIS, drift_offset);
    let data = n_list
        .iter()
        .map(|&n| Ok((n, conv_power(&a.f, n, ConvMethod::Auto)?)))
        .collect::<Result<Vec<_>>>()?;
    let fits: Vec<FitReport> = fit_constant(&data, &spec, m_grid)?
        .into_iter()
        .map(|fit| FitReport {
            trend: fit.trend(),
            fit,
        })
        .collect();
    Ok(GaussVerification {
        seed: format_seed(seed),
        drift_offset,
        feasible_m: feasible(&fits),
        bounded: fits.iter().any(|f| f.trend.stable),
        fits,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LltVerification {
    pub seed: String,
    pub drift_offset: f64,
    pub n_values: Vec<u64>,
    pub decay: FitResult,
    pub expected_slope: f64,
    pub slope_tolerance: f64,
    pub slope_ok: bool,
    pub fits: Vec<FitReport>,
    pub feasible_m: Vec<f64>,
    pub bounded: bool,
}

fn feasible(fits: &[FitReport]) -> Vec<f64> {
    fits.iter().filter(|f| f.trend.stable).filter_map(|f| f.fit.m).collect()
}

pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Local-limit error decay and envelope fits over the support of each `f^(n)`.
pub fn verify_llt(
    a: &Analysis,
    n_list: &[u64],
    m_grid: &[f64],
    drift_offset: f64,
    quad: &QuadratureSpec,
    seed: u64,
) -> Result<LltVerification> {
    let mut terms = a.attractor_terms()?;
    corrupt_terms(&mut terms, drift_offset);
    let spec = a
        .envelope_spec(1.0, 1.0, true)?
        .with_drift_offset(CORRUPT_AXIS, drift_offset);
    let mut data = Vec::with_capacity(n_list.len());
    let mut sups = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let power = conv_power(&a.f, n, ConvMethod::Auto)?;
        let grid = llt_error_grid_from_power(&power, &terms, n, &power.support_box()?, quad)?;
        sups.push(grid.max());
        data.push((n, grid.to_lattice()?));
    }
    let decay = decay_fit(n_list, sups)?;
    let expected = -a.llt_order()?;
    let fits: Vec<FitReport> = fit_constant(&data, &spec, m_grid)?
        .into_iter()
        .map(|fit| FitReport {
            trend: fit.trend(),
            fit,
        })
        .collect();
    Ok(LltVerification {
        seed: format_seed(seed),
        drift_offset,
        n_values: n_list.to_vec(),
        slope_ok: (decay.slope - expected).abs() <= SLOPE_TOLERANCE,
        expected_slope: expected,
        slope_tolerance: SLOPE_TOLERANCE,
        decay,
        feasible_m: feasible(&fits),
        bounded: fits.iter().any(|f| f.trend.stable),
        fits,
    })
}

/// Convenience wrapper matching [`decay_slope`] on an analysis.
pub fn llt_decay(a: &Analysis, n_list: &[u64], quad: &QuadratureSpec) -> Result<FitResult> {
    decay_slope(&a.f, &a.attractor_terms()?, n_list, None, quad)
}
