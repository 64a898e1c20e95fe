use convpow::attractor::QuadratureSpec;
use convpow::bounds::{
    decay_slope, default_m_grid, envelope_eval, fit_constant, llt_error_grid, EnvelopeSpec, EnvelopeTerm,
};
use convpow::builtins;
use convpow::lattice::{conv_power, BoxDomain, ConvMethod, LatticeFunction};
use convpow::legendre::RateFunction;
use convpow::pipeline::{analyze, verify_gauss, Analysis, AnalysisConfig};
use convpow::Complex64;
use proptest::prelude::*;

fn intro() -> Analysis {
    analyze(&builtins::intro(), &AnalysisConfig::default()).unwrap()
}

fn twopackets() -> Analysis {
    analyze(&builtins::twopackets(), &AnalysisConfig::default()).unwrap()
}

fn tens(hi: u64) -> Vec<u64> {
    (1..=hi / 10).map(|k| 10 * k).collect()
}

/// `C(n, (n+x)/2) / 2^n` through log-factorials.
fn binomial_walk(n: u64) -> LatticeFunction {
    let lf: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    let n_us = n as usize;
    let entries = (0..=n_us).map(|k| {
        let v = (lf[n_us] - lf[k] - lf[n_us - k] - n as f64 * 2f64.ln()).exp();
        (vec![2 * k as i64 - n as i64], Complex64::new(v, 0.0))
    });
    LatticeFunction::from_entries(1, entries).unwrap()
}

#[test]
fn intro_envelope_at_origin() {
    let spec = intro().envelope_spec(0.3, 0.5, false).unwrap();
    let v = envelope_eval(&spec, 100, &[0, 0]).unwrap();
    assert!((v - 2.0 * 0.3 * 100f64.powf(-0.75)).abs() < 1e-15);
    assert!((v - 0.018_974).abs() < 1e-6);
}

#[test]
fn single_term_at_drift_center() {
    let spec = EnvelopeSpec {
        terms: vec![EnvelopeTerm {
            mu: 0.5,
            lambda: 0.5,
            alpha: vec![0.25],
            rate: RateFunction::Closed(vec![(0.5, 1)]),
            c: 0.7,
            m: 0.4,
        }],
        use_lambda: false,
    };
    let v = envelope_eval(&spec, 64, &[16]).unwrap();
    assert!((v - 0.7 / 8.0).abs() < 1e-15);
}

#[test]
fn twopackets_envelope_near_packet() {
    let g = builtins::twopackets_gamma();
    let spec = twopackets().envelope_spec(0.15, 0.3, true).unwrap();
    let v = envelope_eval(&spec, 100, &[0, (100.0 * g).round() as i64]).unwrap();
    let lead = 2.0 * 0.15 * 100f64.powf(-1.5);
    assert!((v - lead).abs() <= 0.1 * lead, "{v} vs {lead}");
}

#[test]
fn intro_gaussian_bound_constants() {
    let a = intro();
    let ver = verify_gauss(&a, &tens(200), &[0.5], 0.0, 0).unwrap();
    let fit = &ver.fits[0];
    assert!(fit.fit.sup_c <= 0.3, "sup_C = {}", fit.fit.sup_c);
    assert!(fit.trend.stable);
    assert!(fit.fit.minimal_c.iter().all(|&c| c <= fit.fit.sup_c));
}

#[test]
fn corrupted_drift_is_detected() {
    let a = intro();
    let ver = verify_gauss(&a, &tens(200), &[0.5], 0.2, 0).unwrap();
    assert!(!ver.bounded);
    assert!(ver.fits[0].trend.unbounded);
}

#[test]
fn twopackets_llt_constants() {
    let a = twopackets();
    let terms = a.attractor_terms().unwrap();
    let spec = a.envelope_spec(1.0, 1.0, true).unwrap();
    let quad = QuadratureSpec::default();
    let data: Vec<(u64, LatticeFunction)> = (2..=20u64)
        .step_by(2)
        .map(|k| {
            let n = 10 * k;
            let p = conv_power(&a.f, n, ConvMethod::Auto).unwrap();
            let grid = llt_error_grid(&a.f, &terms, n, &p.support_box().unwrap(), &quad).unwrap();
            (n, grid.to_lattice().unwrap())
        })
        .collect();
    let fits = fit_constant(&data, &spec, &[0.3]).unwrap();
    assert!(fits[0].sup_c <= 0.15, "sup_C = {}", fits[0].sup_c);
}

#[test]
fn simple_walk_gaussian_bound_from_binomials() {
    let f = builtins::srw1d();
    let spec = EnvelopeSpec {
        terms: vec![EnvelopeTerm {
            mu: 0.5,
            lambda: 0.5,
            alpha: vec![0.0],
            rate: RateFunction::Closed(vec![(0.5, 1)]),
            c: 1.0,
            m: 1.0,
        }],
        use_lambda: false,
    };
    let ns = tens(200);
    let data: Vec<(u64, LatticeFunction)> = ns.iter().map(|&n| (n, binomial_walk(n))).collect();
    for (n, d) in &data {
        let engine = conv_power(&f, *n, ConvMethod::Auto).unwrap();
        for (x, v) in d.iter().filter(|(_, v)| v.norm() > 1e-12) {
            assert!((engine.get(x) - v).norm() <= 1e-12, "n={n} x={x:?}");
        }
    }
    for fit in fit_constant(&data, &spec, &[0.1, 0.25, 0.45]).unwrap() {
        assert!(fit.sup_c.is_finite() && fit.sup_c < 1.0);
        assert!(fit.trend().stable);
    }
}

#[test]
fn first_power_error_is_finite() {
    let a = intro();
    let terms = a.attractor_terms().unwrap();
    let w = BoxDomain::cube(2, -3, 3).unwrap();
    let g = llt_error_grid(&a.f, &terms, 1, &w, &QuadratureSpec::default()).unwrap();
    assert!(g.values.iter().all(|v| v.is_finite()));
}

#[test]
fn twopackets_error_peaks_at_packet_centers() {
    let a = twopackets();
    let terms = a.attractor_terms().unwrap();
    let w = BoxDomain::cube(2, -40, 40).unwrap();
    let grid = llt_error_grid(&a.f, &terms, 60, &w, &QuadratureSpec::default()).unwrap();
    let at = grid.argmax();
    let g = builtins::twopackets_gamma();
    let center = 60.0 * g;
    // Within two packet standard deviations sqrt(2 n gamma) of a center.
    let width = (2.0 * 60.0 * g).sqrt();
    assert!(
        at[0].abs() <= 2 * 8 && ((at[1].abs() as f64) - center).abs() <= 2.0 * width,
        "argmax {at:?}"
    );
}

#[test]
fn llt_decay_slopes() {
    let quad = QuadratureSpec::default();
    let ns = [50u64, 100, 200, 400];
    let a = intro();
    let s = decay_slope(&a.f, &a.attractor_terms().unwrap(), &ns, None, &quad).unwrap();
    assert!((s.slope + 1.25).abs() <= 0.15, "intro slope {}", s.slope);
    let plain = decay_slope(&a.f, &[], &ns, None, &quad).unwrap();
    assert!((plain.slope + 0.75).abs() <= 0.1, "intro sup slope {}", plain.slope);
    let b = twopackets();
    let s = decay_slope(&b.f, &b.attractor_terms().unwrap(), &ns, None, &quad).unwrap();
    assert!((s.slope + 1.5).abs() <= 0.15, "twopackets slope {}", s.slope);
}

#[test]
fn default_sweep_is_stable_for_intro() {
    let ver = verify_gauss(&intro(), &tens(200), &default_m_grid(), 0.0, 0).unwrap();
    assert!(ver.bounded);
    assert!(ver.fits.iter().all(|f| f.trend.stable));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_monotone_in_constants(
        c in 0.01f64..2.0, dc in 0.0f64..1.0, m in 0.01f64..1.0, dm in 0.0f64..1.0,
        n in 1u64..300, x in -60i64..60, y in -60i64..60,
    ) {
        let base = twopackets().envelope_spec(1.0, 1.0, true).unwrap();
        let v = envelope_eval(&base.with_constants(c, m), n, &[x, y]).unwrap();
        let more_c = envelope_eval(&base.with_constants(c + dc, m), n, &[x, y]).unwrap();
        let more_m = envelope_eval(&base.with_constants(c, m + dm), n, &[x, y]).unwrap();
        prop_assert!(more_c >= v);
        prop_assert!(more_m <= v);
    }
}
