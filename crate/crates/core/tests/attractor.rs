use std::f64::consts::PI;

use convpow::attractor::{
    attractor_sum, fourier_invert_power, fourier_invert_power_many, heat_kernel_eval, heat_kernel_eval_scaled,
    heat_kernel_eval_tensor, AttractorTerm, QuadratureSpec, ScaledComplex,
};
use convpow::builtins;
use convpow::lattice::{conv_power, ConvMethod};
use convpow::legendre::lf_closed_form_diagonal;
use convpow::pipeline::{analyze, AnalysisConfig};
use convpow::sampling;
use convpow::series::PowerSeries;
use convpow::spectral::FrequencyPoint;
use convpow::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn gamma() -> f64 {
    builtins::twopackets_gamma()
}

fn p_intro() -> PowerSeries {
    PowerSeries::real_polynomial(2, &[(&[2, 0], 0.5), (&[0, 4], 1.0 / 16.0)]).unwrap()
}

fn p_twopackets() -> PowerSeries {
    let g = gamma();
    PowerSeries::from_terms(
        2,
        2,
        [
            (vec![2, 0], Complex64::new(0.25, g / 4.0)),
            (vec![0, 2], Complex64::new(g, 0.0)),
        ],
    )
    .unwrap()
}

/// Logarithm of `1/(2 pi t sqrt(g(1+ig))) exp(-x^2/(t(1+ig)) - y^2/(4tg))`.
fn ln_twopackets_exact(t: f64, x: f64, y: f64) -> Complex64 {
    let g = gamma();
    let one_ig = Complex64::new(1.0, g);
    -(2.0 * PI * t).ln() - 0.5 * (one_ig * g).ln() - x * x / (one_ig * t) - y * y / (4.0 * t * g)
}

/// Relative distance of two scaled values, computed through logarithms.
fn log_rel_err(a: &ScaledComplex, b_ln: Complex64) -> f64 {
    let mut d = a.ln() - b_ln;
    d.im = (d.im + PI).rem_euclid(2.0 * PI) - PI;
    (d.exp() - 1.0).norm()
}

fn scaled_rel_err(a: &ScaledComplex, b: &ScaledComplex) -> f64 {
    log_rel_err(a, b.ln())
}

#[test]
fn gaussian_value_at_origin() {
    let p = PowerSeries::real_polynomial(1, &[(&[2], 1.0)]).unwrap();
    let v = heat_kernel_eval(&p, 1.0, &[0.0], &QuadratureSpec::default()).unwrap();
    assert!((v.re - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-13);
    assert!((v.re - 0.282_094_8).abs() < 1e-7);
}

#[test]
fn twopackets_closed_form() {
    let spec = QuadratureSpec::default();
    let p = p_twopackets();
    let mut rng = sampling::rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let t = rng.gen_range(1.0..100.0);
        let x = rng.gen_range(-5.0 * t..5.0 * t);
        let y = rng.gen_range(-5.0 * t..5.0 * t);
        let h = heat_kernel_eval_scaled(&p, t, &[x, y], &spec).unwrap();
        worst = worst.max(log_rel_err(&h, ln_twopackets_exact(t, x, y)));
    }
    assert!(worst <= 1e-8, "worst relative error {worst:e}");
}

#[test]
fn on_diagonal_scaling() {
    let spec = QuadratureSpec::default();
    let p = p_intro();
    let h1 = heat_kernel_eval(&p, 1.0, &[0.0, 0.0], &spec).unwrap();
    for t in [2.0f64, 10.0] {
        let ht = heat_kernel_eval(&p, t, &[0.0, 0.0], &spec).unwrap();
        assert!((ht - h1 * t.powf(-0.75)).norm() <= 1e-8 * ht.norm());
    }
}

/// Checks `H^t(x) = t^{-mu} H^1(t^{-D} x)` for a diagonal exponent `D`.
fn check_scaling(p: &PowerSeries, d: &[f64], points: &[(f64, Vec<f64>)], tensor: bool) {
    let spec = QuadratureSpec::default();
    let mu: f64 = d.iter().sum();
    let eval = |t: f64, x: &[f64]| {
        if tensor {
            heat_kernel_eval_tensor(p, t, x, &spec).unwrap()
        } else {
            heat_kernel_eval_scaled(p, t, x, &spec).unwrap()
        }
    };
    for (t, x) in points {
        let lhs = eval(*t, x);
        let y: Vec<f64> = x.iter().zip(d).map(|(xj, dj)| xj * t.powf(-dj)).collect();
        let rhs = eval(1.0, &y);
        let rhs = ScaledComplex {
            log_scale: rhs.log_scale - mu * t.ln(),
            mantissa: rhs.mantissa,
        };
        let err = scaled_rel_err(&lhs, &rhs);
        assert!(err <= 1e-8, "t={t} x={x:?}: relative error {err:e}");
    }
}

fn scaling_points(d: &[f64], seed: u64, count: usize) -> Vec<(f64, Vec<f64>)> {
    let mut rng = sampling::rng(seed);
    (0..count)
        .map(|_| {
            let t = sampling::log_uniform(&mut rng, 1.0, 100.0);
            let x = d.iter().map(|dj| rng.gen_range(-1.5..1.5) * t.powf(*dj)).collect();
            (t, x)
        })
        .collect()
}

#[test]
fn scaling_law_for_example_polynomials() {
    let d1 = [0.5, 0.25];
    check_scaling(&p_intro(), &d1, &scaling_points(&d1, 1, 25), false);
    let d2 = [0.5, 0.5];
    check_scaling(&p_twopackets(), &d2, &scaling_points(&d2, 2, 25), false);
}

#[test]
fn scaling_law_for_random_semi_elliptic() {
    let mut rng = sampling::rng(17);
    for case in 0..5u64 {
        let m = [rng.gen_range(1..=2u32), rng.gen_range(1..=3u32)];
        let c: [f64; 2] = [rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0)];
        let cross = Complex64::new(rng.gen_range(-0.6..0.6) * c[0].min(c[1]), rng.gen_range(-0.5..0.5));
        let p = PowerSeries::from_terms(
            2,
            2 * m[0].max(m[1]),
            [
                (vec![2 * m[0], 0], Complex64::new(c[0], rng.gen_range(-0.5..0.5))),
                (vec![0, 2 * m[1]], Complex64::new(c[1], rng.gen_range(-0.5..0.5))),
                (vec![m[0], m[1]], cross),
            ],
        )
        .unwrap();
        assert!(p.separable_parts().is_none());
        let d: Vec<f64> = m.iter().map(|&mj| 1.0 / (2.0 * f64::from(mj))).collect();
        check_scaling(&p, &d, &scaling_points(&d, 100 + case, 3), false);
    }
}

#[test]
fn conjugate_symmetry_for_real_coefficients() {
    let spec = QuadratureSpec::default();
    let p = p_intro();
    let mut rng = sampling::rng(9);
    for _ in 0..40 {
        let t: f64 = rng.gen_range(1.0..50.0);
        let x = [
            rng.gen_range(-3.0 * t..3.0 * t),
            rng.gen_range(-3.0..3.0) * t.powf(0.25),
        ];
        let h = heat_kernel_eval_scaled(&p, t, &x, &spec).unwrap();
        assert!(
            h.mantissa.im.abs() <= 1e-10 * h.mantissa.norm(),
            "{x:?}: {}",
            h.mantissa
        );
    }
}

#[test]
fn separable_path_matches_tensor_path() {
    let spec = QuadratureSpec::default();
    for p in [p_intro(), p_twopackets()] {
        for (t, x) in [(1.0, [0.0, 0.0]), (3.0, [1.0, -2.0]), (10.0, [-4.0, 3.0])] {
            let a = heat_kernel_eval_scaled(&p, t, &x, &spec).unwrap().to_complex();
            let b = heat_kernel_eval_tensor(&p, t, &x, &spec).unwrap().to_complex();
            assert!(
                (a - b).norm() <= 1e-9 * a.norm().max(b.norm()),
                "t={t} x={x:?}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn attractor_bound_shape() {
    // |H^t(x)| <= C t^{-mu} exp(-t M R#(x/t)) with M = 1/4 over t in {1,10,100}, |x| <= 10t.
    let spec = QuadratureSpec::default();
    let p = p_intro();
    let rate = [(0.5, 1u32), (1.0 / 16.0, 2u32)];
    let mut worst = f64::NEG_INFINITY;
    for t in [1.0f64, 10.0, 100.0] {
        for i in -10..=10 {
            for j in -10..=10 {
                let x = [t * f64::from(i), t * f64::from(j)];
                let h = heat_kernel_eval_scaled(&p, t, &x, &spec).unwrap();
                let scaled = [x[0] / t, x[1] / t];
                let ln_env = -0.75 * t.ln() - t * 0.25 * lf_closed_form_diagonal(&rate, &scaled).unwrap();
                worst = worst.max(h.ln_abs() - ln_env);
            }
        }
    }
    assert!(worst.is_finite() && worst.exp() < 1.0, "fitted C = {}", worst.exp());
}

#[test]
fn intro_attractor_collapses_to_sign() {
    let a = analyze(&builtins::intro(), &AnalysisConfig::default()).unwrap();
    let terms = a.attractor_terms().unwrap();
    assert_eq!(terms.len(), 2);
    let spec = QuadratureSpec::default();
    let p1 = &terms[0].p;
    let p2 = &terms[1].p;
    for n in [10u64, 37, 100] {
        for (x, y) in [(0i64, 0i64), (3, -2), (-5, 4), (7, 7)] {
            let got = attractor_sum(&terms, n, &[x, y], &spec).unwrap();
            let pt = [x as f64, y as f64];
            let h1 = heat_kernel_eval(p1, n as f64, &pt, &spec).unwrap();
            let h2 = heat_kernel_eval(p2, n as f64, &pt, &spec).unwrap();
            let sign = if (x + y + n as i64).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            };
            let want = h1 + h2 * sign;
            assert!(
                (got - want).norm() <= 1e-10 * (h1.norm() + h2.norm()),
                "n={n} ({x},{y})"
            );
        }
    }
}

#[test]
fn twopackets_attractor_matches_phase_display() {
    let a = analyze(&builtins::twopackets(), &AnalysisConfig::default()).unwrap();
    let terms = a.attractor_terms().unwrap();
    assert_eq!(terms.len(), 4);
    let spec = QuadratureSpec::default();
    let g = gamma();
    let h = |t: f64, x: f64, y: f64| ln_twopackets_exact(t, x, y).exp();
    let ipow = |e: f64| Complex64::from_polar(1.0, PI / 2.0 * e);
    let sgn = |k: i64| if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    for n in [6u64, 13, 30] {
        let nf = n as f64;
        for (x, y) in [(0i64, 2i64), (1, 5), (-2, -6), (3, 12), (0, -13)] {
            let (xf, yf) = (x as f64, y as f64);
            let ni = n as i64;
            let want = ipow(5.0 * nf / 4.0)
                * ((sgn(y) + sgn(ni)) * ipow(-xf + yf / 2.0) * h(nf, xf, yf - g * nf)
                    + (sgn(y + ni) + 1.0) * ipow(xf - yf / 2.0) * h(nf, xf, yf + g * nf));
            let got = attractor_sum(&terms, n, &[x, y], &spec).unwrap();
            let scale = h(nf, xf, yf - g * nf).norm() + h(nf, xf, yf + g * nf).norm();
            assert!((got - want).norm() <= 1e-10 * scale, "n={n} ({x},{y}): {got} vs {want}");
        }
    }
}

#[test]
fn single_trivial_term_is_the_heat_kernel() {
    let p = p_intro();
    let term = AttractorTerm::new(
        FrequencyPoint::origin(2),
        Complex64::new(1.0, 0.0),
        vec![0.0, 0.0],
        p.clone(),
    )
    .unwrap();
    let spec = QuadratureSpec::default();
    for x in [[0i64, 0i64], [4, -3]] {
        let a = attractor_sum(std::slice::from_ref(&term), 25, &x, &spec).unwrap();
        let h = heat_kernel_eval(&p, 25.0, &[x[0] as f64, x[1] as f64], &spec).unwrap();
        assert!((a - h).norm() <= 1e-15 * h.norm());
    }
    assert!(AttractorTerm::new(FrequencyPoint::origin(2), Complex64::new(0.9, 0.0), vec![0.0, 0.0], p).is_err());
}

#[test]
fn inversion_examples() {
    let f = builtins::intro();
    let spec = QuadratureSpec::default();
    let v = fourier_invert_power(&f, 2, &[0, 0], &spec).unwrap();
    assert!((v - Complex64::new(0.265_625, 0.0)).norm() < 1e-12);
    let p100 = conv_power(&f, 100, ConvMethod::Fft).unwrap();
    let v = fourier_invert_power(&f, 100, &[3, -7], &spec).unwrap();
    assert!((v - p100.get(&[3, -7])).norm() < 1e-10);
}

#[test]
fn inversion_cross_checks_convolution_engine() {
    let spec = QuadratureSpec::default();
    for f in [builtins::intro(), builtins::twopackets()] {
        let p = conv_power(&f, 100, ConvMethod::Fft).unwrap();
        let sbox = p.support_box().unwrap();
        let mut rng = sampling::rng(11);
        let xs: Vec<Vec<i64>> = (0..20)
            .map(|_| {
                (0..2)
                    .map(|j| rng.gen_range(sbox.lo()[j] / 4..=sbox.hi()[j] / 4))
                    .collect()
            })
            .collect();
        let inv = fourier_invert_power_many(&f, 100, &xs, &spec).unwrap();
        for (x, v) in xs.iter().zip(inv) {
            assert!((v - p.get(x)).norm() < 1e-10, "{x:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_power_inverts_to_entries(k in 0usize..8) {
        let f = builtins::twopackets();
        let (x, c) = f.iter().nth(k % f.len()).map(|(x, c)| (x.to_vec(), c)).unwrap();
        let v = fourier_invert_power(&f, 1, &x, &QuadratureSpec::default()).unwrap();
        prop_assert!((v - c).norm() < 1e-12);
    }

    #[test]
    fn gaussian_kernel_oracle(t in 0.5f64..200.0, x in -50.0f64..50.0) {
        let p = PowerSeries::real_polynomial(1, &[(&[2], 1.0)]).unwrap();
        let h = heat_kernel_eval_scaled(&p, t, &[x], &QuadratureSpec::default()).unwrap();
        let ln_exact = -0.5 * (4.0 * PI * t).ln() - x * x / (4.0 * t);
        prop_assert!((h.ln_abs() - ln_exact).abs() < 1e-10);
    }
}
