mod common;

use std::f64::consts::PI;
use std::fs;

use common::{coeff, complex_at, convpow, convpow_in, f64_at, rational_at, read_csv, vec_at};
use convpow::attractor::{fourier_invert_power, QuadratureSpec};
use convpow::builtins;
use convpow::lattice::LatticeFunction;
use num_complex::Complex64;

/// One-dimensional scheme whose leading term past the drift is imaginary cubic.
const DISPERSIVE: &str = r#"{"dim": 1, "entries": [
    {"x": [0], "re": 0.75, "im": 0.0},
    {"x": [1], "re": -0.125, "im": 0.0},
    {"x": [-1], "re": 0.375, "im": 0.0}
]}"#;

#[test]
fn analyze_intro_reports_two_points() {
    let run = convpow(&["analyze", "--builtin", "intro"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = run.json();
    assert_eq!(r["K"], 2);
    assert_eq!(r["seed"], "0xC0FFEE");
    for m in r["maximizers"].as_array().unwrap() {
        assert_eq!(rational_at(&m["expansion"]["mu"]), (3, 4));
        assert_eq!(rational_at(&m["expansion"]["lambda"]["value"]), (1, 2));
        assert_eq!(vec_at(&m["expansion"]["alpha"]), vec![0.0, 0.0]);
        assert_eq!(m["rate_function"]["kind"], "closed_form");
    }
}

#[test]
fn analyze_twopackets_reports_drifting_packets() {
    let run = convpow(&["analyze", "--builtin", "twopackets"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = run.json();
    assert_eq!(r["K"], 4);
    let g = builtins::twopackets_gamma();
    for m in r["maximizers"].as_array().unwrap() {
        let e = &m["expansion"];
        assert_eq!(rational_at(&e["mu"]), (1, 1));
        assert_eq!(rational_at(&e["lambda"]["value"]), (1, 2));
        let alpha = vec_at(&e["alpha"]);
        assert!(
            alpha[0].abs() < 1e-10 && (alpha[1].abs() - g).abs() < 1e-10,
            "{alpha:?}"
        );
        let (re, im) = coeff(&e["p"], &[2, 0]);
        assert!((re - 0.25).abs() < 1e-10 && (im - g / 4.0).abs() < 1e-10);
    }
}

#[test]
fn analyze_simple_walk() {
    let r = convpow(&["analyze", "--builtin", "srw1d"]).json();
    assert_eq!(r["K"], 2);
    let mut xs: Vec<f64> = r["maximizers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| vec_at(&m["xi"])[0].abs())
        .collect();
    xs.sort_by(f64::total_cmp);
    assert!(xs[0] < 1e-12 && (xs[1] - PI).abs() < 1e-12);
    for m in r["maximizers"].as_array().unwrap() {
        assert_eq!(rational_at(&m["expansion"]["mu"]), (1, 2));
        assert!((coeff(&m["expansion"]["p"], &[2]).0 - 0.5).abs() < 1e-12);
    }
}

#[test]
fn json_input_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tp.json");
    let f = builtins::twopackets();
    fs::write(&path, f.to_json().unwrap()).unwrap();
    let back = LatticeFunction::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, f);
    let from_file = convpow(&["analyze", "--input", path.to_str().unwrap()]);
    let from_builtin = convpow(&["analyze", "--builtin", "twopackets"]);
    assert_eq!(from_file.code, 0);
    assert_eq!(from_file.stdout, from_builtin.stdout);
}

#[test]
fn unnormalized_input_is_rescaled() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("double.json");
    let f = builtins::intro().scale(Complex64::new(2.0, 0.0));
    fs::write(&path, f.to_json().unwrap()).unwrap();
    let run = convpow(&["analyze", "--input", path.to_str().unwrap()]);
    assert_eq!(run.code, 0);
    let r = run.json();
    assert!((f64_at(&r["normalization"]) - 2.0).abs() < 1e-12);
    assert_eq!(r["K"], 2);
    assert!(run.stderr.contains("divided by"));
}

#[test]
fn unclassified_point_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dispersive.json");
    fs::write(&path, DISPERSIVE).unwrap();
    let run = convpow(&["analyze", "--input", path.to_str().unwrap()]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("unclassified"), "{}", run.stderr);
    assert_eq!(run.json()["verdict"]["classified"], false);
    // Only --raw lets power proceed.
    let p = convpow_in(dir.path(), &["power", "--input", path.to_str().unwrap(), "--n", "3"]);
    assert_eq!(p.code, 2);
    let p = convpow_in(
        dir.path(),
        &["power", "--input", path.to_str().unwrap(), "--n", "3", "--raw"],
    );
    assert_eq!(p.code, 0, "{}", p.stderr);
}

#[test]
fn bad_arguments_fail_cleanly() {
    assert_eq!(convpow(&["analyze", "--builtin", "nope"]).code, 1);
    assert_ne!(convpow(&["analyze"]).code, 0);
    assert_eq!(convpow(&["analyze", "--builtin", "intro", "--seed", "zz"]).code, 1);
}

#[test]
fn first_power_is_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let run = convpow_in(
        dir.path(),
        &["power", "--builtin", "intro", "--n", "1", "--window", "-3:3"],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stderr.contains("zero-padded"));
    let (header, rows) = read_csv(&dir.path().join("power_n1.csv"), 2);
    assert_eq!(header, ["x1", "x2", "re", "im", "abs"]);
    assert_eq!(rows.len(), 49);
    let f = builtins::intro();
    for (x, v) in rows {
        let want = f.get(&x);
        assert_eq!((v[0], v[1]), (want.re, want.im), "{x:?}");
    }
}

#[test]
fn power_grid_matches_fourier_inversion() {
    let dir = tempfile::tempdir().unwrap();
    let run = convpow_in(
        dir.path(),
        &[
            "power",
            "--builtin",
            "intro",
            "--n",
            "100",
            "--window",
            "-50:50",
            "--svg",
        ],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (_, rows) = read_csv(&dir.path().join("power_n100.csv"), 2);
    assert_eq!(rows.len(), 101 * 101);
    let spec = QuadratureSpec::default();
    let f = builtins::intro();
    for x in [[0i64, 0], [2, 0], [7, -4], [-50, 50]] {
        let (_, v) = rows.iter().find(|(p, _)| p[..] == x[..]).unwrap();
        let inv = fourier_invert_power(&f, 100, &x, &spec).unwrap();
        assert!((Complex64::new(v[0], v[1]) - inv).norm() <= 1e-10, "{x:?}");
    }
    let svg = fs::read_to_string(dir.path().join("power_n100.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<rect").count() == 101 * 101);
    assert!(svg.contains("x1 in [-50, 50]"));
}

#[test]
fn twopackets_power_peaks_at_drift_centers() {
    let dir = tempfile::tempdir().unwrap();
    let run = convpow_in(dir.path(), &["power", "--builtin", "twopackets", "--n", "60"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (_, rows) = read_csv(&dir.path().join("power_n60.csv"), 2);
    let center = 60.0 * builtins::twopackets_gamma();
    for sign in [1i64, -1] {
        let (x, _) = rows
            .iter()
            .filter(|(x, _)| x[1] * sign > 0)
            .max_by(|a, b| a.1[2].total_cmp(&b.1[2]))
            .unwrap();
        assert!(
            x[0].abs() <= 2 && (x[1] as f64 - sign as f64 * center).abs() <= 2.0,
            "peak at {x:?}"
        );
    }
}

#[test]
fn verify_gauss_intro_passes() {
    let dir = tempfile::tempdir().unwrap();
    let run = convpow_in(
        dir.path(),
        &["verify", "--builtin", "intro", "--mode", "gauss", "--M", "0.5"],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = run.json();
    assert_eq!(r["passed"], true);
    let fit = &r["fits"][0];
    assert!(f64_at(&fit["fit"]["sup_C"]) <= 0.3);
    assert_eq!(fit["trend"]["stable"], true);
    let (header, rows) = read_csv(&dir.path().join("verify_gauss_n200.csv"), 2);
    assert_eq!(header, ["x1", "x2", "abs", "envelope"]);
    assert_eq!(rows.len(), 101 * 101);
    assert!(rows.iter().all(|(_, v)| v[0] <= v[1] * (1.0 + 1e-12)));
}

#[test]
fn verify_gauss_corrupt_drift_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let run = convpow_in(
        dir.path(),
        &[
            "verify",
            "--builtin",
            "intro",
            "--mode",
            "gauss",
            "--M",
            "0.5",
            "--corrupt-drift",
            "0.2",
        ],
    );
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("contract violated"));
    let r = run.json();
    assert_eq!(r["fits"][0]["trend"]["unbounded"], true);
    assert_eq!(r["passed"], false);
}

#[test]
fn verify_llt_and_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let run = convpow_in(dir.path(), &["verify", "--builtin", "intro", "--mode", "llt"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = run.json();
    assert!((f64_at(&r["decay"]["slope"]) + 1.25).abs() <= 0.15);
    assert_eq!(r["n_values"], serde_json::json!([50, 100, 200, 400]));
    let (header, _) = read_csv(&dir.path().join("verify_llt_n400.csv"), 2);
    assert_eq!(header, ["x1", "x2", "error", "envelope"]);
    let bad = convpow_in(
        dir.path(),
        &[
            "verify",
            "--builtin",
            "intro",
            "--mode",
            "llt",
            "--corrupt-drift",
            "0.2",
        ],
    );
    assert_eq!(bad.code, 3, "{}", bad.stderr);
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "verify",
        "--builtin",
        "twopackets",
        "--mode",
        "gauss",
        "--n",
        "10:40:10",
        "--M",
        "0.3",
    ];
    let ra = convpow_in(a.path(), &args);
    let rb = convpow_in(b.path(), &args);
    assert_eq!(ra.stdout, rb.stdout);
    assert_eq!(ra.json()["seed"], "0xC0FFEE");
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
    let seeded = convpow(&["analyze", "--builtin", "intro", "--seed", "0x2A"]).json();
    assert_eq!(seeded["seed"], "0x2A");
}

#[test]
fn thread_cap_is_honoured() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_convpow"))
        .args(["analyze", "--builtin", "twopackets"])
        .env("CONVPOW_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        convpow(&["analyze", "--builtin", "twopackets"]).stdout
    );
    let bad = std::process::Command::new(env!("CARGO_BIN_EXE_convpow"))
        .args(["analyze", "--builtin", "intro"])
        .env("CONVPOW_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn complex_values_serialize_as_pairs() {
    let r = convpow(&["analyze", "--builtin", "intro"]).json();
    let values: Vec<(f64, f64)> = r["maximizers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| complex_at(&m["value"]))
        .collect();
    assert!(values.contains(&(1.0, 0.0)) && values.contains(&(-1.0, 0.0)));
}
