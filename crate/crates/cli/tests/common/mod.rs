#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}):\n{}", self.stdout))
    }
}

pub fn convpow(args: &[&str]) -> Run {
    let out: Output = Command::new(env!("CARGO_BIN_EXE_convpow"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn convpow_in(dir: &Path, args: &[&str]) -> Run {
    let mut full: Vec<&str> = args.to_vec();
    let d = dir.to_str().unwrap();
    full.extend(["--out", d]);
    convpow(&full)
}

pub fn f64_at(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

pub fn vec_at(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(f64_at).collect()
}

/// `(re, im)` of a serialized complex number.
pub fn complex_at(v: &Value) -> (f64, f64) {
    (f64_at(&v["re"]), f64_at(&v["im"]))
}

/// Coefficient of `x^alpha` in a serialized series (zero when absent).
pub fn coeff(series: &Value, alpha: &[u64]) -> (f64, f64) {
    series["coeffs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| {
            c["alpha"]
                .as_array()
                .unwrap()
                .iter()
                .map(|a| a.as_u64().unwrap())
                .eq(alpha.iter().copied())
        })
        .map(complex_at)
        .unwrap_or((0.0, 0.0))
}

/// `(num, den)` of a serialized rational.
pub fn rational_at(v: &Value) -> (i64, i64) {
    (v["num"].as_i64().unwrap(), v["den"].as_i64().unwrap())
}

/// Integer coordinates and the float columns after them.
pub type Row = (Vec<i64>, Vec<f64>);

/// Rows of a CSV file as `(integer coordinates, named float columns)`.
pub fn read_csv(path: &Path, dim: usize) -> (Vec<String>, Vec<Row>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            let x = (0..dim).map(|j| rec[j].parse().unwrap()).collect();
            let v = (dim..rec.len()).map(|j| rec[j].parse().unwrap()).collect();
            (x, v)
        })
        .collect();
    (header, rows)
}
