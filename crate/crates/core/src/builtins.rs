//! Example functions shipped with the crate.

use num_complex::Complex64;

use crate::lattice::LatticeFunction;

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 3] = ["intro", "twopackets", "srw1d"];

/// Real function on `Z^2`, 1/16 times 4 at `(0,±1),(±1,0)`, 1 at `(±2,0)`
/// and -1 at `(0,±2)`. Its transform is
/// `cos(η)/2 + cos(ζ)/2 + cos(2η)/8 - cos(2ζ)/8`.
pub fn intro() -> LatticeFunction {
    let r = |v: f64| Complex64::new(v / 16.0, 0.0);
    LatticeFunction::from_entries(
        2,
        [
            (vec![0, 1], r(4.0)),
            (vec![0, -1], r(4.0)),
            (vec![1, 0], r(4.0)),
            (vec![-1, 0], r(4.0)),
            (vec![2, 0], r(1.0)),
            (vec![-2, 0], r(1.0)),
            (vec![0, 2], r(-1.0)),
            (vec![0, -2], r(-1.0)),
        ],
    )
    .expect("static entries are valid")
}

/// Normalisation constant `a = sqrt(2 + sqrt 2)` of the two-packet example.
pub fn twopackets_scale() -> f64 {
    (2.0 + 2f64.sqrt()).sqrt()
}

/// Drift magnitude `sqrt 2 - 1` of the two-packet example.
pub fn twopackets_gamma() -> f64 {
    2f64.sqrt() - 1.0
}

/// Complex function on `Z^2` whose powers split into two packets drifting
/// in opposite vertical directions.
pub fn twopackets() -> LatticeFunction {
    let a = twopackets_scale();
    let q = Complex64::new(1.0, 1.0) / (4.0 * a);
    let s = Complex64::new(1.0 / (2f64.sqrt() * a), 0.0);
    LatticeFunction::from_entries(
        2,
        [
            (vec![-1, 1], q),
            (vec![-1, -1], q),
            (vec![1, 1], -q),
            (vec![1, -1], -q),
            (vec![0, 1], s),
            (vec![0, -1], -s),
        ],
    )
    .expect("static entries are valid")
}

/// Simple symmetric walk on `Z`: mass 1/2 at ±1.
pub fn srw1d() -> LatticeFunction {
    let h = Complex64::new(0.5, 0.0);
    LatticeFunction::from_entries(1, [(vec![1], h), (vec![-1], h)]).expect("static entries are valid")
}

pub fn by_name(name: &str) -> Option<LatticeFunction> {
    match name {
        "intro" => Some(intro()),
        "twopackets" => Some(twopackets()),
        "srw1d" => Some(srw1d()),
        _ => None,
    }
}
