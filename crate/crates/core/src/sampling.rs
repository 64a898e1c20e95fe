//! Seeded random sampling and the weighted-sphere minimizer used for
//! positive-definiteness checks and coercivity constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Default number of random directions for sphere minimization.
pub const DEFAULT_SPHERE_SAMPLES: usize = 10_000;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `t` with `ln t` uniform in `[ln lo, ln hi]`.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

/// Uniform point in the closed Euclidean unit ball.
pub fn unit_ball_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if norm(&v) <= 1.0 {
            return v;
        }
    }
}

/// Uniform direction on the Euclidean unit sphere.
pub fn unit_direction<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v = unit_ball_point(rng, d);
        let r = norm(&v);
        if r > 1e-3 {
            return v.iter().map(|x| x / r).collect();
        }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let r = norm(v);
    if r > 0.0 {
        v.iter_mut().for_each(|x| *x /= r);
    }
}

/// `sum_j u_j^{2 m_j}`.
pub fn weighted_gauge(u: &[f64], m: &[u32]) -> f64 {
    u.iter().zip(m).map(|(x, &mj)| x.powi(2 * mj as i32)).sum()
}

#[derive(Clone, Debug)]
pub struct SphereMin {
    pub value: f64,
    pub argmin: Vec<f64>,
}

/// Minimum of `f(u) / sum_j u_j^{2 m_j}` over Euclidean unit directions.
///
/// For `f` homogeneous of degree one under `diag(1/2m)` this equals the
/// minimum of `f` on the weighted sphere `{sum_j u_j^{2m_j} = 1}`, since
/// the ratio is constant along scaling orbits.
pub fn weighted_sphere_min<F>(f: F, m: &[u32], samples: usize, seed: u64) -> SphereMin
where
    F: Fn(&[f64]) -> f64,
{
    let d = m.len();
    let ratio = |u: &[f64]| f(u) / weighted_gauge(u, m);
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    // Axes and diagonals first: minima of sparse polynomials often sit there.
    let mut structured: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[j] = s;
            structured.push(e);
        }
    }
    if d <= 6 {
        for mask in 0..(1u32 << d) {
            let mut v: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
            normalize(&mut v);
            structured.push(v);
        }
    }
    let mut r = rng(seed);
    let random = (0..samples).map(|_| unit_direction(&mut r, d));
    for u in structured.into_iter().chain(random) {
        candidates.push((ratio(&u), u));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates.truncate(12);
    let mut best = SphereMin {
        value: f64::INFINITY,
        argmin: vec![0.0; d],
    };
    for (v, u) in candidates {
        let (pv, pu) = compass_polish(&ratio, v, u);
        if pv < best.value {
            best = SphereMin { value: pv, argmin: pu };
        }
    }
    best
}

fn compass_polish<F: Fn(&[f64]) -> f64>(f: &F, mut value: f64, mut u: Vec<f64>) -> (f64, Vec<f64>) {
    let d = u.len();
    let mut step = 0.05;
    while step > 1e-11 {
        let mut improved = false;
        for j in 0..d {
            for s in [step, -step] {
                let mut trial = u.clone();
                trial[j] += s;
                normalize(&mut trial);
                let fv = f(&trial);
                if fv < value {
                    value = fv;
                    u = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (value, u)
}
