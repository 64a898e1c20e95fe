//! Finitely supported functions on `Z^d` and their convolution powers.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries below this fraction of the largest magnitude are dropped.
pub const DEFAULT_PRUNE_REL: f64 = 1e-15;

/// Largest dense buffer (in complex entries) any single operation may allocate.
pub const DEFAULT_MAX_GRID_POINTS: usize = 1 << 25;

/// Predicted multiply-add count above which `ConvMethod::Auto` switches to FFT.
pub const DEFAULT_AUTO_THRESHOLD: f64 = 2.0e7;

/// Axis-aligned integer box `lo ..= hi`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::Input("box must have at least one axis".into()));
        }
        if let Some(j) = (0..lo.len()).find(|&j| lo[j] > hi[j]) {
            return Err(Error::Input(format!("box axis {j} has lo {} > hi {}", lo[j], hi[j])));
        }
        let out = Self { lo, hi };
        out.volume()?;
        Ok(out)
    }

    /// The cube `[a, b]^dim`.
    pub fn cube(dim: usize, a: i64, b: i64) -> Result<Self> {
        Self::new(vec![a; dim], vec![b; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    /// Number of lattice points along each axis.
    pub fn shape(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l + 1) as usize)
            .collect()
    }

    pub fn volume(&self) -> Result<usize> {
        self.shape().iter().try_fold(1usize, |acc, &w| {
            acc.checked_mul(w)
                .ok_or_else(|| Error::Resource("box volume overflows usize".into()))
        })
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|j| self.lo[j] <= x[j] && x[j] <= self.hi[j])
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let shape = self.shape();
        let mut strides = vec![1usize; shape.len()];
        for j in (0..shape.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * shape[j + 1];
        }
        strides
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let strides = self.strides();
        Some((0..self.dim()).map(|j| (x[j] - self.lo[j]) as usize * strides[j]).sum())
    }

    pub fn point_at(&self, mut index: usize) -> Vec<i64> {
        let strides = self.strides();
        let mut x = vec![0i64; self.dim()];
        for j in 0..self.dim() {
            x[j] = self.lo[j] + (index / strides[j]) as i64;
            index %= strides[j];
        }
        x
    }

    /// Lattice points in row-major order.
    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let n = self.volume().unwrap_or(0);
        (0..n).map(move |i| self.point_at(i))
    }

    /// Minkowski sum of two boxes.
    pub fn minkowski(&self, other: &BoxDomain) -> Result<BoxDomain> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let lo = self.lo.iter().zip(&other.lo).map(|(a, b)| a + b).collect();
        let hi = self.hi.iter().zip(&other.hi).map(|(a, b)| a + b).collect();
        BoxDomain::new(lo, hi)
    }

    pub fn intersect(&self, other: &BoxDomain) -> Option<BoxDomain> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<i64> = self.lo.iter().zip(&other.lo).map(|(a, b)| *a.max(b)).collect();
        let hi: Vec<i64> = self.hi.iter().zip(&other.hi).map(|(a, b)| *a.min(b)).collect();
        BoxDomain::new(lo, hi).ok()
    }
}

/// Values of a function on every point of a box, row-major.
#[derive(Clone, Debug)]
pub struct DenseGrid {
    pub domain: BoxDomain,
    pub values: Vec<Complex64>,
}

impl DenseGrid {
    pub fn get(&self, x: &[i64]) -> Complex64 {
        self.domain.index_of(x).map(|i| self.values[i]).unwrap_or_default()
    }
}

/// A finitely supported complex-valued function on `Z^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeFunction {
    dim: usize,
    entries: BTreeMap<Vec<i64>, Complex64>,
}

impl LatticeFunction {
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    /// The unit mass at the origin.
    pub fn delta(dim: usize) -> Result<Self> {
        let mut f = Self::zero(dim)?;
        f.entries.insert(vec![0; dim], Complex64::new(1.0, 0.0));
        Ok(f)
    }

    /// Builds a function from `(point, value)` pairs; repeated points are summed.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, Complex64)>,
    {
        let mut f = Self::zero(dim)?;
        for (x, v) in entries {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Input(format!("non-finite value at {x:?}")));
            }
            *f.entries.entry(x).or_default() += v;
        }
        f.prune(DEFAULT_PRUNE_REL);
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, x: &[i64]) -> Complex64 {
        self.entries.get(x).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64], Complex64)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.values().map(|v| v.norm()).sum()
    }

    pub fn total_mass(&self) -> Complex64 {
        self.entries.values().sum()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = Self {
            dim: self.dim,
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        };
        out.prune(DEFAULT_PRUNE_REL);
        out
    }

    /// Drops entries with magnitude below `rel` times the largest magnitude.
    pub fn prune(&mut self, rel: f64) {
        let cutoff = rel * self.max_abs();
        self.entries
            .retain(|_, v| v.norm() > cutoff && *v != Complex64::default());
    }

    /// Smallest box containing the support.
    pub fn support_box(&self) -> Result<BoxDomain> {
        let mut it = self.entries.keys();
        let first = it.next().ok_or(Error::EmptySupport)?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for x in it {
            for j in 0..self.dim {
                lo[j] = lo[j].min(x[j]);
                hi[j] = hi[j].max(x[j]);
            }
        }
        BoxDomain::new(lo, hi)
    }

    /// Values on every point of `window` (zero outside the support).
    pub fn dense_on(&self, window: &BoxDomain) -> Result<DenseGrid> {
        check_dim(self.dim, window.dim())?;
        let volume = window.volume()?;
        if volume > DEFAULT_MAX_GRID_POINTS {
            return Err(Error::Resource(format!(
                "window with {volume} points exceeds the grid budget"
            )));
        }
        let mut values = vec![Complex64::default(); volume];
        for (x, v) in &self.entries {
            if let Some(i) = window.index_of(x) {
                values[i] = *v;
            }
        }
        Ok(DenseGrid {
            domain: window.clone(),
            values,
        })
    }

    fn from_dense(grid: &DenseGrid) -> Self {
        let max = grid.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let cutoff = DEFAULT_PRUNE_REL * max;
        let entries = grid
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > cutoff && **v != Complex64::default())
            .map(|(i, v)| (grid.domain.point_at(i), *v))
            .collect();
        Self {
            dim: grid.domain.dim(),
            entries,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `x1,...,xd,re,im,abs` rows for every point of `window`.
    pub fn write_grid_csv<W: Write>(&self, window: &BoxDomain, out: W) -> Result<()> {
        check_dim(self.dim, window.dim())?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.extend(["re", "im", "abs"].map(String::from));
        w.write_record(&header)?;
        for x in window.points() {
            let v = self.get(&x);
            let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            row.push(v.re.to_string());
            row.push(v.im.to_string());
            row.push(v.norm().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    x: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct LatticeFunctionRecord {
    dim: usize,
    entries: Vec<EntryRecord>,
}

impl Serialize for LatticeFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LatticeFunctionRecord {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(x, v)| EntryRecord {
                    x: x.clone(),
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = LatticeFunctionRecord::deserialize(d)?;
        LatticeFunction::from_entries(
            rec.dim,
            rec.entries.into_iter().map(|e| (e.x, Complex64::new(e.re, e.im))),
        )
        .map_err(serde::de::Error::custom)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `(f * g)(x) = sum_y f(x - y) g(y)`.
pub fn convolve(f: &LatticeFunction, g: &LatticeFunction) -> Result<LatticeFunction> {
    check_dim(f.dim, g.dim)?;
    if f.is_empty() || g.is_empty() {
        return LatticeFunction::zero(f.dim);
    }
    let out_box = f.support_box()?.minkowski(&g.support_box()?)?;
    let volume = out_box.volume()?;
    if volume <= DEFAULT_MAX_GRID_POINTS / 2 {
        // Linear offsets are additive in the Minkowski box.
        let strides = out_box.strides();
        let offsets = |h: &LatticeFunction, lo: &[i64]| -> Vec<(usize, Complex64)> {
            h.iter()
                .map(|(x, v)| {
                    let idx = (0..h.dim).map(|j| (x[j] - lo[j]) as usize * strides[j]).sum();
                    (idx, v)
                })
                .collect()
        };
        let fo = offsets(f, f.support_box()?.lo());
        let go = offsets(g, g.support_box()?.lo());
        let mut values = vec![Complex64::default(); volume];
        for &(i, a) in &fo {
            for &(k, b) in &go {
                values[i + k] += a * b;
            }
        }
        return Ok(LatticeFunction::from_dense(&DenseGrid {
            domain: out_box,
            values,
        }));
    }
    let mut acc: HashMap<Vec<i64>, Complex64> = HashMap::new();
    for (x, a) in f.iter() {
        for (y, b) in g.iter() {
            let z: Vec<i64> = x.iter().zip(y).map(|(p, q)| p + q).collect();
            *acc.entry(z).or_default() += a * b;
        }
    }
    let mut out = LatticeFunction {
        dim: f.dim,
        entries: acc.into_iter().collect(),
    };
    out.prune(DEFAULT_PRUNE_REL);
    Ok(out)
}

/// How `conv_power` evaluates `f^(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMethod {
    Direct,
    Fft,
    Auto,
}

#[derive(Clone, Debug)]
pub struct ConvOptions {
    pub auto_threshold: f64,
    pub max_grid_points: usize,
}

impl Default for ConvOptions {
    fn default() -> Self {
        Self {
            auto_threshold: DEFAULT_AUTO_THRESHOLD,
            max_grid_points: DEFAULT_MAX_GRID_POINTS,
        }
    }
}

/// The n-fold convolution power; `n = 0` yields the unit mass at the origin.
pub fn conv_power(f: &LatticeFunction, n: u64, method: ConvMethod) -> Result<LatticeFunction> {
    conv_power_with(f, n, method, &ConvOptions::default())
}

pub fn conv_power_with(f: &LatticeFunction, n: u64, method: ConvMethod, opts: &ConvOptions) -> Result<LatticeFunction> {
    if n == 0 {
        return LatticeFunction::delta(f.dim);
    }
    if f.is_empty() {
        return LatticeFunction::zero(f.dim);
    }
    let method = match method {
        ConvMethod::Auto => {
            if predicted_direct_cost(f, n)? > opts.auto_threshold {
                ConvMethod::Fft
            } else {
                ConvMethod::Direct
            }
        }
        m => m,
    };
    match method {
        ConvMethod::Fft => Ok(LatticeFunction::from_dense(&fft_power_grid(
            f,
            n,
            opts.max_grid_points,
        )?)),
        _ => direct_power(f, n),
    }
}

fn direct_power(f: &LatticeFunction, mut n: u64) -> Result<LatticeFunction> {
    let mut result: Option<LatticeFunction> = None;
    let mut base = f.clone();
    loop {
        if n & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => convolve(&r, &base)?,
            });
        }
        n >>= 1;
        if n == 0 {
            break;
        }
        base = convolve(&base, &base)?;
    }
    Ok(result.expect("n >= 1"))
}

/// Multiply-add count of binary exponentiation, assuming dense box supports.
fn predicted_direct_cost(f: &LatticeFunction, n: u64) -> Result<f64> {
    let widths: Vec<f64> = f.support_box()?.shape().iter().map(|&w| (w - 1) as f64).collect();
    let density = f.len() as f64 / widths.iter().map(|w| w + 1.0).product::<f64>();
    let size = |k: f64| -> f64 {
        let full: f64 = widths.iter().map(|w| k * w + 1.0).product();
        if k <= 1.0 {
            full * density
        } else {
            full
        }
    };
    let mut cost = 0.0;
    let (mut k_base, mut k_res) = (1.0f64, 0.0f64);
    let mut m = n;
    loop {
        if m & 1 == 1 {
            if k_res > 0.0 {
                cost += size(k_res) * size(k_base);
            }
            k_res += k_base;
        }
        m >>= 1;
        if m == 0 {
            break;
        }
        cost += size(k_base) * size(k_base);
        k_base *= 2.0;
    }
    Ok(cost)
}

/// FFT grid shape for `f^(n)`: `n * width + 1` per axis, rounded up to a power of two.
pub fn fft_grid_shape(f: &LatticeFunction, n: u64) -> Result<Vec<usize>> {
    f.support_box()?
        .shape()
        .iter()
        .map(|&w| {
            let span = (n as u128) * (w as u128 - 1) + 1;
            usize::try_from(span)
                .ok()
                .and_then(|s| s.checked_next_power_of_two())
                .ok_or_else(|| Error::Resource(format!("FFT axis length {span} overflows")))
        })
        .collect()
}

/// `f^(n)` on its full support box, computed by pointwise powers on a
/// non-wrapping periodic grid.
pub fn fft_power_grid(f: &LatticeFunction, n: u64, max_points: usize) -> Result<DenseGrid> {
    let sbox = f.support_box()?;
    let shape = fft_grid_shape(f, n)?;
    let total = shape.iter().try_fold(1usize, |a, &s| a.checked_mul(s));
    let total = match total {
        Some(t) if t <= max_points => t,
        _ => {
            return Err(Error::Resource(format!(
                "FFT grid {shape:?} needs {} points, budget is {max_points}",
                shape.iter().map(|&s| s as f64).product::<f64>()
            )))
        }
    };
    let mut strides = vec![1usize; shape.len()];
    for j in (0..shape.len() - 1).rev() {
        strides[j] = strides[j + 1] * shape[j + 1];
    }
    let mut buf = vec![Complex64::default(); total];
    for (x, v) in f.iter() {
        let idx: usize = (0..f.dim).map(|j| (x[j] - sbox.lo()[j]) as usize * strides[j]).sum();
        buf[idx] = v;
    }
    fft_nd(&mut buf, &shape, false);
    let exponent =
        u32::try_from(n).map_err(|_| Error::Resource(format!("power {n} exceeds the FFT exponent range")))?;
    for v in buf.iter_mut() {
        *v = v.powu(exponent);
    }
    fft_nd(&mut buf, &shape, true);
    let scale = 1.0 / total as f64;

    let out_lo: Vec<i64> = sbox.lo().iter().map(|l| l * n as i64).collect();
    let out_hi: Vec<i64> = sbox.hi().iter().map(|h| h * n as i64).collect();
    let domain = BoxDomain::new(out_lo, out_hi)?;
    let out_strides = domain.strides();
    let out_shape = domain.shape();
    let mut values = vec![Complex64::default(); domain.volume()?];
    for (i, slot) in values.iter_mut().enumerate() {
        let mut rem = i;
        let mut src = 0usize;
        for j in 0..shape.len() {
            let c = rem / out_strides[j];
            rem %= out_strides[j];
            debug_assert!(c < out_shape[j]);
            src += c * strides[j];
        }
        *slot = buf[src] * scale;
    }
    Ok(DenseGrid { domain, values })
}

/// In-place multidimensional FFT (unnormalized) over a row-major buffer.
pub(crate) fn fft_nd(buf: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = shape.iter().product();
    let mut stride = 1usize;
    for axis in (0..shape.len()).rev() {
        let len = shape[axis];
        if len > 1 {
            let fft = if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            };
            if stride == 1 {
                fft.process(buf);
            } else {
                let block = len * stride;
                let mut line = vec![Complex64::default(); len];
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                for outer in (0..total).step_by(block) {
                    for inner in 0..stride {
                        let base = outer + inner;
                        for (k, slot) in line.iter_mut().enumerate() {
                            *slot = buf[base + k * stride];
                        }
                        fft.process_with_scratch(&mut line, &mut scratch);
                        for (k, v) in line.iter().enumerate() {
                            buf[base + k * stride] = *v;
                        }
                    }
                }
            }
        }
        stride *= len;
    }
}
