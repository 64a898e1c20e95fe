//! `convpow`: analyze a lattice function, tabulate its convolution powers,
//! and check Gaussian and local-limit bounds against them.

mod svg;
mod viridis;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use convpow::attractor::QuadratureSpec;
use convpow::bounds::{default_m_grid, envelope_eval, llt_error_grid_from_power, EnvelopeSpec};
use convpow::builtins;
use convpow::lattice::{conv_power, BoxDomain, ConvMethod, LatticeFunction};
use convpow::pipeline::{
    analyze, format_seed, verify_gauss, verify_llt, Analysis, AnalysisConfig, FitReport, CORRUPT_AXIS, DEFAULT_LLT_N,
    DEFAULT_M_MAX, DEFAULT_ORDER,
};
use serde::Serialize;

const EXIT_UNCLASSIFIED: u8 = 2;
const EXIT_CONTRACT: u8 = 3;
/// Half-width of the default CSV window written by `verify`.
const VERIFY_WINDOW: i64 = 50;

#[derive(Parser)]
#[command(name = "convpow", version, about = "Convolution powers of complex lattice functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate maximizers, classify each expansion and print the report.
    Analyze(Common),
    /// Tabulate f^(n) over a window, one CSV (and optional SVG) per n.
    Power(Common),
    /// Fit envelope constants and check the boundedness contracts.
    Verify(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Gauss,
    Llt,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Built-in function: intro, twopackets or srw1d.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    builtin: Option<String>,
    /// Lattice function as JSON `{"dim": d, "entries": [{"x": [..], "re": .., "im": ..}]}`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Powers: comma list `10,20,50` or inclusive range `start:end[:step]`.
    #[arg(long)]
    n: Option<String>,
    /// Cube `a:b` applied to every axis.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    /// Comma list of Gaussian constants M.
    #[arg(long = "M", value_delimiter = ',')]
    m: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "gauss")]
    mode: Mode,
    /// Seed for randomized steps, hex with or without `0x`.
    #[arg(long, default_value = "0xC0FFEE")]
    seed: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Offset added to drift coordinate 0 as a negative control.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    corrupt_drift: f64,
    /// `power` only: skip analysis and normalization.
    #[arg(long)]
    raw: bool,
    /// `power` only: also write an SVG heatmap of |f^(n)| (2D inputs).
    #[arg(long)]
    svg: bool,
    /// Truncation order of the logarithmic expansion.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: u32,
    /// Largest weight tried per axis during classification.
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    m_max: u32,
    /// Target accuracy of the attractor quadrature.
    #[arg(long)]
    eps: Option<f64>,
}

enum Failure {
    Unclassified(String),
    Contract(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<convpow::Error> for Failure {
    fn from(e: convpow::Error) -> Self {
        Failure::Other(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    let result = match &cli.command {
        Command::Analyze(c) => cmd_analyze(c),
        Command::Power(c) => cmd_power(c),
        Command::Verify(c) => cmd_verify(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Unclassified(reason)) => {
            eprintln!("unclassified: {reason}");
            ExitCode::from(EXIT_UNCLASSIFIED)
        }
        Err(Failure::Contract(reason)) => {
            eprintln!("contract violated: {reason}");
            ExitCode::from(EXIT_CONTRACT)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("CONVPOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("CONVPOW_THREADS={v:?}"))?;
    if n == 0 {
        bail!("CONVPOW_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

impl Common {
    fn load(&self) -> anyhow::Result<LatticeFunction> {
        if let Some(name) = &self.builtin {
            return builtins::by_name(name)
                .ok_or_else(|| anyhow!("unknown builtin {name:?}; expected one of {:?}", builtins::NAMES));
        }
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| anyhow!("need --builtin or --input"))?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        LatticeFunction::from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn seed(&self) -> anyhow::Result<u64> {
        parse_seed(&self.seed)
    }

    fn config(&self) -> anyhow::Result<AnalysisConfig> {
        if self.order == 0 || self.m_max == 0 {
            bail!("--order and --m-max must be positive");
        }
        Ok(AnalysisConfig {
            order: self.order,
            m_max: self.m_max,
            seed: self.seed()?,
            ..AnalysisConfig::default()
        })
    }

    fn quadrature(&self) -> anyhow::Result<QuadratureSpec> {
        match self.eps {
            Some(e) if !(e > 0.0 && e < 1.0) => bail!("--eps must lie in (0, 1)"),
            Some(e) => Ok(QuadratureSpec::with_eps(e)),
            None => Ok(QuadratureSpec::default()),
        }
    }

    fn n_list(&self, default: &[u64]) -> anyhow::Result<Vec<u64>> {
        match &self.n {
            Some(s) => parse_n_list(s),
            None => Ok(default.to_vec()),
        }
    }

    fn window(&self, dim: usize) -> anyhow::Result<Option<BoxDomain>> {
        self.window.as_deref().map(|s| parse_window(s, dim)).transpose()
    }

    fn out_dir(&self) -> anyhow::Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    /// Analysis that must classify every maximizer.
    fn classified(&self) -> std::result::Result<Analysis, Failure> {
        let a = analyze(&self.load()?, &self.config()?)?;
        require_classified(&a)?;
        Ok(a)
    }
}

fn parse_seed(s: &str) -> anyhow::Result<u64> {
    let digits = s.trim().trim_start_matches("0x").trim_start_matches("0X");
    u64::from_str_radix(digits, 16).with_context(|| format!("seed {s:?} is not hexadecimal"))
}

fn parse_n_list(s: &str) -> anyhow::Result<Vec<u64>> {
    let parse = |t: &str| t.trim().parse::<u64>().with_context(|| format!("bad power {t:?}"));
    let list = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let (start, end, step) = match parts[..] {
            [a, b] => (parse(a)?, parse(b)?, 1),
            [a, b, c] => (parse(a)?, parse(b)?, parse(c)?),
            _ => bail!("range must be start:end[:step], got {s:?}"),
        };
        if step == 0 || start > end {
            bail!("empty range {s:?}");
        }
        (start..=end).step_by(step as usize).collect()
    } else {
        s.split(',').map(parse).collect::<anyhow::Result<Vec<_>>>()?
    };
    if list.is_empty() || list.contains(&0) {
        bail!("powers must be positive, got {s:?}");
    }
    Ok(list)
}

fn parse_window(s: &str, dim: usize) -> anyhow::Result<BoxDomain> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("window must be a:b, got {s:?}"))?;
    let a: i64 = a.trim().parse().with_context(|| format!("bad window start {a:?}"))?;
    let b: i64 = b.trim().parse().with_context(|| format!("bad window end {b:?}"))?;
    Ok(BoxDomain::cube(dim, a, b)?)
}

fn require_classified(a: &Analysis) -> Outcome {
    let v = &a.report.verdict;
    if v.classified {
        return Ok(());
    }
    let reasons: Vec<String> = v
        .unclassified
        .iter()
        .map(|(i, r)| format!("maximizer {i} at {:?}: {r}", a.report.maximizers[*i].xi.coords()))
        .collect();
    Err(Failure::Unclassified(reasons.join("; ")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<String> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    Ok(text)
}

fn cmd_analyze(c: &Common) -> Outcome {
    let a = analyze(&c.load()?, &c.config()?)?;
    let text = serde_json::to_string_pretty(&a.report).map_err(anyhow::Error::from)? + "\n";
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(anyhow::Error::from)?;
        write_json(&dir.join("analysis.json"), &a.report)?;
    }
    if a.report.normalization != 1.0 {
        eprintln!(
            "note: input divided by {:.17e} to make the sup equal 1",
            a.report.normalization
        );
    }
    print!("{text}");
    require_classified(&a)
}

fn cmd_power(c: &Common) -> Outcome {
    let f = if c.raw { c.load()? } else { c.classified()?.f };
    let dir = c.out_dir()?;
    let window = c.window(f.dim())?;
    for n in c.n_list(&[1])? {
        let power = conv_power(&f, n, ConvMethod::Auto)?;
        let support = power.support_box()?;
        let w = window.clone().unwrap_or_else(|| support.clone());
        let padded = (0..w.dim()).any(|j| w.lo()[j] < support.lo()[j] || w.hi()[j] > support.hi()[j]);
        if padded {
            eprintln!("warning: n={n}: window extends past the support box {support:?}; zero-padded");
        }
        let csv_path = dir.join(format!("power_n{n}.csv"));
        let file = fs::File::create(&csv_path).map_err(anyhow::Error::from)?;
        power.write_grid_csv(&w, std::io::BufWriter::new(file))?;
        eprintln!("wrote {}", csv_path.display());
        if c.svg {
            if w.dim() != 2 {
                eprintln!("warning: SVG heatmaps need two dimensions; skipped");
                continue;
            }
            let values: Vec<f64> = power.dense_on(&w)?.values.iter().map(|v| v.norm()).collect();
            let svg_path = dir.join(format!("power_n{n}.svg"));
            let doc = svg::heatmap(&w, &values, &format!("|f^({n})|"));
            fs::write(&svg_path, doc).map_err(anyhow::Error::from)?;
            eprintln!("wrote {}", svg_path.display());
        }
    }
    Ok(())
}

/// The constants written to the envelope column of the per-n CSVs.
#[derive(Serialize)]
struct EnvelopeChoice {
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "M")]
    m: f64,
}

#[derive(Serialize)]
struct VerifyOutput<T: Serialize> {
    mode: Mode,
    passed: bool,
    csv_window: BoxDomain,
    envelope: Option<EnvelopeChoice>,
    #[serde(flatten)]
    result: T,
}

/// Largest stable `M` with its fitted constant, else the first finite fit.
fn choose_envelope(fits: &[FitReport]) -> Option<EnvelopeChoice> {
    let finite = |f: &&FitReport| f.fit.sup_c.is_finite() && f.fit.m.is_some();
    let pick = fits
        .iter()
        .filter(finite)
        .rfind(|f| f.trend.stable)
        .or_else(|| fits.iter().find(finite))?;
    Some(EnvelopeChoice {
        c: pick.fit.sup_c,
        m: pick.fit.m?,
    })
}

fn cmd_verify(c: &Common) -> Outcome {
    let a = c.classified()?;
    let seed = c.seed()?;
    let dir = c.out_dir()?;
    let window = match c.window(a.f.dim())? {
        Some(w) => w,
        None => BoxDomain::cube(a.f.dim(), -VERIFY_WINDOW, VERIFY_WINDOW)?,
    };
    let m_grid = c.m.clone().unwrap_or_else(default_m_grid);
    if m_grid.is_empty() || m_grid.iter().any(|m| m.is_nan() || *m <= 0.0) {
        return Err(anyhow!("--M values must be positive").into());
    }
    let quad = c.quadrature()?;
    let gauss_n: Vec<u64> = (1..=20).map(|k| 10 * k).collect();
    let (n_list, fits, passed, diagnostics, text) = match c.mode {
        Mode::Gauss => {
            let n_list = c.n_list(&gauss_n)?;
            let v = verify_gauss(&a, &n_list, &m_grid, c.corrupt_drift, seed)?;
            let diag = format!("no M in {m_grid:?} admits a stable constant");
            let envelope = choose_envelope(&v.fits);
            let passed = v.bounded;
            let fits = v.fits.clone();
            let out = VerifyOutput {
                mode: c.mode,
                passed,
                csv_window: window.clone(),
                envelope,
                result: v,
            };
            let text = write_json(&dir.join("verify_gauss.json"), &out)?;
            (n_list, fits, passed, diag, text)
        }
        Mode::Llt => {
            let n_list = c.n_list(&DEFAULT_LLT_N)?;
            let v = verify_llt(&a, &n_list, &m_grid, c.corrupt_drift, &quad, seed)?;
            let mut problems = Vec::new();
            if !v.slope_ok {
                problems.push(format!(
                    "decay slope {:.4} outside {:.4} +/- {}",
                    v.decay.slope, v.expected_slope, v.slope_tolerance
                ));
            }
            if !v.bounded {
                problems.push(format!("no M in {m_grid:?} admits a stable constant"));
            }
            let passed = problems.is_empty();
            let fits = v.fits.clone();
            let out = VerifyOutput {
                mode: c.mode,
                passed,
                csv_window: window.clone(),
                envelope: choose_envelope(&v.fits),
                result: v,
            };
            let text = write_json(&dir.join("verify_llt.json"), &out)?;
            (n_list, fits, passed, problems.join("; "), text)
        }
    };
    write_grids(c, &a, &n_list, &window, &fits, &quad, &dir)?;
    print!("{text}");
    if passed {
        Ok(())
    } else {
        Err(Failure::Contract(format!("{diagnostics} (seed {})", format_seed(seed))))
    }
}

/// Per-n CSV of the checked quantity on `window` next to the chosen envelope.
fn write_grids(
    c: &Common,
    a: &Analysis,
    n_list: &[u64],
    window: &BoxDomain,
    fits: &[FitReport],
    quad: &QuadratureSpec,
    dir: &Path,
) -> anyhow::Result<()> {
    let use_lambda = c.mode == Mode::Llt;
    let spec: Option<EnvelopeSpec> = choose_envelope(fits)
        .map(|e| a.envelope_spec(e.c, e.m, use_lambda))
        .transpose()?
        .map(|s| s.with_drift_offset(CORRUPT_AXIS, c.corrupt_drift));
    let mut terms = if use_lambda { a.attractor_terms()? } else { Vec::new() };
    for t in &mut terms {
        t.alpha[CORRUPT_AXIS] += c.corrupt_drift;
    }
    let (label, prefix) = match c.mode {
        Mode::Gauss => ("abs", "verify_gauss"),
        Mode::Llt => ("error", "verify_llt"),
    };
    for &n in n_list {
        let power = conv_power(&a.f, n, ConvMethod::Auto)?;
        let grid = llt_error_grid_from_power(&power, &terms, n, window, quad)?;
        let envelope = spec
            .as_ref()
            .map(|s| {
                window
                    .points()
                    .map(|x| envelope_eval(s, n, &x))
                    .collect::<convpow::Result<Vec<f64>>>()
            })
            .transpose()?;
        let path = dir.join(format!("{prefix}_n{n}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        let mut header: Vec<String> = (1..=window.dim()).map(|j| format!("x{j}")).collect();
        header.push(label.into());
        if envelope.is_some() {
            header.push("envelope".into());
        }
        w.write_record(&header)?;
        for (i, v) in grid.values.iter().enumerate() {
            let mut row: Vec<String> = window.point_at(i).iter().map(|x| x.to_string()).collect();
            row.push(v.to_string());
            if let Some(e) = &envelope {
                row.push(e[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use convpow::DEFAULT_SEED;

    #[test]
    fn parses_lists_and_ranges() {
        assert_eq!(parse_n_list("10,20, 50").unwrap(), vec![10, 20, 50]);
        assert_eq!(parse_n_list("10:40:10").unwrap(), vec![10, 20, 30, 40]);
        assert_eq!(parse_n_list("3:5").unwrap(), vec![3, 4, 5]);
        assert!(parse_n_list("0,4").is_err());
        assert!(parse_n_list("5:3").is_err());
    }

    #[test]
    fn parses_windows_and_seeds() {
        let w = parse_window("-50:50", 2).unwrap();
        assert_eq!(w.shape(), vec![101, 101]);
        assert!(parse_window("5", 2).is_err());
        assert_eq!(parse_seed("0xC0FFEE").unwrap(), DEFAULT_SEED);
        assert_eq!(parse_seed("c0ffee").unwrap(), DEFAULT_SEED);
        assert!(parse_seed("xyz").is_err());
    }
}
