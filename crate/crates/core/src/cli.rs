//! Command implementations behind the `shapeband` binary: data ingestion,
//! noise estimation, κ resolution, band files, coverage runs and kernel
//! verification.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{raw_band, ConfidenceBand};
use crate::critical::{
    build_table, fill_standard_normal, splitmix64, CriticalValueTable, SimulationConfig,
};
use crate::error::{Error, Result};
use crate::generators::{random_in_class, TestFunction};
use crate::kernels::{
    brute_force_sums, continuous_moments, discrete_sums, optimal_constant, verify_sign_bias,
    KernelSpec, ShapeClass, Side,
};
use crate::multiscale::ObservationVector;
use crate::shape::{postprocess, FeasibilityReport};

/// Environment variable naming the default critical-value table directory.
pub const TABLE_DIR_ENV: &str = "SHAPEBAND_TABLE_DIR";

/// Domain separation between coverage noise and κ-simulation noise.
const COVERAGE_STREAM: u64 = 0x636f_7665_7261_6765;

/// Failure of a CLI command, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("no critical value available for {shape}, n = {n}, alpha = {alpha}; pass --kappa, --kappa-table or --simulate-kappa")]
    MissingKappa {
        shape: ShapeClass,
        n: usize,
        alpha: f64,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingKappa { .. } => 2,
            _ => 1,
        }
    }
}

/// Exit code for a band that was written but admits no shape-class curve.
pub const EXIT_INFEASIBLE: i32 = 3;

/// First-difference noise estimate
/// `sqrt(Σ (Y_{i+1} − Y_i)² / (2(n − 1)))`.
pub fn estimate_sigma(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "sigma estimation needs n >= 2, got {}",
            values.len()
        )));
    }
    let ss: f64 = values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((ss / (2.0 * (values.len() - 1) as f64)).sqrt())
}

/// Parses observations from CSV text: one column `y`, or two columns `x,y`
/// whose `x` must follow `(i − 1/2)/n` within 1e-9. A non-numeric first row
/// is taken as a header.
pub fn parse_observations(text: &str) -> std::result::Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Parse(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if rows.is_empty() && line == 0 => continue,
            Err(e) => return Err(CliError::Parse(format!("row {}: {e}", line + 1))),
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) || !(width == 1 || width == 2) {
        return Err(CliError::Parse(
            "expected one column (y) or two columns (x,y)".into(),
        ));
    }
    let n = rows.len();
    if n < 2 {
        return Err(CliError::Parse(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    if width == 2 {
        for (i, r) in rows.iter().enumerate() {
            let expected = (i as f64 + 0.5) / n as f64;
            if (r[0] - expected).abs() > 1e-9 {
                return Err(CliError::Parse(format!(
                    "row {}: x = {} is not on the grid (i - 1/2)/n = {expected}",
                    i + 1,
                    r[0]
                )));
            }
        }
    }
    Ok(rows.into_iter().map(|r| r[width - 1]).collect())
}

pub fn read_observations(path: &Path) -> std::result::Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_observations(&text)
}

/// `%g`-style formatting with `sig` significant digits; `±∞` as `inf`/`-inf`.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -5 || exp >= sig as i32 {
        format!("{}e{exp}", trim(mantissa))
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

fn parse_bound(s: &str) -> std::result::Result<f64, CliError> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|e| CliError::Parse(format!("bad number {s:?}: {e}"))),
    }
}

/// JSON sidecar written next to a band file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandSidecar {
    pub n: usize,
    pub shape: ShapeClass,
    pub alpha: Option<f64>,
    pub kappa: f64,
    pub sigma_used: f64,
    pub sigma_estimated: bool,
    pub feasible: bool,
    pub postprocessed: bool,
    pub seed: u64,
}

/// CSV with columns `t,lower_raw,upper_raw,lower_post,upper_post`; the post
/// columns are empty when no postprocessing was done.
pub fn format_band_csv(raw: &ConfidenceBand, post: Option<&ConfidenceBand>) -> String {
    let mut out = String::from("t,lower_raw,upper_raw,lower_post,upper_post\n");
    for (k, t) in raw.grid().iter().enumerate() {
        let (lp, up) = match post {
            Some(p) => (fmt_sig(p.lower[k], 12), fmt_sig(p.upper[k], 12)),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{lp},{up}\n",
            fmt_sig(*t, 12),
            fmt_sig(raw.lower[k], 12),
            fmt_sig(raw.upper[k], 12)
        ));
    }
    out
}

/// Inverse of [`format_band_csv`] given the sidecar.
pub fn parse_band_csv(
    text: &str,
    meta: &BandSidecar,
) -> std::result::Result<(ConfidenceBand, Option<ConfidenceBand>), CliError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| CliError::Parse(e.to_string()))?
        .clone();
    let expected = ["t", "lower_raw", "upper_raw", "lower_post", "upper_post"];
    if header.iter().ne(expected) {
        return Err(CliError::Parse(format!(
            "unexpected band header {header:?}"
        )));
    }
    let (mut lr, mut ur, mut lp, mut up) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Parse(e.to_string()))?;
        lr.push(parse_bound(&rec[1])?);
        ur.push(parse_bound(&rec[2])?);
        if meta.postprocessed {
            lp.push(parse_bound(&rec[3])?);
            up.push(parse_bound(&rec[4])?);
        }
    }
    if lr.len() + 1 != meta.n {
        return Err(CliError::Parse(format!(
            "band has {} rows, sidecar says n = {}",
            lr.len(),
            meta.n
        )));
    }
    let make = |lower, upper, postprocessed| ConfidenceBand {
        n: meta.n,
        lower,
        upper,
        alpha: meta.alpha,
        kappa: meta.kappa,
        shape: meta.shape,
        sigma_used: meta.sigma_used,
        postprocessed,
    };
    let post = meta.postprocessed.then(|| make(lp, up, true));
    Ok((make(lr, ur, false), post))
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("json")
}

/// Where κ comes from, in order of precedence.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaSource {
    Inline(f64),
    Table(PathBuf),
    /// Look up the default table directory, then simulate if allowed.
    Auto {
        simulate: bool,
    },
}

/// Default file name for a table in the table directory.
pub fn table_file_name(shape: ShapeClass, n: usize) -> String {
    format!("{shape}-n{n}.json")
}

/// Resolves κ for `(shape, n, alpha)`.
pub fn resolve_kappa(
    source: &KappaSource,
    shape: ShapeClass,
    n: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> std::result::Result<f64, CliError> {
    let from_table = |table: &CriticalValueTable| {
        (table.shape == shape && table.n == n)
            .then(|| table.kappa(alpha))
            .flatten()
    };
    match source {
        KappaSource::Inline(k) => Ok(*k),
        KappaSource::Table(path) => {
            let table = CriticalValueTable::read(path)?;
            from_table(&table).ok_or(CliError::MissingKappa { shape, n, alpha })
        }
        KappaSource::Auto { simulate } => {
            if let Ok(dir) = std::env::var(TABLE_DIR_ENV) {
                let path = Path::new(&dir).join(table_file_name(shape, n));
                if let Ok(table) = CriticalValueTable::read(&path) {
                    if let Some(k) = from_table(&table) {
                        return Ok(k);
                    }
                }
            }
            if !simulate {
                return Err(CliError::MissingKappa { shape, n, alpha });
            }
            eprintln!("warning: simulating kappa for {shape}, n = {n} with {reps} replicates; this may take a while");
            let table = build_table(&SimulationConfig {
                n,
                shape,
                reps,
                base_seed: seed,
                alphas: vec![alpha],
            })?;
            Ok(table.entries[0].kappa)
        }
    }
}

/// Settings for `band`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub shape: ShapeClass,
    pub alpha: f64,
    pub sigma: Option<f64>,
    pub kappa: KappaSource,
    pub reps: usize,
    pub seed: u64,
    pub postprocess: bool,
}

/// Result of `band`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRun {
    pub raw: ConfidenceBand,
    pub post: Option<ConfidenceBand>,
    pub feasibility: FeasibilityReport,
    pub sidecar: BandSidecar,
}

impl BandRun {
    pub fn exit_code(&self) -> i32 {
        if self.feasibility.feasible {
            0
        } else {
            EXIT_INFEASIBLE
        }
    }
}

/// Reads data, resolves σ and κ, computes and writes the band.
pub fn run_band(config: &RunConfig) -> std::result::Result<BandRun, CliError> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(CliError::Parse(format!(
            "alpha must be in (0, 1), got {}",
            config.alpha
        )));
    }
    let values = read_observations(&config.input)?;
    let n = values.len();
    let (sigma, sigma_estimated) = match config.sigma {
        Some(s) if s > 0.0 && s.is_finite() => (s, false),
        Some(s) => return Err(CliError::Parse(format!("sigma must be positive, got {s}"))),
        None => {
            let s = estimate_sigma(&values)?;
            if s <= 0.0 {
                eprintln!("warning: estimated sigma is 0 (constant data); pass --sigma explicitly");
                return Err(Error::Domain("estimated sigma is zero".into()).into());
            }
            (s, true)
        }
    };
    let kappa = resolve_kappa(
        &config.kappa,
        config.shape,
        n,
        config.alpha,
        config.reps,
        config.seed,
    )?;
    let obs = ObservationVector::new(values, Some(sigma))?;
    let mut raw = raw_band(&obs, config.shape, kappa, sigma)?;
    raw.alpha = Some(config.alpha);

    let (post, feasibility) = if config.postprocess {
        let (p, rep) = postprocess(&raw);
        (rep.feasible.then_some(p), rep)
    } else {
        (None, crate::shape::check_feasibility(&raw))
    };
    let sidecar = BandSidecar {
        n,
        shape: config.shape,
        alpha: Some(config.alpha),
        kappa,
        sigma_used: sigma,
        sigma_estimated,
        feasible: feasibility.feasible,
        postprocessed: post.is_some(),
        seed: config.seed,
    };
    let write = |path: &Path, text: String| {
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    write(&config.output, format_band_csv(&raw, post.as_ref()))?;
    write(
        &sidecar_path(&config.output),
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n",
    )?;
    Ok(BandRun {
        raw,
        post,
        feasibility,
        sidecar,
    })
}

/// Reads a band file and its sidecar back.
pub fn read_band(
    path: &Path,
) -> std::result::Result<(ConfidenceBand, Option<ConfidenceBand>), CliError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let meta: BandSidecar = serde_json::from_str(&read(&sidecar_path(path))?)
        .map_err(|e| CliError::Parse(format!("sidecar: {e}")))?;
    parse_band_csv(&read(path)?, &meta)
}

/// Settings for a coverage experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub shape: ShapeClass,
    pub n: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
    pub function: TestFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverageResult {
    pub reps: usize,
    pub hits: usize,
    pub empirical_coverage: f64,
    #[serde(rename = "binomialSE")]
    pub binomial_se: f64,
}

impl CoverageResult {
    pub fn from_hits(hits: usize, reps: usize) -> Self {
        let p = hits as f64 / reps as f64;
        CoverageResult {
            reps,
            hits,
            empirical_coverage: p,
            binomial_se: (p * (1.0 - p) / reps as f64).sqrt(),
        }
    }
}

/// Simulates `Y_i = f(x_i) + σ ε_i` `reps` times and counts replicates whose
/// raw band contains `f` on the whole grid.
pub fn run_coverage(config: &CoverageConfig) -> Result<CoverageResult> {
    if !config.function.in_class(config.shape) {
        return Err(Error::Domain(format!(
            "{} is not in the {} class",
            config.function, config.shape
        )));
    }
    if config.reps == 0 {
        return Err(Error::InvalidConfig("reps must be positive".into()));
    }
    let n = config.n;
    let signal: Vec<f64> = (1..=n)
        .map(|i| config.function.eval((i as f64 - 0.5) / n as f64))
        .collect();
    let truth: Vec<f64> = (1..n)
        .map(|i| config.function.eval(i as f64 / n as f64))
        .collect();
    let stream = splitmix64(config.seed ^ COVERAGE_STREAM);
    let hits = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let mut y = vec![0.0; n];
            fill_standard_normal(stream, r, &mut y);
            for (v, f) in y.iter_mut().zip(&signal) {
                *v = f + config.sigma * *v;
            }
            let obs = ObservationVector::new(y, Some(config.sigma))?;
            let band = raw_band(&obs, config.shape, config.kappa, config.sigma)?;
            Ok(band.contains(&truth) as usize)
        })
        .sum::<Result<usize>>()?;
    Ok(CoverageResult::from_hits(hits, config.reps))
}

/// The kernels under verification; [`KernelSet::default`] is the shipped set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub rescaled: Vec<KernelSpec>,
    pub canonical: Vec<KernelSpec>,
}

impl Default for KernelSet {
    fn default() -> Self {
        let pairs = [
            (ShapeClass::Isotonic, Side::Lower),
            (ShapeClass::Isotonic, Side::Upper),
            (ShapeClass::Convex, Side::Lower),
            (ShapeClass::Convex, Side::Upper),
        ];
        KernelSet {
            rescaled: pairs
                .iter()
                .map(|&(s, d)| KernelSpec::rescaled(s, d))
                .collect(),
            canonical: pairs
                .iter()
                .map(|&(s, d)| KernelSpec::canonical(s, d))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checks: Vec<KernelCheck>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(KernelCheck {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

fn label(spec: &KernelSpec) -> String {
    format!("{}-{:?}", spec.shape, spec.side).to_lowercase()
}

/// Reference moment constants `(⟨1,ψ⟩, ‖ψ‖²)` of the canonical kernels.
fn expected_moments(shape: ShapeClass, side: Side) -> (f64, f64) {
    match (shape, side) {
        (ShapeClass::Isotonic, _) => (0.5, 1.0 / 3.0),
        (ShapeClass::Convex, Side::Lower) => (2.0 / 3.0, 8.0 / 15.0),
        (ShapeClass::Convex, Side::Upper) => (2f64.powf(2.5) / 3.0, 2f64.powf(4.5) / 15.0),
    }
}

fn expected_delta(shape: ShapeClass, side: Side) -> f64 {
    match (shape, side) {
        (ShapeClass::Isotonic, _) => 2f64.powf(1.0 / 3.0),
        (ShapeClass::Convex, Side::Lower) => 0.75f64.powf(0.4),
        (ShapeClass::Convex, Side::Upper) => 3f64.powf(0.4) / 128f64.powf(0.2),
    }
}

/// Runs the kernel property suite against `kernels`.
///
/// `sign_bias_trials` random in-class functions are drawn per rescaled
/// kernel from a stream seeded with `seed`.
pub fn run_verify_kernels(
    kernels: &KernelSet,
    sign_bias_trials: usize,
    seed: u64,
) -> VerificationReport {
    let mut report = VerificationReport::default();

    for spec in &kernels.canonical {
        let m = continuous_moments(spec);
        let (int, sq) = expected_moments(spec.shape, spec.side);
        let err = (m.integral - int).abs().max((m.sq_norm - sq).abs());
        report.push(
            format!("moments {}", label(spec)),
            err <= 1e-9,
            format!("<1,psi> = {:.12}, |psi|^2 = {:.12}", m.integral, m.sq_norm),
        );
        let delta = optimal_constant(spec);
        let want = expected_delta(spec.shape, spec.side);
        report.push(
            format!("optimal constant {}", label(spec)),
            (delta - want).abs() <= 1e-9,
            format!("Delta = {delta:.12} (expected {want:.12})"),
        );
    }

    for spec in &kernels.rescaled {
        let mut worst = 0.0f64;
        for d in spec.min_bandwidth()..=200 {
            match discrete_sums(spec, d) {
                Ok(c) => {
                    let b = brute_force_sums(spec, d);
                    worst = worst
                        .max(((c.s - b.s) / b.s).abs())
                        .max(((c.r - b.r) / b.r).abs());
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
        report.push(
            format!("discrete sums {}", label(spec)),
            worst <= 1e-12,
            format!("max relative error {worst:.3e} over d <= 200"),
        );

        if spec.shape == ShapeClass::Convex {
            let worst = (1..=200i64)
                .map(|d| {
                    ((1 - d)..=d)
                        .map(|j| {
                            let x = (j as f64 - 0.5) / d as f64;
                            x * spec.value(x)
                        })
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0, f64::max);
            report.push(
                format!("odd moment {}", label(spec)),
                worst <= 1e-12,
                format!("max |sum x psi(x)| = {worst:.3e}"),
            );
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violations = 0usize;
        let mut errors = 0usize;
        for _ in 0..sign_bias_trials {
            let (f, n, d, i) = random_bias_case(&mut rng, spec);
            match verify_sign_bias(spec, &|x| f.eval(x), n, d, i) {
                Ok(true) => {}
                Ok(false) => violations += 1,
                Err(_) => errors += 1,
            }
        }
        report.push(
            format!("bias sign {}", label(spec)),
            violations == 0 && errors == 0,
            format!("{violations} violations, {errors} errors in {sign_bias_trials} trials"),
        );
    }
    report
}

/// A random in-class function with a random admissible `(n, d, i)` for
/// `spec`.
pub fn random_bias_case<R: rand::Rng>(
    rng: &mut R,
    spec: &KernelSpec,
) -> (crate::generators::PiecewiseLinear, usize, usize, usize) {
    let segments = rng.gen_range(3..40);
    let f = random_in_class(rng, spec.shape, segments);
    let n = rng.gen_range(8..120usize);
    let range = |d: usize| {
        (
            (spec.left_extent() * d).max(1),
            (n - spec.right_extent() * d).min(n - 1),
        )
    };
    let max_d = (1..=n / (spec.left_extent() + spec.right_extent()))
        .rev()
        .find(|&d| range(d).0 <= range(d).1)
        .expect("n >= 8 leaves room for d = 2");
    let d = rng.gen_range(spec.min_bandwidth()..=max_d);
    let (lo, hi) = range(d);
    let i = rng.gen_range(lo..=hi);
    (f, n, d, i)
}

/// Settings for `simulate`.
pub fn run_simulate(config: &SimulationConfig, output: &Path) -> Result<CriticalValueTable> {
    crate::critical::build_table_to(config, output)
}
