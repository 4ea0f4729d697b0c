//! Confidence bands on the grid `T_n = {1/n, ..., (n-1)/n}`.

use crate::error::{Error, Result};
use crate::kernels::{optimal_constant, KernelSpec, ShapeClass, Side};
use crate::multiscale::{
    gamma, window_from_ranges, GridScheme, KernelScan, MomentPrefixSums, ObservationVector,
};

/// Lower and upper confidence bounds at `t = i/n`, `i = 1..n-1`. Entry
/// `k` of each array belongs to `t = (k+1)/n`. Grid points with no
/// admissible bandwidth hold `-∞` / `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    pub n: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: Option<f64>,
    pub kappa: f64,
    pub shape: ShapeClass,
    pub sigma_used: f64,
    pub postprocessed: bool,
}

impl ConfidenceBand {
    /// Grid locations `t = i/n`.
    pub fn grid(&self) -> Vec<f64> {
        (1..self.n).map(|i| i as f64 / self.n as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Whether `lower <= f <= upper` at every grid point, where `f[k]` is
    /// the value at `t = (k+1)/n`.
    pub fn contains(&self, f: &[f64]) -> bool {
        f.len() == self.len()
            && self
                .lower
                .iter()
                .zip(&self.upper)
                .zip(f)
                .all(|((l, u), v)| *l <= *v && *v <= *u)
    }

    /// `upper - lower` pointwise.
    pub fn widths(&self) -> Vec<f64> {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .collect()
    }
}

/// The multiscale kernel band:
/// `ℓ(t) = max_h f̂_lower − σ_h (Γ(d h) + κ)`,
/// `u(t) = min_h f̂_upper + σ_h (Γ(d h) + κ)`.
pub fn raw_band(
    obs: &ObservationVector,
    shape: ShapeClass,
    kappa: f64,
    sigma: f64,
) -> Result<ConfidenceBand> {
    if kappa.is_nan() {
        return Err(Error::Domain("kappa must not be NaN".into()));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = obs.n();
    let grid = GridScheme::standard(shape, n);
    let ps = MomentPrefixSums::new(obs.values());
    let mut lower = vec![f64::NEG_INFINITY; n - 1];
    let mut upper = vec![f64::INFINITY; n - 1];

    let lo_scan = KernelScan::new(&KernelSpec::rescaled(shape, Side::Lower), &grid)?;
    for row in &lo_scan.rows {
        let sd = sigma * row.sqrt_r / row.s;
        let margin = sd * (row.penalty + kappa);
        for i in row.i_lo..=row.i_hi {
            let fhat = window_from_ranges(&ps, &row.ranges, row.d, i) / row.s;
            let v = fhat - margin;
            if v > lower[i - 1] {
                lower[i - 1] = v;
            }
        }
    }
    let up_scan = KernelScan::new(&KernelSpec::rescaled(shape, Side::Upper), &grid)?;
    for row in &up_scan.rows {
        let sd = sigma * row.sqrt_r / row.s;
        let margin = sd * (row.penalty + kappa);
        for i in row.i_lo..=row.i_hi {
            let fhat = window_from_ranges(&ps, &row.ranges, row.d, i) / row.s;
            let v = fhat + margin;
            if v < upper[i - 1] {
                upper[i - 1] = v;
            }
        }
    }
    Ok(ConfidenceBand {
        n,
        lower,
        upper,
        alpha: None,
        kappa,
        shape,
        sigma_used: sigma,
        postprocessed: false,
    })
}

/// Isotonic band from local averages over grid pairs `s = i/n < t = j/n`:
/// `ℓ(x) = max_{s<t<=x} F̂(s,t) − σ(Γ(t−s)+κ)/sqrt(n(t−s))` and
/// `u(x) = min_{x<=s<t} F̂(s,t) + σ(Γ(t−s)+κ)/sqrt(n(t−s))`,
/// where `F̂(s,t)` averages the observations with design points in `(s,t)`.
/// The noise level is taken from `obs`.
#[allow(clippy::needless_range_loop)]
pub fn indicator_band(
    obs: &ObservationVector,
    shape: ShapeClass,
    kappa: f64,
) -> Result<ConfidenceBand> {
    if shape != ShapeClass::Isotonic {
        return Err(Error::ShapeMismatch {
            expected: ShapeClass::Isotonic,
            actual: shape,
        });
    }
    let sigma = obs
        .sigma()
        .ok_or_else(|| Error::Domain("indicator_band needs sigma on the observations".into()))?;
    let n = obs.n();
    let nf = n as f64;
    let ps = MomentPrefixSums::new(obs.values());
    let margin: Vec<f64> = (0..=n)
        .map(|w| {
            if w == 0 {
                f64::NAN
            } else {
                sigma * (gamma(w as f64 / nf).expect("w <= n") + kappa) / (w as f64).sqrt()
            }
        })
        .collect();

    // best_lo[j]: max over i < j of the pair (i, j); best_up[i]: min over j > i.
    let mut best_lo = vec![f64::NEG_INFINITY; n + 1];
    let mut best_up = vec![f64::INFINITY; n + 1];
    for i in 0..n {
        for j in (i + 1)..=n {
            let w = j - i;
            let avg = ps.range(i + 1, j)[0] / w as f64;
            let lo = avg - margin[w];
            let up = avg + margin[w];
            if lo > best_lo[j] {
                best_lo[j] = lo;
            }
            if up < best_up[i] {
                best_up[i] = up;
            }
        }
    }
    let mut lower = vec![f64::NEG_INFINITY; n - 1];
    let mut run = f64::NEG_INFINITY;
    for k in 1..n {
        run = run.max(best_lo[k]);
        lower[k - 1] = run;
    }
    let mut upper = vec![f64::INFINITY; n - 1];
    let mut run = f64::INFINITY;
    for k in (1..n).rev() {
        run = run.min(best_up[k]);
        upper[k - 1] = run;
    }
    Ok(ConfidenceBand {
        n,
        lower,
        upper,
        alpha: None,
        kappa,
        shape,
        sigma_used: sigma,
        postprocessed: false,
    })
}

/// Values of the Lévy-type functionals between two grid functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyDiagnostic {
    pub epsilon: f64,
    pub d_epsilon: f64,
    pub levy: f64,
}

// a - b, with matching infinities treated as non-binding
#[inline]
fn excess(a: f64, b: f64) -> f64 {
    let v = a - b;
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn d_shift(g: &[f64], h: &[f64], e: usize) -> f64 {
    let len = g.len().min(h.len());
    let mut worst = 0.0f64;
    for k in 0..len.saturating_sub(e) {
        worst = worst
            .max(excess(g[k], h[k + e]))
            .max(excess(h[k], g[k + e]));
    }
    worst
}

/// `D_ε(g, h)`: the smallest `λ >= 0` with `g <= h(· + ε) + λ` and
/// `h <= g(· + ε) + λ` on the grid. `g` and `h` are sampled on `T_n`
/// (length `n − 1`); `ε` is rounded up to a multiple of `1/n`.
pub fn levy_d_epsilon(g: &[f64], h: &[f64], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!(
            "epsilon must be in (0, 1], got {epsilon}"
        )));
    }
    if g.len() != h.len() {
        return Err(Error::Domain("grid functions differ in length".into()));
    }
    let n = g.len() + 1;
    let e = ((epsilon * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(d_shift(g, h, e))
}

/// Lévy distance on the grid: the smallest `ε = e/n` with `D_ε <= ε`,
/// found by bisection (valid because `D_ε` is nonincreasing in `ε` for
/// nondecreasing inputs).
pub fn levy_distance(g: &[f64], h: &[f64]) -> Result<f64> {
    if g.len() != h.len() {
        return Err(Error::Domain("grid functions differ in length".into()));
    }
    let n = g.len() + 1;
    let nf = n as f64;
    let ok = |e: usize| d_shift(g, h, e) <= e as f64 / nf;
    let (mut lo, mut hi) = (1usize, n);
    if ok(lo) {
        return Ok(lo as f64 / nf);
    }
    // invariant: !ok(lo), ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi as f64 / nf)
}

/// Both Lévy functionals at once.
pub fn levy_diagnostic(g: &[f64], h: &[f64], epsilon: f64) -> Result<LevyDiagnostic> {
    Ok(LevyDiagnostic {
        epsilon,
        d_epsilon: levy_d_epsilon(g, h, epsilon)?,
        levy: levy_distance(g, h)?,
    })
}

/// Rate `ρ_n` and the optimal constants scaled by `L^{1/(2k+1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptivityEnvelope {
    pub rho: f64,
    pub delta_lower: f64,
    pub delta_upper: f64,
}

pub fn adaptivity_envelope(
    shape: ShapeClass,
    n: usize,
    local_l: f64,
) -> Result<AdaptivityEnvelope> {
    if local_l.is_nan() || local_l <= 0.0 || n == 0 {
        return Err(Error::Domain(format!(
            "need L > 0 and n >= 1, got L = {local_l}, n = {n}"
        )));
    }
    let k = shape.order() as f64;
    let nf = n as f64;
    let rho = ((1.0 + nf.ln()) / nf).powf(k / (2.0 * k + 1.0));
    let scale = local_l.powf(1.0 / (2.0 * k + 1.0));
    Ok(AdaptivityEnvelope {
        rho,
        delta_lower: scale * optimal_constant(&KernelSpec::canonical(shape, Side::Lower)),
        delta_upper: scale * optimal_constant(&KernelSpec::canonical(shape, Side::Upper)),
    })
}
