//! Windowed kernel sums and penalized multiscale statistics on the grid
//! `x_i = (i - 1/2)/n`.
//!
//! Locations are `t = i/n` with `i = 1..n-1` and bandwidths `h = d/n`, so
//! everything is indexed by the integers `(d, i)`. A window sum of a
//! piecewise-quadratic kernel is a combination of the moment sums
//! `Σ u^k Y_m`, `k = 0, 1, 2`, over the window, each of which is a
//! difference of two prefix sums. A full scan costs `O(n |H|)`.

use crate::error::{Error, Result};
use crate::kernels::{discrete_sums, KernelSpec, PieceRange, ShapeClass, Side};

/// Observations `Y_1, ..., Y_n` on the implied design `x_i = (i - 1/2)/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    values: Vec<f64>,
    sigma: Option<f64>,
}

impl ObservationVector {
    pub fn new(values: Vec<f64>, sigma: Option<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}",
                i + 1
            )));
        }
        if let Some(s) = sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Domain(format!("sigma must be positive, got {s}")));
            }
        }
        Ok(ObservationVector { values, sigma })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    /// Design point `x_i`, 1-based.
    pub fn design_point(&self, i: usize) -> f64 {
        (i as f64 - 0.5) / self.n() as f64
    }
}

/// Running sums of `u^k Y_m` for `k = 0, 1, 2`, with `u = m - (n+1)/2`.
///
/// The index is centered to keep the second moment small; accumulation is
/// compensated (Neumaier).
#[derive(Debug, Clone, Default)]
pub struct MomentPrefixSums {
    cum: [Vec<f64>; 3],
    center: f64,
}

impl MomentPrefixSums {
    pub fn new(values: &[f64]) -> Self {
        let mut ps = MomentPrefixSums::default();
        ps.rebuild(values);
        ps
    }

    /// Recomputes the sums in place, reusing the allocations.
    pub fn rebuild(&mut self, values: &[f64]) {
        let n = values.len();
        self.center = (n as f64 + 1.0) / 2.0;
        for c in &mut self.cum {
            c.clear();
            c.reserve(n + 1);
            c.push(0.0);
        }
        let mut sum = [0.0f64; 3];
        let mut comp = [0.0f64; 3];
        for (idx, &y) in values.iter().enumerate() {
            let u = (idx + 1) as f64 - self.center;
            let terms = [y, u * y, u * u * y];
            for k in 0..3 {
                let t = sum[k] + terms[k];
                if sum[k].abs() >= terms[k].abs() {
                    comp[k] += (sum[k] - t) + terms[k];
                } else {
                    comp[k] += (terms[k] - t) + sum[k];
                }
                sum[k] = t;
                self.cum[k].push(sum[k] + comp[k]);
            }
        }
    }

    pub fn n(&self) -> usize {
        self.cum[0].len().saturating_sub(1)
    }

    /// Centering offset subtracted from the 1-based index.
    pub fn center(&self) -> f64 {
        self.center
    }

    /// Moment sums over `m = lo..=hi` (1-based, inclusive).
    #[inline]
    pub fn range(&self, lo: usize, hi: usize) -> [f64; 3] {
        [
            self.cum[0][hi] - self.cum[0][lo - 1],
            self.cum[1][hi] - self.cum[1][lo - 1],
            self.cum[2][hi] - self.cum[2][lo - 1],
        ]
    }
}

/// `Γ(u) = sqrt(2 log(e/u))` for `0 < u <= 1`.
pub fn gamma(u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("gamma needs 0 < u <= 1, got {u}")));
    }
    Ok(gamma_unchecked(u))
}

#[inline]
fn gamma_unchecked(u: f64) -> f64 {
    (2.0 * (1.0 - u.ln())).sqrt()
}

/// Bandwidth set `H` (as integers `d = nh`) and the location grid
/// `T = {1/n, ..., (n-1)/n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScheme {
    n: usize,
    bandwidths: Vec<usize>,
}

impl GridScheme {
    /// The standard bandwidth set for a shape class: `1..=n` for isotonic,
    /// `1..=⌊n/2⌋` for convex.
    pub fn standard(shape: ShapeClass, n: usize) -> Self {
        let max_d = match shape {
            ShapeClass::Isotonic => n,
            ShapeClass::Convex => n / 2,
        };
        GridScheme {
            n,
            bandwidths: (1..=max_d).collect(),
        }
    }

    /// A custom bandwidth set; entries must lie in `1..=n`.
    pub fn with_bandwidths(n: usize, mut bandwidths: Vec<usize>) -> Result<Self> {
        if let Some(&d) = bandwidths.iter().find(|&&d| d == 0 || d > n) {
            return Err(Error::Domain(format!(
                "bandwidth index {d} outside 1..={n}"
            )));
        }
        bandwidths.sort_unstable();
        bandwidths.dedup();
        Ok(GridScheme { n, bandwidths })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> &[usize] {
        &self.bandwidths
    }

    /// Location indices `i` with `t = i/n` in `T ∩ [a h, 1 - b h]`.
    pub fn admissible_locations(&self, spec: &KernelSpec, d: usize) -> Option<(usize, usize)> {
        let lo = (spec.left_extent() * d).max(1);
        let hi = self.n.checked_sub(spec.right_extent() * d)?.min(self.n - 1);
        (lo <= hi).then_some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Kernel estimate `f̂_h(t)` and its standard deviation `σ_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub fhat: f64,
    pub sd: f64,
}

/// Value of a multiscale statistic and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiscaleResult {
    pub value: f64,
    /// Bandwidth index of the maximizer (`h = d/n`).
    pub d: usize,
    /// Location index of the maximizer (`t = i/n`).
    pub i: usize,
    pub term_count: usize,
    n: usize,
}

impl MultiscaleResult {
    pub fn bandwidth(&self) -> f64 {
        self.d as f64 / self.n as f64
    }

    pub fn location(&self) -> f64 {
        self.i as f64 / self.n as f64
    }
}

#[inline]
pub(crate) fn window_from_ranges(
    ps: &MomentPrefixSums,
    ranges: &[PieceRange],
    d: usize,
    i: usize,
) -> f64 {
    let inv_d = 1.0 / d as f64;
    // x = (m - i - 1/2)/d = (u - c)/d with u = m - center
    let c = i as f64 + 0.5 - ps.center();
    let mut total = 0.0;
    for r in ranges {
        let lo = (i as i64 + r.j_lo) as usize;
        let hi = (i as i64 + r.j_hi) as usize;
        let [s0, s1, s2] = ps.range(lo, hi);
        let [c0, c1, c2] = r.coeffs;
        let m1 = (s1 - c * s0) * inv_d;
        let m2 = (s2 - 2.0 * c * s1 + c * c * s0) * inv_d * inv_d;
        total += c0 * s0 + c1 * m1 + c2 * m2;
    }
    total
}

/// `ψY(h, t) = Σ_j ψ((j - 1/2)/d) Y_{i+j}` for `h = d/n`, `t = i/n`.
pub fn window_sum(ps: &MomentPrefixSums, spec: &KernelSpec, d: usize, i: usize) -> Result<f64> {
    let n = ps.n();
    let lo = spec.left_extent() * d;
    let fits = d >= 1 && i >= lo && i <= n && n - i >= spec.right_extent() * d;
    if !fits {
        return Err(Error::WindowOutOfRange { n, d, i });
    }
    Ok(window_from_ranges(ps, &spec.piece_ranges(d), d, i))
}

/// `f̂_h(t) = ψY(h,t)/S_d` with standard deviation `σ sqrt(R_d)/S_d`.
pub fn kernel_estimate(
    ps: &MomentPrefixSums,
    spec: &KernelSpec,
    d: usize,
    i: usize,
    sigma: f64,
) -> Result<KernelEstimate> {
    let sums = discrete_sums(spec, d)?;
    let w = window_sum(ps, spec, d, i)?;
    Ok(KernelEstimate {
        fhat: w / sums.s,
        sd: sigma * sums.r.sqrt() / sums.s,
    })
}

/// Per-bandwidth constants for one kernel on one grid.
#[derive(Debug, Clone)]
pub(crate) struct ScanRow {
    pub d: usize,
    pub i_lo: usize,
    pub i_hi: usize,
    pub s: f64,
    pub sqrt_r: f64,
    pub penalty: f64,
    pub ranges: Vec<PieceRange>,
}

/// Precomputed scan plan for one kernel: every admissible bandwidth with its
/// location range, closed-form sums and scale penalty.
#[derive(Debug, Clone)]
pub struct KernelScan {
    spec: KernelSpec,
    n: usize,
    pub(crate) rows: Vec<ScanRow>,
}

impl KernelScan {
    pub fn new(spec: &KernelSpec, grid: &GridScheme) -> Result<Self> {
        let n = grid.n();
        let mut rows = Vec::with_capacity(grid.bandwidths().len());
        for &d in grid.bandwidths() {
            if d < spec.min_bandwidth() {
                continue;
            }
            let Some((i_lo, i_hi)) = grid.admissible_locations(spec, d) else {
                continue;
            };
            let sums = discrete_sums(spec, d)?;
            let penalty = gamma(spec.support_width() * d as f64 / n as f64)?;
            rows.push(ScanRow {
                d,
                i_lo,
                i_hi,
                s: sums.s,
                sqrt_r: sums.r.sqrt(),
                penalty,
                ranges: spec.piece_ranges(d),
            });
        }
        Ok(KernelScan {
            spec: spec.clone(),
            n,
            rows,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `max_{d,i} (sign · ψY/(σ sqrt(R_d)) - Γ((a+b)d/n))`, ties broken by
    /// smallest `d`, then smallest `i`.
    pub fn statistic(
        &self,
        ps: &MomentPrefixSums,
        sign: Sign,
        sigma: f64,
    ) -> Result<MultiscaleResult> {
        if ps.n() != self.n {
            return Err(Error::InvalidData(format!(
                "scan built for n = {}, data has n = {}",
                self.n,
                ps.n()
            )));
        }
        let mut best = MultiscaleResult {
            value: f64::NEG_INFINITY,
            d: 0,
            i: 0,
            term_count: 0,
            n: self.n,
        };
        let sgn = sign.factor();
        for row in &self.rows {
            let scale = sgn / (sigma * row.sqrt_r);
            let (mut row_best, mut row_arg) = (f64::NEG_INFINITY, 0);
            for i in row.i_lo..=row.i_hi {
                let v = scale * window_from_ranges(ps, &row.ranges, row.d, i);
                if v > row_best {
                    row_best = v;
                    row_arg = i;
                }
            }
            best.term_count += row.i_hi - row.i_lo + 1;
            let v = row_best - row.penalty;
            if v > best.value {
                best.value = v;
                best.d = row.d;
                best.i = row_arg;
            }
        }
        if best.term_count == 0 {
            return Err(Error::NoAdmissiblePairs { n: self.n });
        }
        Ok(best)
    }
}

/// Lower and upper kernel scans for a shape class, reusable across many
/// residual vectors of the same length.
#[derive(Debug, Clone)]
pub struct CombinedScan {
    lower: KernelScan,
    upper: KernelScan,
}

impl CombinedScan {
    pub fn new(shape: ShapeClass, grid: &GridScheme) -> Result<Self> {
        Ok(CombinedScan {
            lower: KernelScan::new(&KernelSpec::rescaled(shape, Side::Lower), grid)?,
            upper: KernelScan::new(&KernelSpec::rescaled(shape, Side::Upper), grid)?,
        })
    }

    /// `T* = max(T(ψ_lower), T(-ψ_upper))`.
    pub fn statistic(&self, ps: &MomentPrefixSums, sigma: f64) -> Result<f64> {
        let lo = self.lower.statistic(ps, Sign::Plus, sigma)?;
        let up = self.upper.statistic(ps, Sign::Minus, sigma)?;
        Ok(lo.value.max(up.value))
    }
}

fn require_sigma(obs: &ObservationVector) -> Result<f64> {
    obs.sigma()
        .ok_or_else(|| Error::Domain("noise level sigma must be set on the residuals".into()))
}

/// `T_n(±ψ)` for one kernel.
pub fn multiscale_statistic(
    residuals: &ObservationVector,
    spec: &KernelSpec,
    sign: Sign,
    grid: &GridScheme,
) -> Result<MultiscaleResult> {
    let sigma = require_sigma(residuals)?;
    check_grid(residuals, grid)?;
    let ps = MomentPrefixSums::new(residuals.values());
    KernelScan::new(spec, grid)?.statistic(&ps, sign, sigma)
}

/// `T_n* = max(T_n(ψ_lower), T_n(-ψ_upper))`.
pub fn combined_statistic(
    residuals: &ObservationVector,
    grid: &GridScheme,
    shape: ShapeClass,
) -> Result<f64> {
    let sigma = require_sigma(residuals)?;
    check_grid(residuals, grid)?;
    let ps = MomentPrefixSums::new(residuals.values());
    CombinedScan::new(shape, grid)?.statistic(&ps, sigma)
}

fn check_grid(obs: &ObservationVector, grid: &GridScheme) -> Result<()> {
    if obs.n() != grid.n() {
        return Err(Error::InvalidData(format!(
            "grid built for n = {}, data has n = {}",
            grid.n(),
            obs.n()
        )));
    }
    Ok(())
}
