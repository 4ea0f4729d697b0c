//! Extremal kernels for isotonic and convex regression.
//!
//! Every kernel is stored as a piecewise polynomial of degree at most two.
//! This keeps discrete window sums exact: a window sum over equispaced
//! design points reduces to the first three moment sums of the data (see
//! [`crate::multiscale`]).
//!
//! Two families exist. The *rescaled* kernels have supports inside
//! `[-1, 1]` with integer extents and drive every band computation. The
//! *canonical* kernels are the unit-scale optimizers whose moment constants
//! feed the optimal-rate constants; they are never evaluated on data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape restriction on the regression function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    /// Nondecreasing functions; smoothness order 1.
    Isotonic,
    /// Convex functions; smoothness order 2.
    Convex,
}

impl ShapeClass {
    /// Smoothness order `k` paired with the class.
    pub fn order(self) -> u32 {
        match self {
            ShapeClass::Isotonic => 1,
            ShapeClass::Convex => 2,
        }
    }

    /// Checks that `values` (equispaced samples) lie in the class, up to a
    /// rounding tolerance. Returns the first offending index on failure.
    pub fn check_sequence(self, values: &[f64]) -> Result<()> {
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale;
        let bad = match self {
            ShapeClass::Isotonic => values.windows(2).position(|w| w[1] - w[0] < -tol),
            ShapeClass::Convex => values
                .windows(3)
                .position(|w| w[2] - 2.0 * w[1] + w[0] < -4.0 * tol)
                .map(|p| p + 1),
        };
        match bad {
            Some(index) => Err(Error::InvalidShape { shape: self, index }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeClass::Isotonic => "isotonic",
            ShapeClass::Convex => "convex",
        })
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "isotonic" | "iso" => Ok(ShapeClass::Isotonic),
            "convex" | "conv" => Ok(ShapeClass::Convex),
            other => Err(Error::Domain(format!("unknown shape class {other:?}"))),
        }
    }
}

/// Which side of the band a kernel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Nonpositive bias; yields the lower bound.
    Lower,
    /// Nonnegative bias; yields the upper bound.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    /// Supports inside `[-1, 1]`; used on data.
    Rescaled,
    /// Unit-scale optimizers; used for constants only.
    Canonical,
}

/// `c[0] + c[1] x + c[2] x^2` on `[left, right)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub left: f64,
    pub right: f64,
    pub coeffs: [f64; 3],
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        let [c0, c1, c2] = self.coeffs;
        c0 + x * (c1 + x * c2)
    }
}

/// Piecewise-quadratic kernel supported by `[-a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub shape: ShapeClass,
    pub side: Side,
    pub scale: Scale,
    pub a: f64,
    pub b: f64,
    pub pieces: Vec<Piece>,
}

/// Weight sum `S` and squared-weight sum `R` of a rescaled kernel sampled at
/// `(j - 1/2)/d`, `j = 1-d, ..., d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteKernelSums {
    pub d: usize,
    pub s: f64,
    pub r: f64,
}

/// `⟨1, ψ⟩` and `‖ψ‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousMoments {
    pub integral: f64,
    pub sq_norm: f64,
}

/// Integer window offsets `j_lo..=j_hi` on which one polynomial piece
/// applies, for a fixed integer bandwidth `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PieceRange {
    pub j_lo: i64,
    pub j_hi: i64,
    pub coeffs: [f64; 3],
}

fn piece(left: f64, right: f64, coeffs: [f64; 3]) -> Piece {
    Piece {
        left,
        right,
        coeffs,
    }
}

impl KernelSpec {
    /// Kernels used on the discrete grid.
    pub fn rescaled(shape: ShapeClass, side: Side) -> Self {
        let (a, b, pieces) = match (shape, side) {
            // (1 + x) on [-1, 0]
            (ShapeClass::Isotonic, Side::Lower) => {
                (1.0, 0.0, vec![piece(-1.0, 0.0, [1.0, 1.0, 0.0])])
            }
            // (1 - x) on [0, 1]
            (ShapeClass::Isotonic, Side::Upper) => {
                (0.0, 1.0, vec![piece(0.0, 1.0, [1.0, -1.0, 0.0])])
            }
            // 1 - 3|x| + 2x^2 on [-1, 1]
            (ShapeClass::Convex, Side::Lower) => (
                1.0,
                1.0,
                vec![
                    piece(-1.0, 0.0, [1.0, 3.0, 2.0]),
                    piece(0.0, 1.0, [1.0, -3.0, 2.0]),
                ],
            ),
            // 1 - x^2 on [-1, 1]
            (ShapeClass::Convex, Side::Upper) => {
                (1.0, 1.0, vec![piece(-1.0, 1.0, [1.0, 0.0, -1.0])])
            }
        };
        KernelSpec {
            shape,
            side,
            scale: Scale::Rescaled,
            a,
            b,
            pieces,
        }
    }

    /// Unit-scale optimal kernels.
    pub fn canonical(shape: ShapeClass, side: Side) -> Self {
        let sqrt2 = std::f64::consts::SQRT_2;
        let (a, b, pieces) = match (shape, side) {
            (ShapeClass::Isotonic, _) => {
                let r = Self::rescaled(shape, side);
                (r.a, r.b, r.pieces)
            }
            // 1 - (3/2)|x| + x^2/2 on [-2, 2]
            (ShapeClass::Convex, Side::Lower) => (
                2.0,
                2.0,
                vec![
                    piece(-2.0, 0.0, [1.0, 1.5, 0.5]),
                    piece(0.0, 2.0, [1.0, -1.5, 0.5]),
                ],
            ),
            // 1 - x^2/2 on [-sqrt 2, sqrt 2]
            (ShapeClass::Convex, Side::Upper) => {
                (sqrt2, sqrt2, vec![piece(-sqrt2, sqrt2, [1.0, 0.0, -0.5])])
            }
        };
        KernelSpec {
            shape,
            side,
            scale: Scale::Canonical,
            a,
            b,
            pieces,
        }
    }

    /// Kernel value; zero outside `[-a, b]`. Pieces are half-open with the
    /// last one closed.
    pub fn value(&self, x: f64) -> f64 {
        if x < -self.a || x > self.b {
            return 0.0;
        }
        let last = self.pieces.len() - 1;
        for (k, p) in self.pieces.iter().enumerate() {
            if x >= p.left && (x < p.right || (k == last && x <= p.right)) {
                return p.eval(x);
            }
        }
        0.0
    }

    /// `a + b`, the support length in units of the bandwidth.
    pub fn support_width(&self) -> f64 {
        self.a + self.b
    }

    /// Integer left extent of a rescaled kernel.
    pub fn left_extent(&self) -> usize {
        self.a as usize
    }

    /// Integer right extent of a rescaled kernel.
    pub fn right_extent(&self) -> usize {
        self.b as usize
    }

    /// Smallest integer bandwidth with a nonzero weight sum.
    pub fn min_bandwidth(&self) -> usize {
        match (self.shape, self.side) {
            (ShapeClass::Convex, Side::Lower) => 2,
            _ => 1,
        }
    }

    /// Offsets `j` (relative to the location index) covered by each piece at
    /// integer bandwidth `d`, restricted to `1 - a d ..= b d`.
    pub fn piece_ranges(&self, d: usize) -> Vec<PieceRange> {
        let df = d as f64;
        let lo_all = 1 - (self.a * df).round() as i64;
        let hi_all = (self.b * df).round() as i64;
        let last = self.pieces.len() - 1;
        self.pieces
            .iter()
            .enumerate()
            .filter_map(|(k, p)| {
                // (j - 1/2)/d >= left  and  (j - 1/2)/d < right (<= for the last piece)
                let j_lo = (p.left * df + 0.5).ceil() as i64;
                let j_hi = if k == last {
                    (p.right * df + 0.5).floor() as i64
                } else {
                    (p.right * df + 0.5).ceil() as i64 - 1
                };
                let (j_lo, j_hi) = (j_lo.max(lo_all), j_hi.min(hi_all));
                (j_lo <= j_hi).then_some(PieceRange {
                    j_lo,
                    j_hi,
                    coeffs: p.coeffs,
                })
            })
            .collect()
    }
}

/// Closed-form `S_d` and `R_d` for the rescaled kernels.
pub fn discrete_sums(spec: &KernelSpec, d: usize) -> Result<DiscreteKernelSums> {
    if spec.scale != Scale::Rescaled {
        return Err(Error::NotRescaled);
    }
    if d == 0 {
        return Err(Error::Domain("bandwidth index d must be positive".into()));
    }
    if d < spec.min_bandwidth() {
        return Err(Error::DegenerateBandwidth { d });
    }
    let x = d as f64;
    let (s, r) = match (spec.shape, spec.side) {
        (ShapeClass::Isotonic, _) => (x / 2.0, x / 3.0 - 1.0 / (12.0 * x)),
        (ShapeClass::Convex, Side::Lower) => (
            x / 3.0 - 1.0 / (3.0 * x),
            4.0 * x / 15.0 - 1.0 / (2.0 * x) + 7.0 / (30.0 * x * x * x),
        ),
        (ShapeClass::Convex, Side::Upper) => (
            4.0 * x / 3.0 + 1.0 / (6.0 * x),
            16.0 * x / 15.0 + 7.0 / (120.0 * x * x * x),
        ),
    };
    Ok(DiscreteKernelSums { d, s, r })
}

/// Literal summation of `S_d` and `R_d`.
pub fn brute_force_sums(spec: &KernelSpec, d: usize) -> DiscreteKernelSums {
    let di = d as i64;
    let (mut s, mut r) = (0.0, 0.0);
    for j in (1 - di)..=di {
        let w = spec.value((j as f64 - 0.5) / d as f64);
        s += w;
        r += w * w;
    }
    DiscreteKernelSums { d, s, r }
}

/// Exact integrals of `ψ` and `ψ²` over the support.
pub fn continuous_moments(spec: &KernelSpec) -> ContinuousMoments {
    // antiderivative of sum c_k x^k evaluated between l and r
    fn integrate(c: &[f64], l: f64, r: f64) -> f64 {
        c.iter()
            .enumerate()
            .map(|(k, ck)| {
                let p = (k + 1) as i32;
                ck * (r.powi(p) - l.powi(p)) / p as f64
            })
            .sum()
    }
    let mut integral = 0.0;
    let mut sq_norm = 0.0;
    for p in &spec.pieces {
        let l = p.left.max(-spec.a);
        let r = p.right.min(spec.b);
        if r <= l {
            continue;
        }
        let c = p.coeffs;
        let sq = [
            c[0] * c[0],
            2.0 * c[0] * c[1],
            c[1] * c[1] + 2.0 * c[0] * c[2],
            2.0 * c[1] * c[2],
            c[2] * c[2],
        ];
        integral += integrate(&c, l, r);
        sq_norm += integrate(&sq, l, r);
    }
    ContinuousMoments { integral, sq_norm }
}

/// `Δ = ((k + 1/2) ‖ψ‖²)^{-k/(2k+1)}` for a canonical kernel.
pub fn optimal_constant(spec: &KernelSpec) -> f64 {
    let k = spec.shape.order() as f64;
    let m = continuous_moments(spec);
    ((k + 0.5) * m.sq_norm).powf(-k / (2.0 * k + 1.0))
}

/// Noiseless kernel estimate at `t = i/n` with bandwidth `d/n`, computed by
/// literal summation over the design points `x_m = (m - 1/2)/n`.
pub fn noiseless_estimate(
    spec: &KernelSpec,
    f: &dyn Fn(f64) -> f64,
    n: usize,
    d: usize,
    i: usize,
) -> Result<f64> {
    check_admissible(spec, n, d, i)?;
    let sums = discrete_sums(spec, d)?;
    let nf = n as f64;
    let t = i as f64 / nf;
    let h = d as f64 / nf;
    let total: f64 = (1..=n)
        .map(|m| {
            let x = (m as f64 - 0.5) / nf;
            spec.value((x - t) / h) * f(x)
        })
        .sum();
    Ok(total / sums.s)
}

pub(crate) fn check_admissible(spec: &KernelSpec, n: usize, d: usize, i: usize) -> Result<()> {
    if d < spec.min_bandwidth() {
        return Err(Error::DegenerateBandwidth { d });
    }
    let lo = spec.left_extent() * d;
    let hi = n.checked_sub(spec.right_extent() * d);
    match hi {
        Some(hi) if i >= lo && i <= hi && d >= 1 => Ok(()),
        _ => Err(Error::WindowOutOfRange { n, d, i }),
    }
}

/// Checks the bias sign of the noiseless estimate of `f` at `t = i/n`:
/// lower kernels must not exceed `f(t)`, upper kernels must not fall
/// below it.
///
/// `f` must lie in the kernel's shape class; this is verified on the design
/// points and the evaluation grid.
pub fn verify_sign_bias(
    spec: &KernelSpec,
    f: &dyn Fn(f64) -> f64,
    n: usize,
    d: usize,
    i: usize,
) -> Result<bool> {
    // Design points and grid points interleave at spacing 1/(2n).
    let fine: Vec<f64> = (1..2 * n).map(|k| f(k as f64 / (2 * n) as f64)).collect();
    spec.shape.check_sequence(&fine).map_err(|e| match e {
        Error::InvalidShape { shape, index } => Error::InvalidShape {
            shape,
            index: index.div_ceil(2),
        },
        other => other,
    })?;
    let estimate = noiseless_estimate(spec, f, n, d, i)?;
    let target = f(i as f64 / n as f64);
    let tol = 1e-10 * (1.0 + target.abs());
    Ok(match spec.side {
        Side::Lower => estimate <= target + tol,
        Side::Upper => estimate >= target - tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [(ShapeClass, Side); 4] = [
        (ShapeClass::Isotonic, Side::Lower),
        (ShapeClass::Isotonic, Side::Upper),
        (ShapeClass::Convex, Side::Lower),
        (ShapeClass::Convex, Side::Upper),
    ];

    #[test]
    fn kernel_values() {
        let il = KernelSpec::rescaled(ShapeClass::Isotonic, Side::Lower);
        assert_eq!(il.value(-0.5), 0.5);
        assert_eq!(il.value(0.5), 0.0);
        let cu = KernelSpec::rescaled(ShapeClass::Convex, Side::Upper);
        assert_eq!(cu.value(0.5), 0.75);
        let cl = KernelSpec::rescaled(ShapeClass::Convex, Side::Lower);
        assert_eq!(cl.value(0.5), 0.0);
        assert_eq!(cl.value(-0.5), 0.0);
        assert_eq!(cl.value(0.0), 1.0);
        assert_eq!(cl.value(1.0), 0.0);
        assert_eq!(cl.value(1.5), 0.0);
    }

    #[test]
    fn convex_kernels_are_even() {
        for side in [Side::Lower, Side::Upper] {
            for spec in [
                KernelSpec::rescaled(ShapeClass::Convex, side),
                KernelSpec::canonical(ShapeClass::Convex, side),
            ] {
                for k in 0..=200 {
                    let x = -2.0 + k as f64 * 0.02;
                    assert_eq!(spec.value(x), spec.value(-x), "{x}");
                }
            }
        }
    }

    #[test]
    fn small_sums_by_hand() {
        let il = KernelSpec::rescaled(ShapeClass::Isotonic, Side::Lower);
        // j = -1, 0 contribute 1 - 3/4 and 1 - 1/4
        let s = brute_force_sums(&il, 2);
        assert_eq!(s.s, 1.0);
        assert_eq!(s.r, 0.625);
        let c = discrete_sums(&il, 2).unwrap();
        assert_eq!((c.s, c.r), (1.0, 0.625));

        let iu = KernelSpec::rescaled(ShapeClass::Isotonic, Side::Upper);
        assert_eq!(brute_force_sums(&iu, 1).s, 0.5);

        let cl = KernelSpec::rescaled(ShapeClass::Convex, Side::Lower);
        assert!((brute_force_sums(&cl, 2).s - 0.5).abs() < 1e-15);
        assert_eq!(brute_force_sums(&cl, 1).s, 0.0);
        assert!(matches!(
            discrete_sums(&cl, 1),
            Err(Error::DegenerateBandwidth { d: 1 })
        ));

        let cu = KernelSpec::rescaled(ShapeClass::Convex, Side::Upper);
        let c = discrete_sums(&cu, 3).unwrap();
        assert!((c.s - (4.0 + 1.0 / 18.0)).abs() < 1e-14);
        assert!((c.r - (16.0 * 3.0 / 15.0 + 7.0 / (120.0 * 27.0))).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_match_literal_sums() {
        for (shape, side) in ALL {
            let spec = KernelSpec::rescaled(shape, side);
            for d in spec.min_bandwidth()..=200 {
                let c = discrete_sums(&spec, d).unwrap();
                let b = brute_force_sums(&spec, d);
                assert!(
                    ((c.s - b.s) / b.s).abs() <= 1e-12,
                    "{shape:?} {side:?} S_{d}"
                );
                assert!(
                    ((c.r - b.r) / b.r).abs() <= 1e-12,
                    "{shape:?} {side:?} R_{d}"
                );
            }
        }
    }

    #[test]
    fn closed_forms_reject_canonical() {
        let spec = KernelSpec::canonical(ShapeClass::Convex, Side::Upper);
        assert!(matches!(discrete_sums(&spec, 3), Err(Error::NotRescaled)));
    }

    #[test]
    fn piece_ranges_partition_window() {
        for (shape, side) in ALL {
            let spec = KernelSpec::rescaled(shape, side);
            for d in 1..40usize {
                let ranges = spec.piece_ranges(d);
                let mut covered = 0;
                for r in &ranges {
                    covered += r.j_hi - r.j_lo + 1;
                }
                let expected = ((spec.a + spec.b) * d as f64) as i64;
                assert_eq!(covered, expected, "{shape:?} {side:?} d={d}");
            }
        }
        let cl = KernelSpec::rescaled(ShapeClass::Convex, Side::Lower);
        let r = cl.piece_ranges(3);
        assert_eq!((r[0].j_lo, r[0].j_hi), (-2, 0));
        assert_eq!((r[1].j_lo, r[1].j_hi), (1, 3));
    }

    #[test]
    fn convex_first_moment_vanishes() {
        for side in [Side::Lower, Side::Upper] {
            let spec = KernelSpec::rescaled(ShapeClass::Convex, side);
            for d in 1..=200i64 {
                let m: f64 = ((1 - d)..=d)
                    .map(|j| {
                        let x = (j as f64 - 0.5) / d as f64;
                        x * spec.value(x)
                    })
                    .sum();
                assert!(m.abs() < 1e-12, "d={d}: {m}");
            }
        }
    }

    #[test]
    fn moment_constants() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        let m = continuous_moments(&KernelSpec::canonical(ShapeClass::Isotonic, Side::Lower));
        assert!(close(m.integral, 0.5) && close(m.sq_norm, 1.0 / 3.0));
        let m = continuous_moments(&KernelSpec::canonical(ShapeClass::Isotonic, Side::Upper));
        assert!(close(m.integral, 0.5) && close(m.sq_norm, 1.0 / 3.0));
        let m = continuous_moments(&KernelSpec::canonical(ShapeClass::Convex, Side::Lower));
        assert!(close(m.integral, 2.0 / 3.0) && close(m.sq_norm, 8.0 / 15.0));
        let m = continuous_moments(&KernelSpec::canonical(ShapeClass::Convex, Side::Upper));
        assert!(close(m.integral, 2f64.powf(2.5) / 3.0));
        assert!(close(m.sq_norm, 2f64.powf(4.5) / 15.0));
    }

    #[test]
    fn optimal_constants() {
        let iso = optimal_constant(&KernelSpec::canonical(ShapeClass::Isotonic, Side::Lower));
        assert!((iso - 2f64.powf(1.0 / 3.0)).abs() < 1e-9);
        let cl = optimal_constant(&KernelSpec::canonical(ShapeClass::Convex, Side::Lower));
        assert!((cl - 0.75f64.powf(0.4)).abs() < 1e-9);
        assert!((cl - 0.891).abs() < 1e-3);
        let cu = optimal_constant(&KernelSpec::canonical(ShapeClass::Convex, Side::Upper));
        assert!((cu - 3f64.powf(0.4) / 128f64.powf(0.2)).abs() < 1e-9);
        assert!((cu - 0.588).abs() < 1e-3);
    }

    #[test]
    fn sign_bias_examples() {
        let il = KernelSpec::rescaled(ShapeClass::Isotonic, Side::Lower);
        let c = |_: f64| 5.0;
        for d in 1..10 {
            for i in d..20 {
                assert!(verify_sign_bias(&il, &c, 20, d, i).unwrap());
                let est = noiseless_estimate(&il, &c, 20, d, i).unwrap();
                assert!((est - 5.0).abs() < 1e-12, "{est}");
            }
        }

        let cu = KernelSpec::rescaled(ShapeClass::Convex, Side::Upper);
        let lin = |x: f64| x;
        for d in 1..10 {
            for i in d..=(20 - d) {
                assert!(verify_sign_bias(&cu, &lin, 20, d, i).unwrap());
                let est = noiseless_estimate(&cu, &lin, 20, d, i).unwrap();
                assert!((est - i as f64 / 20.0).abs() < 1e-14);
            }
        }

        let cl = KernelSpec::rescaled(ShapeClass::Convex, Side::Lower);
        let sq = |x: f64| (x - 0.5) * (x - 0.5);
        assert!(verify_sign_bias(&cl, &sq, 100, 10, 50).unwrap());
        assert!(noiseless_estimate(&cl, &sq, 100, 10, 50).unwrap() < 0.0);
    }

    #[test]
    fn sign_bias_rejects_out_of_class() {
        let il = KernelSpec::rescaled(ShapeClass::Isotonic, Side::Lower);
        let dec = |x: f64| -x;
        assert!(matches!(
            verify_sign_bias(&il, &dec, 10, 2, 5),
            Err(Error::InvalidShape { .. })
        ));
        let cu = KernelSpec::rescaled(ShapeClass::Convex, Side::Upper);
        let concave = |x: f64| -(x * x);
        assert!(matches!(
            verify_sign_bias(&cu, &concave, 10, 2, 5),
            Err(Error::InvalidShape { .. })
        ));
        assert!(matches!(
            verify_sign_bias(&cu, &|x| x, 10, 6, 5),
            Err(Error::WindowOutOfRange { .. })
        ));
    }
}
