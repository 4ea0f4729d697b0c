//! Shape-aware tightening of a raw band.
//!
//! The postprocessed band is the pointwise envelope of every shape-class
//! sequence lying inside the raw band. For isotonic sequences that is a
//! running max / running min. For convex sequences the upper bound is the
//! greatest convex minorant of the raw upper bound, and the lower bound is
//! the largest chord extension through an upper point and a lower point.
//!
//! All functions work on grid indices; since the grid is equispaced the
//! abscissa scale cancels out of every chord.

use crate::bands::ConfidenceBand;
use crate::error::{Error, Result};
use crate::kernels::ShapeClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// First grid index (0-based) where no shape-class sequence fits.
    pub witness_violation_index: Option<usize>,
}

impl FeasibilityReport {
    fn from_violation(index: Option<usize>) -> Self {
        FeasibilityReport {
            feasible: index.is_none(),
            witness_violation_index: index,
        }
    }
}

fn running_max(v: &[f64]) -> Vec<f64> {
    let mut acc = f64::NEG_INFINITY;
    v.iter()
        .map(|&x| {
            acc = acc.max(x);
            acc
        })
        .collect()
}

fn running_min_from_right(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut acc = f64::INFINITY;
    for (k, &x) in v.iter().enumerate().rev() {
        acc = acc.min(x);
        out[k] = acc;
    }
    out
}

/// Running max of the lower bound, running min (from the right) of the
/// upper bound.
pub fn postprocess_isotonic(band: &ConfidenceBand) -> Result<ConfidenceBand> {
    if band.shape != ShapeClass::Isotonic {
        return Err(Error::ShapeMismatch {
            expected: ShapeClass::Isotonic,
            actual: band.shape,
        });
    }
    Ok(ConfidenceBand {
        lower: running_max(&band.lower),
        upper: running_min_from_right(&band.upper),
        postprocessed: true,
        ..band.clone()
    })
}

/// Indices of the lower convex hull of the finite points `(k, v[k])`.
pub fn lower_hull(v: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::new();
    for (k, &y) in v.iter().enumerate() {
        if !y.is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            // keep only strict left turns
            let cross = (a - o) as f64 * (y - v[o]) - (v[a] - v[o]) * (k - o) as f64;
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    hull
}

/// Greatest convex minorant on the grid. `+∞` entries impose no
/// constraint: inside the finite range they take the hull value, outside
/// it they stay `+∞`.
pub fn gcm(upper: &[f64]) -> Vec<f64> {
    let hull = lower_hull(upper);
    let mut out = vec![f64::INFINITY; upper.len()];
    match hull.as_slice() {
        [] => {}
        [only] => out[*only] = upper[*only],
        _ => {
            for w in hull.windows(2) {
                let (a, b) = (w[0], w[1]);
                let slope = (upper[b] - upper[a]) / (b - a) as f64;
                for (k, slot) in out.iter_mut().enumerate().take(b).skip(a) {
                    *slot = upper[a] + slope * (k - a) as f64;
                }
            }
            let last = *hull.last().expect("nonempty");
            out[last] = upper[last];
        }
    }
    out
}

/// Convex refinement of the lower bound, given a convex upper bound `uu`.
///
/// For each `x` this is the larger of
/// `max_{s < t <= x}` of the line through `(s, uu(s))` and `(t, lower(t))`
/// at `x`, and `max_{x <= s < t}` of the line through `(s, lower(s))` and
/// `(t, uu(t))` at `x`, and never below `lower(x)`.
///
/// The line through `(s, uu(s))` and `(t, lower(t))` evaluated at `x >= t`
/// is `lower(t) + slope (x - t)`, so only the steepest chord into each `t`
/// matters; it is attained at a hull vertex of `uu` or at `s = t - 1`.
/// The mirrored statement holds for the second family. Cost `O(n^2)`.
#[allow(clippy::needless_range_loop)]
pub fn refine_lower(uu: &[f64], lower: &[f64]) -> Vec<f64> {
    let len = lower.len().min(uu.len());
    let vertices = lower_hull(uu);

    // steepest chord from the left into each t, flattest chord to the right of each s
    let mut into = vec![f64::NEG_INFINITY; len];
    let mut out_of = vec![f64::INFINITY; len];
    for t in 0..len {
        if !lower[t].is_finite() {
            continue;
        }
        let left = vertices
            .iter()
            .copied()
            .take_while(|&s| s < t)
            .chain(t.checked_sub(1));
        for s in left {
            if uu[s].is_finite() {
                into[t] = into[t].max((lower[t] - uu[s]) / (t - s) as f64);
            }
        }
        let right = vertices
            .iter()
            .copied()
            .skip_while(|&u| u <= t)
            .chain((t + 1 < len).then_some(t + 1));
        for u in right {
            if uu[u].is_finite() {
                out_of[t] = out_of[t].min((uu[u] - lower[t]) / (u - t) as f64);
            }
        }
    }

    let mut result = lower[..len].to_vec();
    for t in 0..len {
        if into[t].is_finite() {
            for x in t..len {
                let v = lower[t] + into[t] * (x - t) as f64;
                if v > result[x] {
                    result[x] = v;
                }
            }
        }
        if out_of[t].is_finite() {
            for x in 0..=t {
                let v = lower[t] - out_of[t] * (t - x) as f64;
                if v > result[x] {
                    result[x] = v;
                }
            }
        }
    }
    result
}

/// Literal `O(n^3)` evaluation of the chord-extension formula.
pub fn refine_lower_reference(uu: &[f64], lower: &[f64]) -> Vec<f64> {
    let len = lower.len().min(uu.len());
    (0..len)
        .map(|x| {
            let mut best = lower[x];
            for s in 0..len {
                for t in s + 1..len {
                    if t <= x && uu[s].is_finite() && lower[t].is_finite() {
                        let v = uu[s] + (lower[t] - uu[s]) / (t - s) as f64 * (x - s) as f64;
                        best = best.max(v);
                    }
                    if x <= s && uu[t].is_finite() && lower[s].is_finite() {
                        let v = uu[t] - (uu[t] - lower[s]) / (t - s) as f64 * (t - x) as f64;
                        best = best.max(v);
                    }
                }
            }
            best
        })
        .collect()
}

/// Refined lower bound of a convex band; the upper bound is replaced by its
/// greatest convex minorant first.
pub fn refine_convex_lower(band: &ConfidenceBand) -> Result<Vec<f64>> {
    if band.shape != ShapeClass::Convex {
        return Err(Error::ShapeMismatch {
            expected: ShapeClass::Convex,
            actual: band.shape,
        });
    }
    Ok(refine_lower(&gcm(&band.upper), &band.lower))
}

/// Convex postprocessing without a feasibility check.
pub fn postprocess_convex(band: &ConfidenceBand) -> Result<ConfidenceBand> {
    if band.shape != ShapeClass::Convex {
        return Err(Error::ShapeMismatch {
            expected: ShapeClass::Convex,
            actual: band.shape,
        });
    }
    let upper = gcm(&band.upper);
    let lower = refine_lower(&upper, &band.lower);
    Ok(ConfidenceBand {
        lower,
        upper,
        postprocessed: true,
        ..band.clone()
    })
}

/// Whether some shape-class sequence fits between the bounds.
pub fn check_feasibility(band: &ConfidenceBand) -> FeasibilityReport {
    let violation = match band.shape {
        ShapeClass::Isotonic => {
            let lo = running_max(&band.lower);
            let up = running_min_from_right(&band.upper);
            lo.iter().zip(&up).position(|(l, u)| l > u)
        }
        ShapeClass::Convex => {
            let up = gcm(&band.upper);
            band.lower.iter().zip(&up).position(|(l, u)| l > u)
        }
    };
    FeasibilityReport::from_violation(violation)
}

/// Postprocesses a feasible band; an infeasible band comes back unchanged
/// together with its report.
pub fn postprocess(band: &ConfidenceBand) -> (ConfidenceBand, FeasibilityReport) {
    let report = check_feasibility(band);
    if !report.feasible {
        return (band.clone(), report);
    }
    let out = match band.shape {
        ShapeClass::Isotonic => postprocess_isotonic(band),
        ShapeClass::Convex => postprocess_convex(band),
    }
    .expect("shape matches");
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn band(shape: ShapeClass, lower: Vec<f64>, upper: Vec<f64>) -> ConfidenceBand {
        ConfidenceBand {
            n: lower.len() + 1,
            lower,
            upper,
            alpha: None,
            kappa: 1.0,
            shape,
            sigma_used: 1.0,
            postprocessed: false,
        }
    }

    fn gcm_oracle(v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|x| {
                let mut best = v[x];
                for i in 0..=x {
                    for j in x..v.len() {
                        if i < j {
                            let c = v[i] + (v[j] - v[i]) * (x - i) as f64 / (j - i) as f64;
                            best = best.min(c);
                        }
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn isotonic_envelopes() {
        let b = band(
            ShapeClass::Isotonic,
            vec![1.0, 0.0, 2.0],
            vec![3.0, 1.0, 2.0],
        );
        let p = postprocess_isotonic(&b).unwrap();
        assert_eq!(p.lower, vec![1.0, 1.0, 2.0]);
        assert_eq!(p.upper, vec![1.0, 1.0, 2.0]);
        assert!(p.postprocessed);
        let q = postprocess_isotonic(&p).unwrap();
        assert_eq!(q.lower, p.lower);
        assert_eq!(q.upper, p.upper);
        let c = band(ShapeClass::Convex, vec![0.0], vec![1.0]);
        assert!(postprocess_isotonic(&c).is_err());
    }

    #[test]
    fn gcm_examples() {
        assert_eq!(gcm(&[0.0, 1.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let convex = [4.0, 1.0, 0.0, 1.0, 4.0, 9.0];
        assert_eq!(gcm(&convex), convex.to_vec());
        let inf = f64::INFINITY;
        assert_eq!(
            gcm(&[inf, 2.0, inf, 0.0, inf]),
            vec![inf, 2.0, 1.0, 0.0, inf]
        );
        assert!(gcm(&[inf, inf]).iter().all(|v| v.is_infinite()));
        assert_eq!(gcm(&[3.0]), vec![3.0]);
    }

    #[test]
    fn gcm_matches_chord_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let v: Vec<f64> = (0..49).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = gcm(&v);
            let slow = gcm_oracle(&v);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
            for (g, u) in fast.iter().zip(&v) {
                assert!(g <= &(u + 1e-15));
            }
            for w in fast.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12);
            }
        }
    }

    #[test]
    fn refine_examples() {
        let lin: Vec<f64> = (0..10).map(|k| 0.5 * k as f64 - 1.0).collect();
        let r = refine_lower(&lin, &lin);
        for (a, b) in r.iter().zip(&lin) {
            assert!((a - b).abs() < 1e-12);
        }
        let zeros = vec![0.0; 12];
        let ones = vec![1.0; 12];
        assert_eq!(refine_lower(&ones, &zeros), zeros);
        assert_eq!(refine_lower_reference(&ones, &zeros), zeros);
        let b = band(ShapeClass::Isotonic, zeros.clone(), ones);
        assert!(refine_convex_lower(&b).is_err());
    }

    #[test]
    fn refine_fast_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..40 {
            let len = 29;
            let c = rng.gen_range(0.2..0.8);
            let f: Vec<f64> = (0..len)
                .map(|k| {
                    let x = (k + 1) as f64 / 30.0;
                    (x - c) * (x - c) * 4.0
                })
                .collect();
            let mut lower: Vec<f64> = f.iter().map(|v| v - rng.gen_range(0.0..0.5)).collect();
            let upper: Vec<f64> = f.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
            if trial % 3 == 0 {
                lower[0] = f64::NEG_INFINITY;
                lower[len - 1] = f64::NEG_INFINITY;
            }
            let uu = gcm(&upper);
            let fast = refine_lower(&uu, &lower);
            let slow = refine_lower_reference(&uu, &lower);
            for (k, (a, b)) in fast.iter().zip(&slow).enumerate() {
                assert!((a - b).abs() < 1e-12, "trial {trial} k {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn feasibility() {
        let b = band(ShapeClass::Isotonic, vec![0.0; 5], vec![1.0; 5]);
        assert!(check_feasibility(&b).feasible);
        let b = band(ShapeClass::Isotonic, vec![2.0, 0.0], vec![1.0, 3.0]);
        let r = check_feasibility(&b);
        assert!(!r.feasible);
        assert_eq!(r.witness_violation_index, Some(0));
        // running max pushes the lower bound above a later upper bound
        let b = band(
            ShapeClass::Isotonic,
            vec![0.0, 2.0, 0.0],
            vec![3.0, 3.0, 1.0],
        );
        assert_eq!(check_feasibility(&b).witness_violation_index, Some(1));
        let b = band(ShapeClass::Convex, vec![0.0, 0.9, 0.0], vec![1.0, 1.0, 1.0]);
        assert!(check_feasibility(&b).feasible);
        let b = band(ShapeClass::Convex, vec![0.0, 0.9, 0.0], vec![0.0, 2.0, 0.0]);
        assert_eq!(check_feasibility(&b).witness_violation_index, Some(1));
        let (out, rep) = postprocess(&b);
        assert!(!rep.feasible);
        assert_eq!(out, b);
    }
}
