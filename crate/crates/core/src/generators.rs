//! Random shape-class functions and the named regression functions used by
//! coverage experiments.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::ShapeClass;

/// Piecewise-linear function on `[0, 1]` with equispaced knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
}

impl PiecewiseLinear {
    /// `knots[k]` is the value at `k / (knots.len() - 1)`.
    pub fn new(knots: Vec<f64>) -> Self {
        assert!(knots.len() >= 2, "need at least two knots");
        PiecewiseLinear { knots }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let m = (self.knots.len() - 1) as f64;
        let pos = (x.clamp(0.0, 1.0) * m).min(m);
        let k = (pos.floor() as usize).min(self.knots.len() - 2);
        let frac = pos - k as f64;
        self.knots[k] + frac * (self.knots[k + 1] - self.knots[k])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

/// Nondecreasing function: cumulative sums of nonnegative uniforms, most of
/// them zero, so the result looks like a ramped step function.
pub fn random_monotone<R: Rng + ?Sized>(rng: &mut R, segments: usize) -> PiecewiseLinear {
    let jump_prob = rng.gen_range(0.05..0.5);
    let scale = rng.gen_range(0.1..5.0);
    let mut acc = rng.gen_range(-2.0..2.0);
    let mut knots = vec![acc];
    for _ in 0..segments {
        if rng.gen_bool(jump_prob) {
            acc += scale * rng.gen::<f64>();
        }
        knots.push(acc);
    }
    PiecewiseLinear::new(knots)
}

/// Convex function: cumulative sums of a nondecreasing slope sequence.
pub fn random_convex<R: Rng + ?Sized>(rng: &mut R, segments: usize) -> PiecewiseLinear {
    let slopes = random_monotone(rng, segments - 1);
    let h = 1.0 / segments as f64;
    let mut acc = rng.gen_range(-2.0..2.0);
    let offset = rng.gen_range(-3.0..3.0);
    let mut knots = vec![acc];
    for s in slopes.knots() {
        acc += h * (s + offset);
        knots.push(acc);
    }
    PiecewiseLinear::new(knots)
}

pub fn random_in_class<R: Rng + ?Sized>(
    rng: &mut R,
    shape: ShapeClass,
    segments: usize,
) -> PiecewiseLinear {
    match shape {
        ShapeClass::Isotonic => random_monotone(rng, segments),
        ShapeClass::Convex => random_convex(rng, segments),
    }
}

/// Named regression functions for coverage runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    /// `f ≡ 0`
    Constant,
    /// `f(x) = x`
    Linear,
    /// `f(x) = x²`
    Square,
    /// `f(x) = (x − 1/2)²`, convex only
    Parabola,
    /// `f(x) = max(0, 2x − 1)`
    Kink,
    /// `0` on `[0, 1/3]`, then `(3x − 1)²`
    Plateau,
}

impl TestFunction {
    pub const ALL: [TestFunction; 6] = [
        TestFunction::Constant,
        TestFunction::Linear,
        TestFunction::Square,
        TestFunction::Parabola,
        TestFunction::Kink,
        TestFunction::Plateau,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestFunction::Constant => 0.0,
            TestFunction::Linear => x,
            TestFunction::Square => x * x,
            TestFunction::Parabola => (x - 0.5) * (x - 0.5),
            TestFunction::Kink => (2.0 * x - 1.0).max(0.0),
            TestFunction::Plateau => {
                let v = (3.0 * x - 1.0).max(0.0);
                v * v
            }
        }
    }

    pub fn in_class(self, shape: ShapeClass) -> bool {
        !(shape == ShapeClass::Isotonic && self == TestFunction::Parabola)
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Constant => "constant",
            TestFunction::Linear => "linear",
            TestFunction::Square => "square",
            TestFunction::Parabola => "parabola",
            TestFunction::Kink => "kink",
            TestFunction::Plateau => "plateau",
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown test function {s:?}")))
    }
}
