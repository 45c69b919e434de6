//! Integrated squared error, rate estimation and the experiment runner.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{Design, EstimatorId, ExperimentConfig};
pub use report::{MiseReport, MiseRow};
pub use runner::{run_experiment, RunOptions};

use crate::error::{Error, Result};
use crate::grid::{EvaluationGrid, GridEstimate};
use crate::scalar::Scalar;

/// Five-point Gauss-Legendre nodes and weights on `[−1, 1]`.
const GL_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] =
    [0.236_926_885_056_189_1, 0.478_628_670_499_366_5, 0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];

/// One replication's integrated squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ise<T> {
    /// `∫ (α̂ − α⁰)²` over the covered part of the interior, divided by its length.
    pub value: T,
    /// Covered length as a fraction of the interior span of the grid.
    pub coverage: T,
}

/// Integrated squared error of one component of `estimate`.
///
/// The estimate is the piecewise-linear interpolant of its defined interior
/// grid values. Each panel between two adjacent defined interior points is
/// integrated against the exact `truth` with five-point Gauss-Legendre, and
/// the total is divided by the covered length. With a single defined
/// interior point the squared error at that point is returned with zero
/// coverage.
pub fn mise<T: Scalar>(
    estimate: &GridEstimate<T>,
    truth: impl Fn(T) -> Vec<T>,
    grid: &EvaluationGrid<T>,
    component: usize,
) -> Result<Ise<T>> {
    if component >= estimate.dim() {
        return Err(Error::DimensionMismatch { expected: estimate.dim(), got: component + 1 });
    }
    if estimate.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: estimate.len() });
    }
    let points = grid.points();
    let interior = grid.interior_mask();
    let usable: Vec<usize> = (0..grid.len()).filter(|&i| interior[i] && estimate.get(i).is_some()).collect();
    let Some(&first) = usable.first() else { return Err(Error::EmptyEstimate) };
    let value_at = |i: usize| estimate.raw(i)[component];
    let sq_err = |x: T, v: T| {
        let d = v - truth(x)[component];
        d * d
    };

    let (mut total, mut covered) = (T::zero(), T::zero());
    for w in usable.windows(2) {
        let (i, j) = (w[0], w[1]);
        if j != i + 1 {
            continue;
        }
        let (a, b) = (points[i], points[j]);
        let (va, vb) = (value_at(i), value_at(j));
        let half = (b - a) * T::lit(0.5);
        let mid = (a + b) * T::lit(0.5);
        let mut panel = T::zero();
        for (&node, &weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            let t = T::lit(0.5 * (node + 1.0));
            let x = mid + half * T::lit(node);
            panel = panel + T::lit(weight) * sq_err(x, va + (vb - va) * t);
        }
        total = total + panel * half;
        covered = covered + (b - a);
    }
    if covered == T::zero() {
        return Ok(Ise { value: sq_err(points[first], value_at(first)), coverage: T::zero() });
    }
    let first_interior = interior.iter().position(|&m| m).expect("non-empty");
    let last_interior = interior.iter().rposition(|&m| m).expect("non-empty");
    let span = points[last_interior] - points[first_interior];
    Ok(Ise { value: total / covered, coverage: (covered / span).min(T::one()) })
}

/// Least-squares slope of `ln mise` against `ln n`.
///
/// Needs at least three points whose `n` spans two decades.
pub fn rate_check(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("rate check needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(n, m)| !(n > 0.0 && m > 0.0 && n.is_finite() && m.is_finite())) {
        return Err(Error::Domain("rate check needs positive finite n and MISE values".into()));
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &(n, _)| (lo.min(n), hi.max(n)));
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!("n values span {lo}..{hi}, less than two decades")));
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
