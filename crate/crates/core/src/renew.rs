//! Renewable (online-updating) kernel estimators.
//!
//! A [`RenewableState`] keeps, for every grid point `x`, the accumulated
//! weight `Ĵ_{k−1}(x) = Σ_j Σ_{i∈batch j} J(α̂_j(x); Y_i, X_i) K_{h_j}(X_i − x)`
//! and the current estimate `α̂_{k−1}(x)`. An update reads only the state and
//! the incoming batch; raw history is never needed.
//!
//! Two update paths are provided:
//!
//! * [`RenewableState::update_closed_form`] for mean regression (`J ≡ 1`),
//!   where the new estimate is the weighted combination
//!   `(α̂ Ĵ + Σ Y K) / (Ĵ + Σ K)`;
//! * [`RenewableState::update_newton`] for a general estimating function,
//!   solving `Ĵ (α − α̂) − Σ U(α; Y, X) K = 0` by damped Newton.

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::grid::{interpolate, EvaluationGrid, GridEstimate};
use crate::kernel::{check_bandwidth, BandwidthRule, KernelSpec, DEGENERACY_THRESHOLD};
use crate::linalg::min_leading_minor;
use crate::newton::{LocalEquation, NewtonFailure, NewtonOptions, Outcome};
use crate::scalar::Scalar;

/// Per-grid-point accumulated weights and estimates of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewableState<T> {
    grid: EvaluationGrid<T>,
    dim: usize,
    /// Row-major `dim × dim` block per grid point.
    jsum: Vec<T>,
    estimate: Vec<T>,
    defined: Vec<bool>,
    batch_count: u64,
    cumulative_n: u64,
}

/// Outcome of one Newton update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    /// Grid points whose solve failed; they were reset to undefined.
    pub failures: Vec<(usize, NewtonFailure)>,
    /// Grid points with no kernel mass from either the history or the batch.
    pub uninformed: usize,
    /// Largest iteration count over converged points.
    pub max_iterations: usize,
}

impl NewtonReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

impl<T: Scalar> RenewableState<T> {
    /// Empty state: zero weights and zero estimates (`α̂_0 ≡ 0`).
    pub fn new(grid: EvaluationGrid<T>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        let n = grid.len();
        Ok(Self {
            grid,
            dim,
            jsum: vec![T::zero(); n * dim * dim],
            estimate: vec![T::zero(); n * dim],
            defined: vec![false; n],
            batch_count: 0,
            cumulative_n: 0,
        })
    }

    /// Reassembles a state from stored parts (used when loading snapshots).
    pub fn from_parts(
        grid: EvaluationGrid<T>,
        dim: usize,
        jsum: Vec<T>,
        estimate: Vec<T>,
        defined: Vec<bool>,
        batch_count: u64,
        cumulative_n: u64,
    ) -> Result<Self> {
        let n = grid.len();
        if dim == 0 || jsum.len() != n * dim * dim || estimate.len() != n * dim || defined.len() != n {
            return Err(Error::DimensionMismatch { expected: n * dim, got: estimate.len() });
        }
        Ok(Self { grid, dim, jsum, estimate, defined, batch_count, cumulative_n })
    }

    pub fn grid(&self) -> &EvaluationGrid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn batch_count(&self) -> u64 {
        self.batch_count
    }

    pub fn cumulative_n(&self) -> u64 {
        self.cumulative_n
    }

    pub fn jsum(&self) -> &[T] {
        &self.jsum
    }

    pub fn estimates(&self) -> &[T] {
        &self.estimate
    }

    pub fn defined_mask(&self) -> &[bool] {
        &self.defined
    }

    /// Accumulated weight block at grid point `i`.
    pub fn jsum_at(&self, i: usize) -> &[T] {
        let d2 = self.dim * self.dim;
        &self.jsum[i * d2..(i + 1) * d2]
    }

    /// Estimate at grid point `i`, or `None` where undefined.
    pub fn estimate_at(&self, i: usize) -> Option<&[T]> {
        self.defined[i].then(|| &self.estimate[i * self.dim..(i + 1) * self.dim])
    }

    /// Snapshot of the grid estimates.
    pub fn to_estimate(&self) -> GridEstimate<T> {
        GridEstimate::from_parts(self.dim, self.estimate.clone(), self.defined.clone()).expect("consistent state")
    }

    /// Piecewise-linear interpolation of the grid estimates at `x`.
    pub fn evaluate(&self, x: T) -> Option<Vec<T>> {
        interpolate(&self.grid, &self.to_estimate(), x)
    }

    fn is_nondegenerate(&self, block: &[T]) -> bool {
        min_leading_minor(block, self.dim) >= T::lit(DEGENERACY_THRESHOLD)
    }

    fn advance(&mut self, batch: &Batch<T>) {
        self.batch_count += 1;
        self.cumulative_n += batch.len() as u64;
    }

    /// Bandwidth `rule` assigns to `batch` when it arrives next.
    pub fn bandwidth_for(&self, rule: &BandwidthRule<T>, batch: &Batch<T>) -> Result<T> {
        rule.bandwidth(self.cumulative_n + batch.len() as u64)
    }

    /// Closed-form update for mean regression (`U = y − α`, `J ≡ 1`).
    pub fn update_closed_form(&mut self, batch: &Batch<T>, h: T, kernel: &KernelSpec) -> Result<()> {
        check_bandwidth(h)?;
        if self.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim });
        }
        let threshold = T::lit(DEGENERACY_THRESHOLD);
        for (i, &x) in self.grid.points().iter().enumerate() {
            let (mut s0, mut s1) = (T::zero(), T::zero());
            for (&xi, &yi) in batch.xs().iter().zip(batch.ys()) {
                let w = kernel.weight(xi - x, h);
                s0 = s0 + w;
                s1 = s1 + w * yi;
            }
            let prior = self.jsum[i];
            let total = prior + s0;
            if total > T::zero() {
                self.estimate[i] = (self.estimate[i] * prior + s1) / total;
                self.jsum[i] = total;
            }
            self.defined[i] = self.jsum[i] >= threshold;
        }
        self.advance(batch);
        Ok(())
    }

    /// Newton update for a general estimating function.
    ///
    /// Points already defined start from their previous estimate; others
    /// start from [`EstimatingFunction::initial_estimate`]. After convergence
    /// the weight grows by `Σ J(α̂_k; Y_i, X_i) K_h(X_i − x)` evaluated at the
    /// converged estimate. Points whose solve fails are reset to undefined
    /// and listed in the returned report.
    pub fn update_newton<F>(
        &mut self,
        batch: &Batch<T>,
        h: T,
        kernel: &KernelSpec,
        f: &F,
        opts: &NewtonOptions<T>,
    ) -> Result<NewtonReport>
    where
        F: EstimatingFunction<T> + ?Sized,
    {
        check_bandwidth(h)?;
        if f.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: f.dim() });
        }
        let d = self.dim;
        let d2 = d * d;
        let mut report = NewtonReport::default();
        let mut weights = vec![T::zero(); batch.len()];
        let mut u_sum = vec![T::zero(); d];
        let mut j_sum = vec![T::zero(); d2];

        for i in 0..self.grid.len() {
            let x = self.grid.points()[i];
            for (w, &xi) in weights.iter_mut().zip(batch.xs()) {
                *w = kernel.weight(xi - x, h);
            }
            let prior_jsum = self.jsum[i * d2..(i + 1) * d2].to_vec();
            let prior_est = self.estimate[i * d..(i + 1) * d].to_vec();
            let start = if self.defined[i] { prior_est.clone() } else { f.initial_estimate(x, h, batch) };
            let eq = LocalEquation {
                f,
                prior_jsum: &prior_jsum,
                prior_estimate: &prior_est,
                ys: batch.ys(),
                xs: batch.xs(),
                weights: &weights,
            };
            match eq.solve(start, opts)? {
                Outcome::Converged { alpha, iterations, .. } => {
                    f.weighted_sums(&alpha, batch.ys(), batch.xs(), &weights, &mut u_sum, &mut j_sum)?;
                    for (dst, (&p, &add)) in self.jsum[i * d2..(i + 1) * d2].iter_mut().zip(prior_jsum.iter().zip(&j_sum)) {
                        *dst = p + add;
                    }
                    self.estimate[i * d..(i + 1) * d].copy_from_slice(&alpha);
                    let block = self.jsum[i * d2..(i + 1) * d2].to_vec();
                    self.defined[i] = self.is_nondegenerate(&block);
                    report.max_iterations = report.max_iterations.max(iterations);
                }
                Outcome::Failed(NewtonFailure::SingularJacobian)
                    if !self.defined[i] && prior_jsum.iter().all(|&v| v == T::zero()) =>
                {
                    report.uninformed += 1;
                }
                Outcome::Failed(reason) => {
                    report.failures.push((i, reason));
                    self.jsum[i * d2..(i + 1) * d2].iter_mut().for_each(|v| *v = T::zero());
                    self.estimate[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = T::zero());
                    self.defined[i] = false;
                }
            }
        }
        self.advance(batch);
        Ok(report)
    }
}

/// Residual of the renewable estimating equation at `alpha` for one grid
/// point, given that point's previous weight and estimate.
pub fn renewable_residual<T, F>(
    prior_jsum: &[T],
    prior_estimate: &[T],
    alpha: &[T],
    batch: &Batch<T>,
    x: T,
    h: T,
    kernel: &KernelSpec,
    f: &F,
) -> Result<Vec<T>>
where
    T: Scalar,
    F: EstimatingFunction<T> + ?Sized,
{
    let weights: Vec<T> = batch.xs().iter().map(|&xi| kernel.weight(xi - x, h)).collect();
    let eq = LocalEquation { f, prior_jsum, prior_estimate, ys: batch.ys(), xs: batch.xs(), weights: &weights };
    let d = alpha.len();
    let mut g = vec![T::zero(); d];
    let mut m = vec![T::zero(); d * d];
    eq.evaluate(alpha, &mut g, &mut m)?;
    Ok(g)
}
