//! Reference estimators: full-data and batch-average Nadaraya-Watson,
//! kernel-weighted maximum likelihood and cubic splines.

use crate::batch::{Batch, PooledDataset};
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::grid::{EvaluationGrid, GridEstimate};
use crate::kernel::{check_bandwidth, KernelSpec, DEGENERACY_THRESHOLD};
use crate::newton::NewtonOptions;
use crate::renew::{NewtonReport, RenewableState};
use crate::scalar::Scalar;
use crate::spline::{SplineBasis, SplineFit, SplineState};

/// Mean of per-batch estimates, with the number of batches that were
/// defined at each grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAverage<T> {
    pub estimate: GridEstimate<T>,
    pub contributions: Vec<usize>,
    /// Batches left out entirely, e.g. singular spline systems.
    pub skipped_batches: Vec<usize>,
}

impl<T: Scalar> BatchAverage<T> {
    /// Grid points where fewer than `batches` estimates were averaged.
    pub fn adjusted_points(&self, batches: usize) -> usize {
        self.contributions.iter().filter(|&&c| c > 0 && c < batches).count()
    }
}

/// Averages estimates pointwise over the batches defined at each point.
pub fn average_estimates<T: Scalar>(estimates: &[GridEstimate<T>]) -> Result<BatchAverage<T>> {
    let first = estimates.first().ok_or_else(|| Error::InsufficientData("nothing to average".into()))?;
    let (npoints, dim) = (first.len(), first.dim());
    if let Some(e) = estimates.iter().find(|e| e.len() != npoints || e.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: npoints * dim, got: e.len() * e.dim() });
    }
    let mut out = GridEstimate::undefined(npoints, dim);
    let mut contributions = vec![0usize; npoints];
    let mut acc = vec![T::zero(); dim];
    for i in 0..npoints {
        acc.iter_mut().for_each(|a| *a = T::zero());
        for e in estimates {
            if let Some(v) = e.get(i) {
                for (a, &vi) in acc.iter_mut().zip(v) {
                    *a = *a + vi;
                }
                contributions[i] += 1;
            }
        }
        if contributions[i] > 0 {
            let k = T::from_count(contributions[i]);
            acc.iter_mut().for_each(|a| *a = *a / k);
            out.set(i, &acc);
        }
    }
    Ok(BatchAverage { estimate: out, contributions, skipped_batches: Vec::new() })
}

fn nw_on<T: Scalar>(xs: &[T], ys: &[T], h: T, kernel: &KernelSpec, grid: &EvaluationGrid<T>) -> GridEstimate<T> {
    let threshold = T::lit(DEGENERACY_THRESHOLD);
    let mut out = GridEstimate::undefined(grid.len(), 1);
    for (i, &x) in grid.points().iter().enumerate() {
        let (mut s0, mut s1) = (T::zero(), T::zero());
        for (&xi, &yi) in xs.iter().zip(ys) {
            let w = kernel.weight(xi - x, h);
            s0 = s0 + w;
            s1 = s1 + w * yi;
        }
        if s0 >= threshold {
            out.set(i, &[s1 / s0]);
        }
    }
    out
}

/// Full-data Nadaraya-Watson estimate `Σ Y K_h / Σ K_h` on the grid.
pub fn nw_full<T: Scalar>(
    data: &PooledDataset<T>,
    h: T,
    kernel: &KernelSpec,
    grid: &EvaluationGrid<T>,
) -> Result<GridEstimate<T>> {
    check_bandwidth(h)?;
    if data.n() == 0 {
        return Err(Error::InvalidBatch("pooled dataset is empty".into()));
    }
    Ok(nw_on(&data.xs, &data.ys, h, kernel, grid))
}

fn check_lengths(batches: usize, bandwidths: usize) -> Result<()> {
    if batches == 0 {
        return Err(Error::InvalidBatch("no batches".into()));
    }
    if batches != bandwidths {
        return Err(Error::DimensionMismatch { expected: batches, got: bandwidths });
    }
    Ok(())
}

/// Pointwise mean of each batch's own N-W estimate.
pub fn nw_batch_average<T: Scalar>(
    batches: &[Batch<T>],
    per_batch_h: &[T],
    kernel: &KernelSpec,
    grid: &EvaluationGrid<T>,
) -> Result<BatchAverage<T>> {
    check_lengths(batches.len(), per_batch_h.len())?;
    let estimates = batches
        .iter()
        .zip(per_batch_h)
        .map(|(b, &h)| {
            check_bandwidth(h)?;
            Ok(nw_on(b.xs(), b.ys(), h, kernel, grid))
        })
        .collect::<Result<Vec<_>>>()?;
    average_estimates(&estimates)
}

/// Root of `Σ U(α; Y_i, X_i) K_h(X_i − x) = 0` at every grid point.
///
/// Uses the same damped Newton solver and tolerances as the renewable
/// update, started from the family's warm start.
pub fn nml_full<T, F>(
    data: &PooledDataset<T>,
    h: T,
    kernel: &KernelSpec,
    f: &F,
    grid: &EvaluationGrid<T>,
    opts: &NewtonOptions<T>,
) -> Result<(GridEstimate<T>, NewtonReport)>
where
    T: Scalar,
    F: EstimatingFunction<T> + ?Sized,
{
    nml_batch(&data.as_batch()?, h, kernel, f, grid, opts)
}

fn nml_batch<T, F>(
    batch: &Batch<T>,
    h: T,
    kernel: &KernelSpec,
    f: &F,
    grid: &EvaluationGrid<T>,
    opts: &NewtonOptions<T>,
) -> Result<(GridEstimate<T>, NewtonReport)>
where
    T: Scalar,
    F: EstimatingFunction<T> + ?Sized,
{
    let mut state = RenewableState::new(grid.clone(), f.dim())?;
    let report = state.update_newton(batch, h, kernel, f, opts)?;
    Ok((state.to_estimate(), report))
}

/// Pointwise mean of per-batch kernel MLEs. Reports are concatenated in
/// batch order.
pub fn nml_batch_average<T, F>(
    batches: &[Batch<T>],
    per_batch_h: &[T],
    kernel: &KernelSpec,
    f: &F,
    grid: &EvaluationGrid<T>,
    opts: &NewtonOptions<T>,
) -> Result<(BatchAverage<T>, Vec<NewtonReport>)>
where
    T: Scalar,
    F: EstimatingFunction<T> + ?Sized,
{
    check_lengths(batches.len(), per_batch_h.len())?;
    let mut estimates = Vec::with_capacity(batches.len());
    let mut reports = Vec::with_capacity(batches.len());
    for (b, &h) in batches.iter().zip(per_batch_h) {
        let (e, r) = nml_batch(b, h, kernel, f, grid, opts)?;
        estimates.push(e);
        reports.push(r);
    }
    Ok((average_estimates(&estimates)?, reports))
}

/// Pooled least-squares cubic spline on `basis`.
pub fn spline_full<T: Scalar>(data: &PooledDataset<T>, basis: &SplineBasis<T>) -> Result<SplineFit<T>> {
    let mut state = SplineState::new(basis.clone());
    state.update(&data.as_batch()?)?;
    state.solve(T::zero())
}

/// Mean of per-batch spline fits evaluated on the grid. Batches whose own
/// system is singular are skipped and listed in the result.
pub fn spline_batch_average<T: Scalar>(
    batches: &[Batch<T>],
    basis: &SplineBasis<T>,
    grid: &EvaluationGrid<T>,
) -> Result<BatchAverage<T>> {
    if batches.is_empty() {
        return Err(Error::InvalidBatch("no batches".into()));
    }
    let mut estimates = Vec::with_capacity(batches.len());
    let mut skipped = Vec::new();
    for (j, b) in batches.iter().enumerate() {
        let mut state = SplineState::new(basis.clone());
        state.update(b)?;
        match state.solve(T::zero()) {
            Ok(fit) => estimates.push(fit.predict_grid(grid)),
            Err(Error::SingularSystem { .. }) => skipped.push(j),
            Err(e) => return Err(e),
        }
    }
    if estimates.is_empty() {
        return Ok(BatchAverage {
            estimate: GridEstimate::undefined(grid.len(), 1),
            contributions: vec![0; grid.len()],
            skipped_batches: skipped,
        });
    }
    let mut avg = average_estimates(&estimates)?;
    avg.skipped_batches = skipped;
    Ok(avg)
}
