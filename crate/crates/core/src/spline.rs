//! Renewable cubic regression splines on the truncated power basis
//! `B(x) = (1, x, x², x³, (x − t_1)₊³, …, (x − t_K)₊³)`.
//!
//! The stream is summarised by the normal equations `B = Σ B(X_i)B(X_i)ᵀ` and
//! `V = Σ B(X_i)Y_i`; solving them after any number of batches gives exactly
//! the pooled least-squares fit. Internally the covariate is mapped affinely
//! so that the support becomes `[−1, 1]` before the basis is formed, and
//! coefficients are mapped back to the raw basis on output.

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::grid::{EvaluationGrid, GridEstimate};
use crate::linalg::{cholesky, cholesky_solve, symmetric_min_eigenvalue};
use crate::scalar::Scalar;

/// Relative eigenvalue floor below which the normal equations are singular.
const SINGULAR_RELATIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T> {
    knots: Vec<T>,
    support: (T, T),
    scale: T,
    shift: T,
    scaled_knots: Vec<T>,
}

impl<T: Scalar> SplineBasis<T> {
    pub fn new(knots: Vec<T>, support: (T, T)) -> Result<Self> {
        let (a, b) = support;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidBasis("support must be a finite interval with a < b".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidBasis("knots must be strictly increasing".into()));
        }
        if knots.iter().any(|&t| !(t > a && t < b)) {
            return Err(Error::InvalidBasis("knots must lie strictly inside the support".into()));
        }
        let two = T::lit(2.0);
        let scale = two / (b - a);
        let shift = -(a + b) / (b - a);
        let scaled_knots = knots.iter().map(|&t| scale * t + shift).collect();
        Ok(Self { knots, support, scale, shift, scaled_knots })
    }

    /// `count` equidistant interior knots over `range`.
    pub fn equidistant(count: usize, range: (T, T)) -> Result<Self> {
        let (lo, hi) = range;
        let step = (hi - lo) / T::from_count(count + 1);
        let knots = (1..=count).map(|m| lo + step * T::from_count(m)).collect();
        Self::new(knots, range)
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn support(&self) -> (T, T) {
        self.support
    }

    pub fn dim(&self) -> usize {
        4 + self.knots.len()
    }

    /// The raw truncated-power basis vector at `x`.
    pub fn eval(&self, x: T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend([T::one(), x, x * x, x * x * x]);
        out.extend(self.knots.iter().map(|&t| {
            let u = (x - t).max(T::zero());
            u * u * u
        }));
        out
    }

    /// Basis in the internal `[−1, 1]` coordinates.
    pub(crate) fn eval_scaled_into(&self, x: T, out: &mut [T]) {
        let z = self.scale * x + self.shift;
        out[0] = T::one();
        out[1] = z;
        out[2] = z * z;
        out[3] = z * z * z;
        for (o, &t) in out[4..].iter_mut().zip(&self.scaled_knots) {
            let u = (z - t).max(T::zero());
            *o = u * u * u;
        }
    }

    /// Maps coefficients of the internal basis onto the raw basis.
    fn to_raw(&self, scaled: &[T]) -> Vec<T> {
        let (s, c) = (self.scale, self.shift);
        // Σ g_p (s x + c)^p expanded in powers of x.
        let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
        let mut raw = vec![T::zero(); self.dim()];
        for p in 0..4 {
            for q in 0..=p {
                let term = T::lit(binom[p][q]) * s.powi(q as i32) * c.powi((p - q) as i32);
                raw[q] = raw[q] + scaled[p] * term;
            }
        }
        let s3 = s * s * s;
        for m in 4..self.dim() {
            raw[m] = scaled[m] * s3;
        }
        raw
    }
}

/// Free-function form of [`SplineBasis::eval`].
pub fn basis_eval<T: Scalar>(basis: &SplineBasis<T>, x: T) -> Vec<T> {
    basis.eval(x)
}

/// Accumulated normal equations of one spline stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineState<T> {
    basis: SplineBasis<T>,
    bmat: Vec<T>,
    vvec: Vec<T>,
    batch_count: u64,
    cumulative_n: u64,
}

impl<T: Scalar> SplineState<T> {
    pub fn new(basis: SplineBasis<T>) -> Self {
        let p = basis.dim();
        Self { basis, bmat: vec![T::zero(); p * p], vvec: vec![T::zero(); p], batch_count: 0, cumulative_n: 0 }
    }

    /// Reassembles a state from stored parts (used when loading snapshots).
    pub fn from_parts(basis: SplineBasis<T>, bmat: Vec<T>, vvec: Vec<T>, batch_count: u64, cumulative_n: u64) -> Result<Self> {
        let p = basis.dim();
        if bmat.len() != p * p || vvec.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: vvec.len() });
        }
        Ok(Self { basis, bmat, vvec, batch_count, cumulative_n })
    }

    pub fn basis(&self) -> &SplineBasis<T> {
        &self.basis
    }

    /// Row-major `B_k`, in the internal coordinates.
    pub fn bmat(&self) -> &[T] {
        &self.bmat
    }

    pub fn vvec(&self) -> &[T] {
        &self.vvec
    }

    pub fn batch_count(&self) -> u64 {
        self.batch_count
    }

    pub fn cumulative_n(&self) -> u64 {
        self.cumulative_n
    }

    /// Adds the batch's outer products and cross products. Does not solve.
    pub fn update(&mut self, batch: &Batch<T>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidBatch("batch is empty".into()));
        }
        let p = self.basis.dim();
        let mut b = vec![T::zero(); p];
        for (&x, &y) in batch.xs().iter().zip(batch.ys()) {
            self.basis.eval_scaled_into(x, &mut b);
            for r in 0..p {
                let br = b[r];
                for c in 0..p {
                    self.bmat[r * p + c] = self.bmat[r * p + c] + br * b[c];
                }
                self.vvec[r] = self.vvec[r] + br * y;
            }
        }
        self.batch_count += 1;
        self.cumulative_n += batch.len() as u64;
        Ok(())
    }

    /// Solves `(B + ridge·I) γ = V` by Cholesky factorisation.
    pub fn solve(&self, ridge: T) -> Result<SplineFit<T>> {
        if !(ridge >= T::zero()) {
            return Err(Error::Domain(format!("ridge must be non-negative, got {ridge}")));
        }
        let p = self.basis.dim();
        let mut a = self.bmat.clone();
        for i in 0..p {
            a[i * p + i] = a[i * p + i] + ridge;
        }
        let trace = (0..p).fold(T::zero(), |acc, i| acc + a[i * p + i]);
        let min_eig = symmetric_min_eigenvalue(&a, p);
        let singular = || Error::SingularSystem { min_eigenvalue: min_eig.to_f64().unwrap_or(f64::NAN) };
        if !(min_eig > T::lit(SINGULAR_RELATIVE_FLOOR) * trace / T::from_count(p)) {
            return Err(singular());
        }
        let l = cholesky(&a, p).ok_or_else(singular)?;
        let coef = cholesky_solve(&l, &self.vvec, p);
        Ok(SplineFit { basis: self.basis.clone(), scaled: coef, ridge })
    }
}

/// Free-function form of [`SplineState::update`].
pub fn update_spline<T: Scalar>(state: &mut SplineState<T>, batch: &Batch<T>) -> Result<()> {
    state.update(batch)
}

/// Free-function form of [`SplineState::solve`].
pub fn solve_spline<T: Scalar>(state: &SplineState<T>, ridge: T) -> Result<SplineFit<T>> {
    state.solve(ridge)
}

/// A solved spline.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit<T> {
    basis: SplineBasis<T>,
    scaled: Vec<T>,
    ridge: T,
}

impl<T: Scalar> SplineFit<T> {
    /// Coefficients `γ̂` of the raw basis, so that `r̂(x) = γ̂ᵀB(x)`.
    pub fn coefficients(&self) -> Vec<T> {
        self.basis.to_raw(&self.scaled)
    }

    /// Coefficients of the internal (rescaled) basis.
    pub fn scaled_coefficients(&self) -> &[T] {
        &self.scaled
    }

    pub fn basis(&self) -> &SplineBasis<T> {
        &self.basis
    }

    /// Ridge used in the solve; non-zero values are a numerical safeguard.
    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn predict(&self, x: T) -> T {
        let mut b = vec![T::zero(); self.basis.dim()];
        self.basis.eval_scaled_into(x, &mut b);
        b.iter().zip(&self.scaled).fold(T::zero(), |acc, (&bi, &gi)| acc + bi * gi)
    }

    pub fn predict_grid(&self, grid: &EvaluationGrid<T>) -> GridEstimate<T> {
        let values: Vec<T> = grid.points().iter().map(|&x| self.predict(x)).collect();
        let defined = vec![true; values.len()];
        GridEstimate::from_parts(1, values, defined).expect("one value per point")
    }
}

/// Leave-one-out least-squares CV score for `count` equidistant knots over
/// `range`, or `None` if the fit is singular or every observation has
/// leverage one.
pub fn knot_cv_score<T: Scalar>(data: &Batch<T>, count: usize, range: (T, T)) -> Result<Option<T>> {
    let basis = SplineBasis::equidistant(count, range)?;
    let p = basis.dim();
    if data.len() <= p {
        return Ok(None);
    }
    let mut state = SplineState::new(basis);
    state.update(data)?;
    let fit = match state.solve(T::zero()) {
        Ok(fit) => fit,
        Err(Error::SingularSystem { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let Some(l) = cholesky(state.bmat(), p) else { return Ok(None) };
    let mut b = vec![T::zero(); p];
    let mut z = vec![T::zero(); p];
    let (mut sse, mut used) = (T::zero(), 0usize);
    for (&x, &y) in data.xs().iter().zip(data.ys()) {
        state.basis().eval_scaled_into(x, &mut b);
        let resid = y - b.iter().zip(fit.scaled_coefficients()).fold(T::zero(), |a, (&bi, &gi)| a + bi * gi);
        // leverage h = |L⁻¹ b|²
        for i in 0..p {
            let mut s = b[i];
            for k in 0..i {
                s = s - l[i * p + k] * z[k];
            }
            z[i] = s / l[i * p + i];
        }
        let lev = z.iter().fold(T::zero(), |a, &v| a + v * v);
        let denom = T::one() - lev;
        if denom <= T::lit(1e-10) {
            continue;
        }
        let r = resid / denom;
        sse = sse + r * r;
        used += 1;
    }
    Ok((used > 0).then(|| sse / T::from_count(used)))
}

/// Knot count in `candidates` minimising [`knot_cv_score`]; ties go to fewer knots.
pub fn select_knot_count<T: Scalar>(data: &Batch<T>, range: (T, T), candidates: &[usize]) -> Result<usize> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, T)> = None;
    for count in sorted {
        if let Some(score) = knot_cv_score(data, count, range)?.filter(|s| s.is_finite()) {
            if best.map_or(true, |(_, b)| score < b) {
                best = Some((count, score));
            }
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::InsufficientData("no knot count produced a valid cross-validation score".into()))
}
