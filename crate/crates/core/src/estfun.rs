//! Estimating functions `U(α; y, x)` and their curvature `J = −∂U/∂α`.
//!
//! An estimating function is unbiased at the true curve:
//! `E[U(α⁰(x); Y, x) | X = x] = 0`. Its negated Jacobian `J` serves both as
//! the Newton curvature and as the weight accumulated by the renewable
//! estimator. Matrices are row-major `dim × dim` slices.

use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{digamma_unchecked, trigamma_unchecked};

pub use crate::special::{digamma, trigamma};

/// An estimating function of dimension `dim`.
pub trait EstimatingFunction<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// Writes `U(α; y, x)` into `out` (length `dim`).
    fn u(&self, alpha: &[T], y: T, x: T, out: &mut [T]) -> Result<()>;

    /// Writes `J(α; y, x) = −∂U/∂α` into `out` (length `dim²`).
    ///
    /// The default uses central differences with step `1e-6 · (1 + |α_j|)`.
    fn j(&self, alpha: &[T], y: T, x: T, out: &mut [T]) -> Result<()> {
        finite_difference_j(self, alpha, y, x, out)
    }

    /// Whether `α` lies in the parameter domain.
    fn in_domain(&self, alpha: &[T]) -> bool {
        alpha.iter().all(|a| a.is_finite())
    }

    /// Starting point for the first Newton solve at `x` with bandwidth `h`.
    ///
    /// Defaults to the zero vector.
    fn initial_estimate(&self, _x: T, _h: T, _data: &Batch<T>) -> Vec<T> {
        vec![T::zero(); self.dim()]
    }

    /// Weighted sums `Σ w_i U(α; y_i, x_i)` and `Σ w_i J(α; y_i, x_i)`.
    ///
    /// Implementations may override this with an algebraically equal
    /// shortcut; the default loops over observations.
    fn weighted_sums(&self, alpha: &[T], ys: &[T], xs: &[T], weights: &[T], u_sum: &mut [T], j_sum: &mut [T]) -> Result<()> {
        let d = self.dim();
        let mut u = vec![T::zero(); d];
        let mut j = vec![T::zero(); d * d];
        u_sum.iter_mut().for_each(|v| *v = T::zero());
        j_sum.iter_mut().for_each(|v| *v = T::zero());
        for ((&y, &x), &w) in ys.iter().zip(xs).zip(weights) {
            if w == T::zero() {
                continue;
            }
            self.u(alpha, y, x, &mut u)?;
            self.j(alpha, y, x, &mut j)?;
            for (s, &v) in u_sum.iter_mut().zip(&u) {
                *s = *s + w * v;
            }
            for (s, &v) in j_sum.iter_mut().zip(&j) {
                *s = *s + w * v;
            }
        }
        Ok(())
    }
}

fn finite_difference_j<T: Scalar, F: EstimatingFunction<T> + ?Sized>(
    f: &F,
    alpha: &[T],
    y: T,
    x: T,
    out: &mut [T],
) -> Result<()> {
    let d = f.dim();
    let mut plus = vec![T::zero(); d];
    let mut minus = vec![T::zero(); d];
    let mut probe = alpha.to_vec();
    for col in 0..d {
        let step = T::lit(1e-6) * (T::one() + alpha[col].abs());
        probe[col] = alpha[col] + step;
        f.u(&probe, y, x, &mut plus)?;
        probe[col] = alpha[col] - step;
        f.u(&probe, y, x, &mut minus)?;
        probe[col] = alpha[col];
        for row in 0..d {
            out[row * d + col] = -(plus[row] - minus[row]) / (step + step);
        }
    }
    Ok(())
}

fn check_dim<T>(alpha: &[T], dim: usize) -> Result<()> {
    if alpha.len() == dim {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: dim, got: alpha.len() })
    }
}

/// Evaluates `U(α; y, x)`.
pub fn eval_u<T: Scalar, F: EstimatingFunction<T> + ?Sized>(f: &F, alpha: &[T], y: T, x: T) -> Result<Vec<T>> {
    check_dim(alpha, f.dim())?;
    let mut out = vec![T::zero(); f.dim()];
    f.u(alpha, y, x, &mut out)?;
    Ok(out)
}

/// Evaluates `J(α; y, x)` as a row-major `dim × dim` matrix.
pub fn eval_j<T: Scalar, F: EstimatingFunction<T> + ?Sized>(f: &F, alpha: &[T], y: T, x: T) -> Result<Vec<T>> {
    check_dim(alpha, f.dim())?;
    let mut out = vec![T::zero(); f.dim() * f.dim()];
    f.j(alpha, y, x, &mut out)?;
    Ok(out)
}

/// The estimating functions used by the simulation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinFamily {
    /// `U = y − α`, `J = 1`.
    MeanRegression,
    /// `α = (r, σ²)`, `U = (y − r, (y − r)² − σ²)`, `J = [[1, 0], [2(y − r), 1]]`.
    MeanVariance,
    /// Shape score of `Gamma(a, scale 1)`: `U = ln y − ψ(a)`, `J = ψ′(a)`.
    GammaShapeScore,
}

impl BuiltinFamily {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinFamily::MeanRegression => "mean",
            BuiltinFamily::MeanVariance => "mean-variance",
            BuiltinFamily::GammaShapeScore => "gamma-shape",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Self::MeanRegression),
            "mean-variance" | "mean-var" => Some(Self::MeanVariance),
            "gamma-shape" | "gamma" => Some(Self::GammaShapeScore),
            _ => None,
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            BuiltinFamily::MeanVariance => 2,
            _ => 1,
        }
    }

    fn check_gamma<T: Scalar>(alpha: &[T], y: T) -> Result<()> {
        if !(alpha[0] > T::zero() && alpha[0].is_finite()) {
            return Err(Error::Domain(format!("gamma shape must be positive, got {}", alpha[0])));
        }
        if !(y > T::zero()) {
            return Err(Error::Domain(format!("gamma response must be positive, got {y}")));
        }
        Ok(())
    }
}

impl<T: Scalar> EstimatingFunction<T> for BuiltinFamily {
    fn dim(&self) -> usize {
        self.dimension()
    }

    fn u(&self, alpha: &[T], y: T, _x: T, out: &mut [T]) -> Result<()> {
        check_dim(alpha, self.dimension())?;
        match self {
            BuiltinFamily::MeanRegression => out[0] = y - alpha[0],
            BuiltinFamily::MeanVariance => {
                let r = y - alpha[0];
                out[0] = r;
                out[1] = r * r - alpha[1];
            }
            BuiltinFamily::GammaShapeScore => {
                Self::check_gamma(alpha, y)?;
                out[0] = y.ln() - digamma_unchecked(alpha[0]);
            }
        }
        Ok(())
    }

    fn j(&self, alpha: &[T], y: T, _x: T, out: &mut [T]) -> Result<()> {
        check_dim(alpha, self.dimension())?;
        match self {
            BuiltinFamily::MeanRegression => out[0] = T::one(),
            BuiltinFamily::MeanVariance => {
                out[0] = T::one();
                out[1] = T::zero();
                out[2] = T::lit(2.0) * (y - alpha[0]);
                out[3] = T::one();
            }
            BuiltinFamily::GammaShapeScore => {
                Self::check_gamma(alpha, y)?;
                out[0] = trigamma_unchecked(alpha[0]);
            }
        }
        Ok(())
    }

    fn in_domain(&self, alpha: &[T]) -> bool {
        let finite = alpha.iter().all(|a| a.is_finite());
        match self {
            BuiltinFamily::GammaShapeScore => finite && alpha[0] > T::zero(),
            _ => finite,
        }
    }

    /// Gamma: method-of-moments shape from observations within `3h` of `x`
    /// (falls back to 1). Other families start at zero.
    fn initial_estimate(&self, x: T, h: T, data: &Batch<T>) -> Vec<T> {
        match self {
            BuiltinFamily::GammaShapeScore => {
                let reach = T::lit(3.0) * h;
                let near: Vec<T> =
                    data.xs().iter().zip(data.ys()).filter(|(&xi, _)| (xi - x).abs() <= reach).map(|(_, &y)| y).collect();
                vec![moment_shape(&near).unwrap_or_else(T::one)]
            }
            _ => vec![T::zero(); self.dimension()],
        }
    }

    fn weighted_sums(&self, alpha: &[T], ys: &[T], _xs: &[T], weights: &[T], u_sum: &mut [T], j_sum: &mut [T]) -> Result<()> {
        check_dim(alpha, self.dimension())?;
        match self {
            BuiltinFamily::MeanRegression => {
                let (mut su, mut sw) = (T::zero(), T::zero());
                for (&y, &w) in ys.iter().zip(weights) {
                    su = su + w * (y - alpha[0]);
                    sw = sw + w;
                }
                u_sum[0] = su;
                j_sum[0] = sw;
            }
            BuiltinFamily::MeanVariance => {
                let (mut s0, mut s1, mut sw, mut sj) = (T::zero(), T::zero(), T::zero(), T::zero());
                for (&y, &w) in ys.iter().zip(weights) {
                    let r = y - alpha[0];
                    s0 = s0 + w * r;
                    s1 = s1 + w * (r * r - alpha[1]);
                    sw = sw + w;
                    sj = sj + w * T::lit(2.0) * r;
                }
                u_sum[0] = s0;
                u_sum[1] = s1;
                j_sum[0] = sw;
                j_sum[1] = T::zero();
                j_sum[2] = sj;
                j_sum[3] = sw;
            }
            BuiltinFamily::GammaShapeScore => {
                if !self.in_domain(alpha) {
                    return Err(Error::Domain(format!("gamma shape must be positive, got {}", alpha[0])));
                }
                let (mut slog, mut sw) = (T::zero(), T::zero());
                for (&y, &w) in ys.iter().zip(weights) {
                    if w == T::zero() {
                        continue;
                    }
                    if !(y > T::zero()) {
                        return Err(Error::Domain(format!("gamma response must be positive, got {y}")));
                    }
                    slog = slog + w * y.ln();
                    sw = sw + w;
                }
                u_sum[0] = slog - sw * digamma_unchecked(alpha[0]);
                j_sum[0] = sw * trigamma_unchecked(alpha[0]);
            }
        }
        Ok(())
    }
}

/// `mean² / variance` of positive observations, if well defined.
fn moment_shape<T: Scalar>(ys: &[T]) -> Option<T> {
    if ys.len() < 2 {
        return None;
    }
    let n = T::from_count(ys.len());
    let mean = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let var = ys.iter().fold(T::zero(), |a, &y| a + (y - mean) * (y - mean)) / (n - T::one());
    let shape = mean * mean / var;
    (mean > T::zero() && var > T::zero() && shape.is_finite() && shape > T::zero()).then_some(shape)
}

/// A user-supplied estimating function built from closures.
///
/// When no `J` closure is given, `J` is approximated by central differences.
pub struct FnEstimatingFunction<U, J = fn(&[f64], f64, f64, &mut [f64])> {
    dim: usize,
    u: U,
    j: Option<J>,
}

impl<U> FnEstimatingFunction<U> {
    pub fn new(dim: usize, u: U) -> Self {
        Self { dim, u, j: None }
    }
}

impl<U, J> FnEstimatingFunction<U, J> {
    pub fn with_jacobian(dim: usize, u: U, j: J) -> Self {
        Self { dim, u, j: Some(j) }
    }
}

impl<T, U, J> EstimatingFunction<T> for FnEstimatingFunction<U, J>
where
    T: Scalar,
    U: Fn(&[T], T, T, &mut [T]) + Sync,
    J: Fn(&[T], T, T, &mut [T]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn u(&self, alpha: &[T], y: T, x: T, out: &mut [T]) -> Result<()> {
        check_dim(alpha, self.dim)?;
        (self.u)(alpha, y, x, out);
        Ok(())
    }

    fn j(&self, alpha: &[T], y: T, x: T, out: &mut [T]) -> Result<()> {
        check_dim(alpha, self.dim)?;
        match &self.j {
            Some(j) => {
                j(alpha, y, x, out);
                Ok(())
            }
            None => finite_difference_j(self, alpha, y, x, out),
        }
    }
}
