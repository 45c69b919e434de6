//! Damped Newton solver for the per-point renewable estimating equation
//!
//! `G(α) = Ĵ_prev (α − α̂_prev) − Σ_i w_i U(α; y_i, x_i) = 0`,
//!
//! whose Jacobian is `Ĵ_prev + Σ_i w_i J(α; y_i, x_i)`. With `Ĵ_prev = 0` it
//! reduces to the ordinary kernel-weighted estimating equation.

use crate::error::Result;
use crate::estfun::EstimatingFunction;
use crate::linalg;
use crate::scalar::{norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions<T> {
    /// Convergence tolerance on the step norm or the residual norm.
    pub tol: T,
    pub max_iter: usize,
    /// Step halvings allowed per iteration.
    pub max_halvings: usize,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-8), max_iter: 50, max_halvings: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonFailure {
    /// The start value lies outside the parameter domain.
    StartOutsideDomain,
    /// The Jacobian could not be inverted.
    SingularJacobian,
    /// Damping was exhausted without reducing the residual.
    DampingExhausted,
    /// `max_iter` reached.
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome<T> {
    Converged { alpha: Vec<T>, iterations: usize, residual: T },
    Failed(NewtonFailure),
}

pub(crate) struct LocalEquation<'a, T, F: ?Sized> {
    pub f: &'a F,
    pub prior_jsum: &'a [T],
    pub prior_estimate: &'a [T],
    pub ys: &'a [T],
    pub xs: &'a [T],
    pub weights: &'a [T],
}

impl<'a, T: Scalar, F: EstimatingFunction<T> + ?Sized> LocalEquation<'a, T, F> {
    fn dim(&self) -> usize {
        self.prior_estimate.len()
    }

    /// Residual `G(α)` and Jacobian `Ĵ_prev + Σ w J(α)`.
    pub fn evaluate(&self, alpha: &[T], g: &mut [T], m: &mut [T]) -> Result<()> {
        let d = self.dim();
        let mut u_sum = vec![T::zero(); d];
        self.f.weighted_sums(alpha, self.ys, self.xs, self.weights, &mut u_sum, m)?;
        for r in 0..d {
            let mut acc = T::zero();
            for c in 0..d {
                acc = acc + self.prior_jsum[r * d + c] * (alpha[c] - self.prior_estimate[c]);
            }
            g[r] = acc - u_sum[r];
        }
        for (mv, &pj) in m.iter_mut().zip(self.prior_jsum) {
            *mv = *mv + pj;
        }
        Ok(())
    }

    /// Runs damped Newton from `start`. At least one Newton step is always
    /// taken so that affine equations are solved exactly.
    pub fn solve(&self, start: Vec<T>, opts: &NewtonOptions<T>) -> Result<Outcome<T>> {
        let d = self.dim();
        if !self.f.in_domain(&start) {
            return Ok(Outcome::Failed(NewtonFailure::StartOutsideDomain));
        }
        let mut alpha = start;
        let mut g = vec![T::zero(); d];
        let mut m = vec![T::zero(); d * d];
        self.evaluate(&alpha, &mut g, &mut m)?;
        let mut rnorm = norm(&g);

        let mut g_new = vec![T::zero(); d];
        let mut m_new = vec![T::zero(); d * d];
        for iteration in 1..=opts.max_iter {
            let Some(step) = linalg::solve(&m, &g, d) else {
                return Ok(Outcome::Failed(NewtonFailure::SingularJacobian));
            };
            let mut lambda = T::one();
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let cand: Vec<T> = alpha.iter().zip(&step).map(|(&a, &s)| a - lambda * s).collect();
                if self.f.in_domain(&cand) {
                    self.evaluate(&cand, &mut g_new, &mut m_new)?;
                    let r = norm(&g_new);
                    if r.is_finite() && (r < rnorm || r <= opts.tol) {
                        accepted = Some((cand, r));
                        break;
                    }
                }
                lambda = lambda * T::lit(0.5);
            }
            let Some((cand, r)) = accepted else {
                if rnorm <= opts.tol {
                    return Ok(Outcome::Converged { alpha, iterations: iteration, residual: rnorm });
                }
                return Ok(Outcome::Failed(NewtonFailure::DampingExhausted));
            };
            let step_norm = lambda * norm(&step);
            alpha = cand;
            rnorm = r;
            std::mem::swap(&mut g, &mut g_new);
            std::mem::swap(&mut m, &mut m_new);
            if rnorm <= opts.tol || step_norm <= opts.tol {
                return Ok(Outcome::Converged { alpha, iterations: iteration, residual: rnorm });
            }
        }
        Ok(Outcome::Failed(NewtonFailure::MaxIterations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estfun::BuiltinFamily;

    #[test]
    fn affine_equation_solved_in_one_step() {
        let f = BuiltinFamily::MeanRegression;
        let ys = [1.0, 2.0, 4.0];
        let xs = [0.0; 3];
        let w = [1.0, 1.0, 2.0];
        let eq = LocalEquation { f: &f, prior_jsum: &[2.0], prior_estimate: &[0.5], ys: &ys, xs: &xs, weights: &w };
        let Outcome::Converged { alpha, iterations, .. } = eq.solve(vec![0.5], &NewtonOptions::default()).unwrap()
        else {
            panic!("did not converge")
        };
        assert_eq!(iterations, 1);
        // (2·0.5 + 1 + 2 + 8) / (2 + 4)
        assert!((alpha[0] - 2.0f64).abs() < 1e-15);
    }

    #[test]
    fn gamma_stays_in_domain() {
        let f = BuiltinFamily::GammaShapeScore;
        // mean log = ψ(0.05) region forces a tiny shape
        let ys = [1e-9, 2e-8, 5e-10];
        let xs = [0.0; 3];
        let w = [1.0; 3];
        let eq = LocalEquation { f: &f, prior_jsum: &[0.0], prior_estimate: &[0.0], ys: &ys, xs: &xs, weights: &w };
        match eq.solve(vec![5.0], &NewtonOptions::default()).unwrap() {
            Outcome::Converged { alpha, residual, .. } => {
                assert!(alpha[0] > 0.0);
                assert!(residual <= 1e-7);
            }
            Outcome::Failed(e) => panic!("{e:?}"),
        }
        let out = eq.solve(vec![-1.0], &NewtonOptions::default()).unwrap();
        assert_eq!(out, Outcome::Failed(NewtonFailure::StartOutsideDomain));
    }

    #[test]
    fn singular_jacobian_reported() {
        let f = BuiltinFamily::MeanRegression;
        let eq = LocalEquation { f: &f, prior_jsum: &[0.0], prior_estimate: &[0.0], ys: &[1.0], xs: &[0.0], weights: &[0.0] };
        assert_eq!(
            eq.solve(vec![0.0], &NewtonOptions::default()).unwrap(),
            Outcome::Failed(NewtonFailure::SingularJacobian)
        );
    }
}
