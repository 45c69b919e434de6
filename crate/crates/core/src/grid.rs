//! Evaluation grids and per-grid-point estimates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fixed abscissae at which streaming estimators are maintained.
///
/// The interior (points at least `trim * (b - a)` away from either end of
/// the support) is where integrated errors are scored.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid<T> {
    points: Vec<T>,
    support: (T, T),
    trim: T,
}

impl<T: Scalar> EvaluationGrid<T> {
    /// Uniform grid of `n` points spanning `[a, b]` inclusive.
    pub fn uniform(a: T, b: T, n: usize, trim: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidGrid("support must be a finite interval with a < b".into()));
        }
        let step = (b - a) / T::from_count(n - 1);
        let mut points: Vec<T> = (0..n).map(|i| a + step * T::from_count(i)).collect();
        points[n - 1] = b;
        Self::from_points(points, (a, b), trim)
    }

    pub fn from_points(points: Vec<T>, support: (T, T), trim: T) -> Result<Self> {
        let (a, b) = support;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidGrid("support must be a finite interval with a < b".into()));
        }
        if !(trim >= T::zero() && trim < T::lit(0.5)) {
            return Err(Error::InvalidGrid(format!("trim fraction {trim} outside [0, 0.5)")));
        }
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        if points.iter().any(|&p| !(p >= a && p <= b)) {
            return Err(Error::InvalidGrid("points must lie within the support".into()));
        }
        let grid = Self { points, support, trim };
        if !grid.interior_mask().into_iter().any(|m| m) {
            return Err(Error::InvalidGrid("no grid point inside the trimmed interior".into()));
        }
        Ok(grid)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn support(&self) -> (T, T) {
        self.support
    }

    pub fn trim(&self) -> T {
        self.trim
    }

    /// Trimmed interior interval `[a + trim·(b−a), b − trim·(b−a)]`.
    pub fn interior(&self) -> (T, T) {
        let (a, b) = self.support;
        let cut = self.trim * (b - a);
        (a + cut, b - cut)
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        let (lo, hi) = self.interior();
        self.points.iter().map(|&p| p >= lo && p <= hi).collect()
    }
}

/// Estimates of a `dim`-vector at every grid point, with a defined flag per point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEstimate<T> {
    dim: usize,
    values: Vec<T>,
    defined: Vec<bool>,
}

impl<T: Scalar> GridEstimate<T> {
    /// All points undefined, values zero.
    pub fn undefined(npoints: usize, dim: usize) -> Self {
        Self { dim, values: vec![T::zero(); npoints * dim], defined: vec![false; npoints] }
    }

    pub fn from_parts(dim: usize, values: Vec<T>, defined: Vec<bool>) -> Result<Self> {
        if dim == 0 || values.len() != defined.len() * dim {
            return Err(Error::DimensionMismatch { expected: defined.len() * dim, got: values.len() });
        }
        Ok(Self { dim, values, defined })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.defined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defined.is_empty()
    }

    pub fn defined(&self) -> &[bool] {
        &self.defined
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Estimate at grid point `i`, or `None` where undefined.
    pub fn get(&self, i: usize) -> Option<&[T]> {
        self.defined[i].then(|| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    /// Stored value regardless of the defined flag.
    pub fn raw(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn set(&mut self, i: usize, value: &[T]) {
        self.values[i * self.dim..(i + 1) * self.dim].copy_from_slice(value);
        self.defined[i] = true;
    }

    pub fn clear(&mut self, i: usize) {
        for v in &mut self.values[i * self.dim..(i + 1) * self.dim] {
            *v = T::zero();
        }
        self.defined[i] = false;
    }

    /// One component as a per-point vector (undefined points map to `None`).
    pub fn component(&self, c: usize) -> Vec<Option<T>> {
        (0..self.len()).map(|i| self.get(i).map(|v| v[c])).collect()
    }

    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }
}

/// Piecewise-linear interpolation between the two nearest defined grid points.
///
/// Returns `None` when `x` lies outside the span of defined points.
pub fn interpolate<T: Scalar>(grid: &EvaluationGrid<T>, est: &GridEstimate<T>, x: T) -> Option<Vec<T>> {
    let pts = grid.points();
    let defined: Vec<usize> = (0..pts.len()).filter(|&i| est.defined()[i]).collect();
    let first = *defined.first()?;
    let last = *defined.last()?;
    if !(x >= pts[first] && x <= pts[last]) {
        return None;
    }
    // Largest defined index with point <= x.
    let pos = defined.partition_point(|&i| pts[i] <= x);
    let lo = defined[pos - 1];
    if pts[lo] == x || pos == defined.len() {
        return est.get(lo).map(<[T]>::to_vec);
    }
    let hi = defined[pos];
    let w = (x - pts[lo]) / (pts[hi] - pts[lo]);
    let (vl, vh) = (est.raw(lo), est.raw(hi));
    Some(vl.iter().zip(vh).map(|(&a, &b)| a + w * (b - a)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints_and_interior() {
        let g = EvaluationGrid::uniform(-3.0, 3.0, 401, 0.05).unwrap();
        assert_eq!(g.points()[0], -3.0);
        assert_eq!(g.points()[400], 3.0);
        let (lo, hi) = g.interior();
        assert!((lo + 2.7f64).abs() < 1e-12 && (hi - 2.7f64).abs() < 1e-12);
        let m = g.interior_mask();
        assert!(!m[0] && m[200] && !m[400]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(EvaluationGrid::from_points(vec![0.0, 0.0], (0.0, 1.0), 0.0).is_err());
        assert!(EvaluationGrid::from_points(vec![0.0, 2.0], (0.0, 1.0), 0.0).is_err());
        assert!(EvaluationGrid::from_points(vec![0.0, 1.0], (0.0, 1.0), 0.5).is_err());
        // every point trimmed away
        assert!(EvaluationGrid::from_points(vec![0.0, 1.0], (0.0, 1.0), 0.2).is_err());
    }

    #[test]
    fn interpolation_contract() {
        let g = EvaluationGrid::from_points(vec![0.0, 1.0, 2.0, 3.0], (0.0, 3.0), 0.0).unwrap();
        let mut e = GridEstimate::undefined(4, 1);
        e.set(1, &[2.0]);
        e.set(2, &[4.0]);
        assert_eq!(interpolate(&g, &e, 1.0), Some(vec![2.0]));
        assert_eq!(interpolate(&g, &e, 2.0), Some(vec![4.0]));
        assert_eq!(interpolate(&g, &e, 1.5), Some(vec![3.0]));
        assert_eq!(interpolate(&g, &e, 0.5), None);
        assert_eq!(interpolate(&g, &e, 2.5), None);
        let empty = GridEstimate::<f64>::undefined(4, 1);
        assert_eq!(interpolate(&g, &empty, 1.0), None);
    }

    #[test]
    fn interpolation_skips_undefined_gaps() {
        let g = EvaluationGrid::from_points(vec![0.0, 1.0, 2.0], (0.0, 2.0), 0.0).unwrap();
        let mut e = GridEstimate::undefined(3, 1);
        e.set(0, &[0.0]);
        e.set(2, &[2.0]);
        assert_eq!(interpolate(&g, &e, 1.0), Some(vec![1.0]));
    }
}
