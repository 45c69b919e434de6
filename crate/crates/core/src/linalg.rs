//! Small dense linear algebra on row-major slices.

use crate::scalar::Scalar;

#[inline]
fn at(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

pub(crate) fn is_lower_triangular<T: Scalar>(m: &[T], n: usize) -> bool {
    (0..n).all(|i| (i + 1..n).all(|j| m[at(n, i, j)] == T::zero()))
}

/// Solves `L x = b` for lower-triangular `L`.
pub(crate) fn forward_substitute<T: Scalar>(l: &[T], b: &[T], n: usize) -> Option<Vec<T>> {
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s = s - l[at(n, i, j)] * x[j];
        }
        let d = l[at(n, i, i)];
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        x[i] = s / d;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn lu_solve<T: Scalar>(m: &[T], b: &[T], n: usize) -> Option<Vec<T>> {
    let mut a = m.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[at(n, i, col)].abs().partial_cmp(&a[at(n, j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[at(n, pivot, col)] == T::zero() || !a[at(n, pivot, col)].is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(at(n, col, j), at(n, pivot, j));
            }
            x.swap(col, pivot);
        }
        let d = a[at(n, col, col)];
        for i in col + 1..n {
            let f = a[at(n, i, col)] / d;
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                a[at(n, i, j)] = a[at(n, i, j)] - f * a[at(n, col, j)];
            }
            x[i] = x[i] - f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s = s - a[at(n, i, j)] * x[j];
        }
        x[i] = s / a[at(n, i, i)];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solves `M x = b`, using forward substitution when `M` is lower triangular.
pub(crate) fn solve<T: Scalar>(m: &[T], b: &[T], n: usize) -> Option<Vec<T>> {
    if n == 1 {
        let x = b[0] / m[0];
        return (m[0] != T::zero() && x.is_finite()).then(|| vec![x]);
    }
    if is_lower_triangular(m, n) {
        forward_substitute(m, b, n)
    } else {
        lu_solve(m, b, n)
    }
}

/// Smallest leading principal minor of `m`.
pub(crate) fn min_leading_minor<T: Scalar>(m: &[T], n: usize) -> T {
    match n {
        1 => m[0],
        2 => m[0].min(m[0] * m[3] - m[1] * m[2]),
        _ => {
            let mut a = m.to_vec();
            let mut det = T::one();
            let mut min = T::infinity();
            for k in 0..n {
                let d = a[at(n, k, k)];
                det = det * d;
                min = min.min(det);
                if d == T::zero() {
                    return min.min(T::zero());
                }
                for i in k + 1..n {
                    let f = a[at(n, i, k)] / d;
                    for j in k..n {
                        a[at(n, i, j)] = a[at(n, i, j)] - f * a[at(n, k, j)];
                    }
                }
            }
            min
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky<T: Scalar>(m: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[at(n, i, j)];
            for k in 0..j {
                s = s - l[at(n, i, k)] * l[at(n, j, k)];
            }
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[at(n, i, i)] = s.sqrt();
            } else {
                l[at(n, i, j)] = s / l[at(n, j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub(crate) fn cholesky_solve<T: Scalar>(l: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[at(n, i, k)] * y[k];
        }
        y[i] = s / l[at(n, i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[at(n, k, i)] * y[k];
        }
        y[i] = s / l[at(n, i, i)];
    }
    y
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_min_eigenvalue<T: Scalar>(m: &[T], n: usize) -> T {
    let mut a = m.to_vec();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + a[at(n, i, j)] * a[at(n, i, j)]);
        let diag: T = (0..n).fold(T::zero(), |acc, i| acc + a[at(n, i, i)] * a[at(n, i, i)]);
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[at(n, p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[at(n, q, q)] - a[at(n, p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let akp = a[at(n, k, p)];
                    let akq = a[at(n, k, q)];
                    a[at(n, k, p)] = c * akp - s * akq;
                    a[at(n, k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[at(n, p, k)];
                    let aqk = a[at(n, q, k)];
                    a[at(n, p, k)] = c * apk - s * aqk;
                    a[at(n, q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[at(n, i, i)]).fold(T::infinity(), T::min)
}
