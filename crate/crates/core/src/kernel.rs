//! Kernel functions, bandwidth schedules and cross-validated bandwidth constants.
//!
//! All kernels are second-order, symmetric densities. The Gaussian kernel is
//! the default; Epanechnikov is available for compact-support experiments.
//! Bandwidths follow the `h = c · N^(-1/5)` family, where `N` is either the
//! final sample size (full-data bandwidth) or the cumulative count seen so far
//! (online bandwidth).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `1 / sqrt(2π)`.
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Accumulated weights below this value are treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Gaussian weights farther than this many bandwidths from the target are
/// dropped during cross-validation (relative weight below 2e-22).
const GAUSSIAN_CV_CUTOFF: f64 = 10.0;

/// Rate exponent of the bandwidth schedule.
pub const BANDWIDTH_EXPONENT: f64 = -0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Epanechnikov => "epanechnikov",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(Self::Gaussian),
            "epanechnikov" => Some(Self::Epanechnikov),
            _ => None,
        }
    }
}

/// A kernel together with its moment constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    /// Second moment `∫u²K(u)du`.
    mu2: f64,
    /// `∫K(u)²du`.
    l2norm: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian()
    }
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        match kind {
            KernelKind::Gaussian => Self { kind, mu2: 1.0, l2norm: 0.5 / PI.sqrt() },
            KernelKind::Epanechnikov => Self { kind, mu2: 0.2, l2norm: 0.6 },
        }
    }

    pub fn gaussian() -> Self {
        Self::new(KernelKind::Gaussian)
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelKind::Epanechnikov)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    pub fn l2norm(&self) -> f64 {
        self.l2norm
    }

    /// The unscaled kernel `K(u)`.
    #[inline]
    pub fn eval<T: Scalar>(&self, u: T) -> T {
        match self.kind {
            KernelKind::Gaussian => T::lit(INV_SQRT_2PI) * (-(u * u) * T::lit(0.5)).exp(),
            KernelKind::Epanechnikov => {
                let a = u.abs();
                if a < T::one() {
                    T::lit(0.75) * (T::one() - u * u)
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `K_h(u) = K(u/h)/h` without argument validation.
    #[inline]
    pub(crate) fn weight<T: Scalar>(&self, u: T, h: T) -> T {
        self.eval(u / h) / h
    }

    /// `K_h(u) = K(u/h)/h`.
    pub fn kernel_weight<T: Scalar>(&self, u: T, h: T) -> Result<T> {
        check_bandwidth(h)?;
        if !u.is_finite() {
            return Err(Error::Domain(format!("kernel argument {u} is not finite")));
        }
        Ok(self.weight(u, h))
    }

    /// Half-width (in bandwidth units) outside which weights are negligible.
    fn cv_radius(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => GAUSSIAN_CV_CUTOFF,
            KernelKind::Epanechnikov => 1.0,
        }
    }
}

pub(crate) fn check_bandwidth<T: Scalar>(h: T) -> Result<()> {
    if h.is_finite() && h > T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h.to_f64().unwrap_or(f64::NAN)))
    }
}

/// `h = constant · N^(-1/5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSchedule<T> {
    constant: T,
}

impl<T: Scalar> BandwidthSchedule<T> {
    pub fn new(constant: T) -> Result<Self> {
        check_bandwidth(constant)?;
        Ok(Self { constant })
    }

    pub fn constant(&self) -> T {
        self.constant
    }

    pub fn bandwidth(&self, cumulative_n: u64) -> Result<T> {
        if cumulative_n == 0 {
            return Err(Error::InvalidCount(cumulative_n));
        }
        let n = T::from_u64(cumulative_n).expect("count representable");
        Ok(self.constant * n.powf(T::lit(BANDWIDTH_EXPONENT)))
    }
}

/// Free-function form of [`BandwidthSchedule::bandwidth`].
pub fn schedule_bandwidth<T: Scalar>(s: &BandwidthSchedule<T>, cumulative_n: u64) -> Result<T> {
    s.bandwidth(cumulative_n)
}

/// How a streaming estimator picks the bandwidth for each incoming batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum BandwidthRule<T> {
    /// The same bandwidth for every batch.
    Fixed { h: T },
    /// `c · N_k^(-1/5)` with `N_k` the cumulative count including batch k.
    Online { schedule: BandwidthSchedule<T> },
}

impl<T: Scalar> BandwidthRule<T> {
    pub fn fixed(h: T) -> Result<Self> {
        check_bandwidth(h)?;
        Ok(Self::Fixed { h })
    }

    pub fn online(constant: T) -> Result<Self> {
        Ok(Self::Online { schedule: BandwidthSchedule::new(constant)? })
    }

    pub fn bandwidth(&self, cumulative_n: u64) -> Result<T> {
        match self {
            BandwidthRule::Fixed { h } => Ok(*h),
            BandwidthRule::Online { schedule } => schedule.bandwidth(cumulative_n),
        }
    }
}

/// Default candidate constants: 16 geometrically spaced values over `[0.1, 5.0]`.
pub fn default_cv_grid<T: Scalar>() -> Vec<T> {
    geometric_grid(0.1, 5.0, 16).into_iter().map(T::lit).collect()
}

pub(crate) fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|i| lo * (ratio * i as f64).exp()).collect();
    g[n - 1] = hi;
    g
}

/// Options for [`select_cv_constant_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CvOptions {
    /// Score only this many held-out observations (evenly spaced in x).
    /// `None` scores every observation.
    pub max_eval_points: Option<usize>,
}

/// Leave-one-out N-W cross-validation score per candidate constant.
///
/// Entry `i` is `None` when every held-out observation was degenerate for
/// candidate `i`.
pub fn cv_scores<T: Scalar>(
    data: &Batch<T>,
    kernel: &KernelSpec,
    candidates: &[T],
    opts: &CvOptions,
) -> Result<Vec<Option<T>>> {
    let n = data.len();
    if n < 10 {
        return Err(Error::InvalidCrossValidation(format!("need at least 10 observations, got {n}")));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidCrossValidation("candidate list is empty".into()));
    }
    for &c in candidates {
        check_bandwidth(c)?;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.xs()[a].partial_cmp(&data.xs()[b]).expect("finite"));
    let xs: Vec<T> = order.iter().map(|&i| data.xs()[i]).collect();
    let ys: Vec<T> = order.iter().map(|&i| data.ys()[i]).collect();

    let eval: Vec<usize> = match opts.max_eval_points {
        Some(m) if m > 0 && m < n => (0..m).map(|k| k * n / m).collect(),
        _ => (0..n).collect(),
    };

    let threshold = T::lit(DEGENERACY_THRESHOLD);
    let radius = T::lit(kernel.cv_radius());
    let n_pow = T::from_count(n).powf(T::lit(BANDWIDTH_EXPONENT));

    let scores = candidates
        .iter()
        .map(|&c| {
            let h = c * n_pow;
            let reach = radius * h;
            let mut sse = T::zero();
            let mut used = 0usize;
            for &i in &eval {
                let xi = xs[i];
                let lo = xs.partition_point(|&x| x < xi - reach);
                let hi = xs.partition_point(|&x| x <= xi + reach);
                let (mut num, mut den) = (T::zero(), T::zero());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let w = kernel.weight(xs[j] - xi, h);
                    num = num + w * ys[j];
                    den = den + w;
                }
                if den < threshold {
                    continue;
                }
                let r = ys[i] - num / den;
                sse = sse + r * r;
                used += 1;
            }
            (used > 0).then(|| sse / T::from_count(used))
        })
        .collect();
    Ok(scores)
}

/// Candidate constant minimising the leave-one-out N-W prediction error with
/// bandwidth `c · |data|^(-1/5)`. Ties go to the smaller constant.
pub fn select_cv_constant<T: Scalar>(data: &Batch<T>, kernel: &KernelSpec, candidates: &[T]) -> Result<T> {
    select_cv_constant_with(data, kernel, candidates, &CvOptions::default())
}

pub fn select_cv_constant_with<T: Scalar>(
    data: &Batch<T>,
    kernel: &KernelSpec,
    candidates: &[T],
    opts: &CvOptions,
) -> Result<T> {
    let scores = cv_scores(data, kernel, candidates, opts)?;
    let mut best: Option<(T, T)> = None;
    for (&c, score) in candidates.iter().zip(scores) {
        let Some(s) = score.filter(|s| s.is_finite()) else { continue };
        best = match best {
            None => Some((c, s)),
            Some((bc, bs)) if s < bs || (s == bs && c < bc) => Some((c, s)),
            keep => keep,
        };
    }
    best.map(|(c, _)| c).ok_or(Error::NoValidBandwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Normal density by its Taylor series, summed in extended steps.
    fn normal_density_series(u: f64) -> f64 {
        let z = -u * u / 2.0;
        let mut term = 1.0;
        let mut total = 1.0;
        for k in 1..200 {
            term *= z / k as f64;
            total += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        total / (2.0 * PI).sqrt()
    }

    #[test]
    fn gaussian_weight_values() {
        let k = KernelSpec::gaussian();
        assert!((k.kernel_weight(0.0, 1.0).unwrap() - 0.398_942_280_4f64).abs() < 1e-9);
        assert_eq!(k.kernel_weight(0.5, 1.0).unwrap(), k.kernel_weight(-0.5, 1.0).unwrap());
        let expected = 10.0 * normal_density_series(2.0);
        let got = k.kernel_weight(0.2, 0.1).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.max(1.0), "{got} vs {expected}");
    }

    #[test]
    fn invalid_bandwidth_rejected() {
        let k = KernelSpec::gaussian();
        assert!(matches!(k.kernel_weight(0.0, 0.0), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(k.kernel_weight(0.0, -1.0), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(k.kernel_weight(f64::NAN, 1.0), Err(Error::Domain(_))));
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn kernel_constants_match_quadrature() {
        for (spec, a, b) in [(KernelSpec::gaussian(), -10.0, 10.0), (KernelSpec::epanechnikov(), -1.0, 1.0)] {
            let mass = simpson(|u| spec.eval(u), a, b, 20_000);
            let mu2 = simpson(|u| u * u * spec.eval(u), a, b, 20_000);
            let l2 = simpson(|u| spec.eval(u).powi(2), a, b, 20_000);
            assert!((mass - 1.0).abs() < 1e-8, "{mass}");
            assert!((mu2 - spec.mu2()).abs() < 1e-8);
            assert!((l2 - spec.l2norm()).abs() < 1e-8);
            assert!(spec.mu2() > 0.0 && spec.l2norm() > 0.0);
        }
    }

    #[test]
    fn schedule_examples() {
        let s = BandwidthSchedule::new(1.0).unwrap();
        assert!((s.bandwidth(100_000).unwrap() - 0.1f64).abs() < 1e-15);
        assert_eq!(BandwidthSchedule::new(2.5).unwrap().bandwidth(1).unwrap(), 2.5);
        let oracle = ((-0.2) * 12000f64.ln()).exp() * 0.8;
        let got = schedule_bandwidth(&BandwidthSchedule::new(0.8).unwrap(), 12000).unwrap();
        assert!((got - oracle).abs() < 1e-14);
        assert!(matches!(s.bandwidth(0), Err(Error::InvalidCount(0))));
        assert!(BandwidthSchedule::new(0.0).is_err());
    }

    #[test]
    fn default_grid_is_geometric() {
        let g: Vec<f64> = default_cv_grid();
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[15], 5.0);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
    }

    fn lcg_batch(n: usize, seed: u64, f: impl Fn(f64) -> f64) -> Batch<f64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let xs: Vec<f64> = (0..n).map(|_| -3.0 + 6.0 * next()).collect();
        let ys = xs.iter().map(|&x| f(x) + 0.2 * (next() - 0.5) * 3.46).collect();
        Batch::new(xs, ys, 1).unwrap()
    }

    #[test]
    fn cv_constant_response_picks_smallest() {
        let b = lcg_batch(50, 3, |_| 3.0);
        let b = Batch::new(b.xs().to_vec(), vec![3.0; 50], 1).unwrap();
        let c = select_cv_constant(&b, &KernelSpec::gaussian(), &[2.0, 0.5, 1.0]).unwrap();
        assert_eq!(c, 0.5);
        assert_eq!(select_cv_constant(&b, &KernelSpec::gaussian(), &[0.7]).unwrap(), 0.7);
    }

    #[test]
    fn cv_input_errors() {
        let small = Batch::new(vec![0.0; 5], vec![0.0; 5], 1).unwrap();
        assert!(select_cv_constant(&small, &KernelSpec::gaussian(), &[1.0]).is_err());
        let b = lcg_batch(20, 1, |x| x);
        assert!(select_cv_constant(&b, &KernelSpec::gaussian(), &[]).is_err());
        // Epanechnikov with a tiny bandwidth sees no neighbours at all.
        let sparse = Batch::new((0..20).map(|i| i as f64 * 100.0).collect(), vec![1.0; 20], 1).unwrap();
        assert!(matches!(
            select_cv_constant(&sparse, &KernelSpec::epanechnikov(), &[0.01]),
            Err(Error::NoValidBandwidth)
        ));
    }

    #[test]
    fn cv_matches_bruteforce_double_loop() {
        let b = lcg_batch(200, 11, |x| (2.0 * x).sin());
        let cands = [0.2, 0.5, 1.0, 2.0];
        let k = KernelSpec::gaussian();
        let n = b.len();
        let brute: Vec<f64> = cands
            .iter()
            .map(|&c| {
                let h = c * (n as f64).powf(-0.2);
                let mut sse = 0.0;
                let mut used = 0;
                for i in 0..n {
                    let (mut num, mut den) = (0.0, 0.0);
                    for j in 0..n {
                        if i != j {
                            let u = (b.xs()[j] - b.xs()[i]) / h;
                            let w = (-u * u / 2.0).exp() / (2.0 * PI).sqrt() / h;
                            num += w * b.ys()[j];
                            den += w;
                        }
                    }
                    if den >= 1e-8 {
                        sse += (b.ys()[i] - num / den).powi(2);
                        used += 1;
                    }
                }
                sse / used as f64
            })
            .collect();
        let argmin = (0..cands.len()).min_by(|&a, &c| brute[a].partial_cmp(&brute[c]).unwrap()).unwrap();
        assert_eq!(select_cv_constant(&b, &k, &cands).unwrap(), cands[argmin]);
        let scores = cv_scores(&b, &k, &cands, &CvOptions::default()).unwrap();
        for (s, o) in scores.iter().zip(&brute) {
            assert!((s.unwrap() - o).abs() <= 1e-10 * o);
        }
    }

    proptest! {
        #[test]
        fn weight_symmetric_and_scaled(u in -20.0f64..20.0, h in 0.01f64..10.0) {
            let k = KernelSpec::gaussian();
            let w = k.kernel_weight(u, h).unwrap();
            prop_assert_eq!(w, k.kernel_weight(-u, h).unwrap());
            let scaled = k.kernel_weight(u / h, 1.0).unwrap() / h;
            prop_assert!((w - scaled).abs() <= 1e-14 * scaled.max(1e-300) + 1e-300);
        }

        #[test]
        fn schedule_monotone_and_homogeneous(c in 0.01f64..10.0, n in 1u64..1_000_000, a in 0.1f64..10.0) {
            let s = BandwidthSchedule::new(c).unwrap();
            let h1 = s.bandwidth(n).unwrap();
            prop_assert!(h1 > 0.0);
            prop_assert!(s.bandwidth(n + 1).unwrap() < h1);
            let scaled = BandwidthSchedule::new(a * c).unwrap().bandwidth(n).unwrap();
            prop_assert!((scaled - a * h1).abs() <= 1e-12 * scaled);
        }

        #[test]
        fn cv_permutation_invariant(seed in 0u64..1000, rot in 0usize..5) {
            let b = lcg_batch(40, seed, |x| x.cos());
            let mut cands = vec![0.2, 0.4, 0.8, 1.6, 3.2];
            let k = KernelSpec::gaussian();
            let base = select_cv_constant(&b, &k, &cands).unwrap();
            cands.rotate_left(rot);
            prop_assert_eq!(select_cv_constant(&b, &k, &cands).unwrap(), base);
            cands.reverse();
            prop_assert_eq!(select_cv_constant(&b, &k, &cands).unwrap(), base);
        }
    }
}
