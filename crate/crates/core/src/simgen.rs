//! Seeded generators for the three simulation models.
//!
//! Every observation is drawn from its own ChaCha8 substream: the key is
//! `(seed, replication_id)` and the stream number is the observation's
//! global index. Streams are therefore reproducible bit for bit, independent
//! of batching, and replications can be generated in any order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::estfun::BuiltinFamily;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    /// `X ~ U[−3, 3]`, `Y = sin(2X) + ε`, `ε ~ N(0, 0.2²)`.
    #[serde(rename = "homo")]
    Homoscedastic,
    /// `X ~ U[−1, 1]`, `Y = X + cos(πX) + (e^X − 0.25)ε`, `ε ~ N(0, 1)`.
    #[serde(rename = "hetero")]
    Heteroscedastic,
    /// `X ~ U[−1, 1]`, `Y ~ Gamma(exp(cos(X)/2), 1)`.
    #[serde(rename = "gamma")]
    GammaLaw,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [Self::Homoscedastic, Self::Heteroscedastic, Self::GammaLaw];

    pub fn name(self) -> &'static str {
        match self {
            Self::Homoscedastic => "homo",
            Self::Heteroscedastic => "hetero",
            Self::GammaLaw => "gamma",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn support(self) -> (f64, f64) {
        match self {
            Self::Homoscedastic => (-3.0, 3.0),
            _ => (-1.0, 1.0),
        }
    }

    /// Estimating function whose root is the model's estimand.
    pub fn estimating_function(self) -> BuiltinFamily {
        match self {
            Self::Homoscedastic => BuiltinFamily::MeanRegression,
            Self::Heteroscedastic => BuiltinFamily::MeanVariance,
            Self::GammaLaw => BuiltinFamily::GammaShapeScore,
        }
    }

    pub fn dim(self) -> usize {
        self.estimating_function().dimension()
    }

    pub fn component_names(self) -> &'static [&'static str] {
        match self {
            Self::Homoscedastic => &["mean"],
            Self::Heteroscedastic => &["mean", "variance"],
            Self::GammaLaw => &["shape"],
        }
    }

    /// The estimand `α⁰(x)`.
    pub fn truth(self, x: f64) -> Vec<f64> {
        match self {
            Self::Homoscedastic => vec![(2.0 * x).sin()],
            Self::Heteroscedastic => {
                let s = x.exp() - 0.25;
                vec![x + (std::f64::consts::PI * x).cos(), s * s]
            }
            Self::GammaLaw => vec![(x.cos() / 2.0).exp()],
        }
    }

    /// Draws one `(x, y)` pair from `rng`.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> (f64, f64) {
        let (lo, hi) = self.support();
        let x = rng.gen_range(lo..hi);
        let y = match self {
            Self::Homoscedastic => {
                let e: f64 = StandardNormal.sample(rng);
                (2.0 * x).sin() + 0.2 * e
            }
            Self::Heteroscedastic => {
                let e: f64 = StandardNormal.sample(rng);
                x + (std::f64::consts::PI * x).cos() + (x.exp() - 0.25) * e
            }
            Self::GammaLaw => {
                gamma_sample((x.cos() / 2.0).exp(), rng).expect("shape is positive")
            }
        };
        (x, y)
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s).ok_or_else(|| Error::Config(format!("unknown model `{s}` (expected homo, hetero or gamma)")))
    }
}

/// A `Gamma(shape, 1)` variate (Marsaglia-Tsang squeeze, boosted for
/// `shape < 1`).
pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Domain(format!("gamma shape must be positive, got {shape}")));
    }
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(g.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub total_n: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub replication_id: u64,
}

impl StreamPlan {
    pub fn new(total_n: usize, batch_size: usize, seed: u64, replication_id: u64) -> Result<Self> {
        if total_n == 0 {
            return Err(Error::InvalidCount(0));
        }
        if batch_size == 0 {
            return Err(Error::InvalidCount(0));
        }
        Ok(Self { total_n, batch_size, seed, replication_id })
    }

    pub fn batch_count(&self) -> usize {
        self.total_n.div_ceil(self.batch_size)
    }
}

/// The generator for observation `index` of one replication.
pub fn point_rng(seed: u64, replication_id: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication_id.to_le_bytes());
    key[16..].copy_from_slice(b"rws-simgen-v1\0\0\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Observations `start..start + len` of a replication.
pub fn generate_range(model: ModelFamily, seed: u64, replication_id: u64, start: u64, len: usize) -> (Vec<f64>, Vec<f64>) {
    (0..len as u64).map(|k| model.sample(&mut point_rng(seed, replication_id, start + k))).unzip()
}

/// The whole stream, split into batches of `batch_size` (the last may be short).
pub fn generate_stream<T: Scalar>(model: ModelFamily, plan: &StreamPlan) -> Result<Vec<Batch<T>>> {
    StreamPlan::new(plan.total_n, plan.batch_size, plan.seed, plan.replication_id)?;
    (0..plan.batch_count())
        .map(|j| {
            let start = j * plan.batch_size;
            let len = plan.batch_size.min(plan.total_n - start);
            let (xs, ys) = generate_range(model, plan.seed, plan.replication_id, start as u64, len);
            Batch::new(xs.into_iter().map(T::lit).collect(), ys.into_iter().map(T::lit).collect(), j + 1)
        })
        .collect()
}
