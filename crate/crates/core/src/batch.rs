//! Streaming data chunks.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One chunk of a data stream: paired covariates and responses.
///
/// A batch is never empty and holds only finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    index: usize,
}

impl<T: Scalar> Batch<T> {
    /// Builds a batch; `index` is the 1-based position of the batch in its stream.
    pub fn new(xs: Vec<T>, ys: Vec<T>, index: usize) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidBatch(format!(
                "covariate and response lengths differ ({} vs {})",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::InvalidBatch("batch is empty".into()));
        }
        if index == 0 {
            return Err(Error::InvalidBatch("batch index must be positive".into()));
        }
        if let Some(i) = xs.iter().zip(&ys).position(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidBatch(format!("non-finite value at observation {i}")));
        }
        Ok(Self { xs, ys, index })
    }

    pub fn xs(&self) -> &[T] {
        &self.xs
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Smallest and largest covariate value.
    pub fn x_range(&self) -> (T, T) {
        self.xs.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    pub fn with_index(mut self, index: usize) -> Result<Self> {
        if index == 0 {
            return Err(Error::InvalidBatch("batch index must be positive".into()));
        }
        self.index = index;
        Ok(self)
    }
}

/// The retained union of a stream, as used by full-data estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDataset<T> {
    pub xs: Vec<T>,
    pub ys: Vec<T>,
}

impl<T: Scalar> PooledDataset<T> {
    pub fn from_batches<'a, I>(batches: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Batch<T>>,
    {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for b in batches {
            xs.extend_from_slice(b.xs());
            ys.extend_from_slice(b.ys());
        }
        if xs.is_empty() {
            return Err(Error::InvalidBatch("pooled dataset is empty".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    /// Views the pooled data as a single batch.
    pub fn as_batch(&self) -> Result<Batch<T>> {
        Batch::new(self.xs.clone(), self.ys.clone(), 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(matches!(Batch::<f64>::new(vec![], vec![], 1), Err(Error::InvalidBatch(_))));
        assert!(matches!(Batch::new(vec![1.0], vec![], 1), Err(Error::InvalidBatch(_))));
        assert!(matches!(Batch::new(vec![1.0], vec![f64::NAN], 1), Err(Error::InvalidBatch(_))));
        assert!(matches!(Batch::new(vec![1.0], vec![1.0], 0), Err(Error::InvalidBatch(_))));
    }

    #[test]
    fn pooled_concatenates_in_order() {
        let a = Batch::new(vec![0.0, 1.0], vec![2.0, 3.0], 1).unwrap();
        let b = Batch::new(vec![5.0], vec![6.0], 2).unwrap();
        let p = PooledDataset::from_batches([&a, &b]).unwrap();
        assert_eq!(p.xs, vec![0.0, 1.0, 5.0]);
        assert_eq!(p.ys, vec![2.0, 3.0, 6.0]);
        assert_eq!(p.n(), 3);
        assert_eq!(a.x_range(), (0.0, 1.0));
    }
}
