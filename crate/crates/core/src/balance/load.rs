use crate::error::BalanceError;
use crate::scalar::Scalar;

/// Weights `x_j` of `m` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector<T> {
    weights: Vec<T>,
}

impl<T: Scalar> LoadVector<T> {
    /// `m` empty bins.
    pub fn zeros(m: usize) -> Result<Self, BalanceError> {
        if m == 0 {
            return Err(BalanceError::NoBins);
        }
        Ok(Self { weights: vec![T::zero(); m] })
    }

    pub fn from_weights(weights: Vec<T>) -> Result<Self, BalanceError> {
        if weights.is_empty() {
            return Err(BalanceError::NoBins);
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// Always false; a load vector has at least one bin.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn get(&self, bin: usize) -> T {
        self.weights[bin]
    }

    pub fn add(&mut self, bin: usize, weight: T) {
        self.weights[bin] = self.weights[bin] + weight;
    }

    pub fn total(&self) -> T {
        self.weights.iter().fold(T::zero(), |acc, &w| acc + w)
    }

    /// Average weight `μ`.
    pub fn mean(&self) -> T {
        self.total() / T::of_usize(self.len())
    }

    /// Centered weights `y_j = x_j - μ`.
    pub fn centered(&self) -> Vec<T> {
        let mu = self.mean();
        self.weights.iter().map(|&x| x - mu).collect()
    }

    pub fn max(&self) -> T {
        self.weights.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.weights.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn gap(&self) -> T {
        self.max() - self.min()
    }

    /// Bin indices in increasing order of weight; ties go to the lower index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        // sort_by is stable, so equal weights keep index order
        order.sort_by(|&a, &b| {
            self.weights[a]
                .partial_cmp(&self.weights[b])
                .expect("bin weights are finite")
        });
        order
    }

    /// Of two bins, the one with the smaller weight; ties go to the lower index.
    pub fn lighter_of(&self, i: usize, j: usize) -> usize {
        lighter(i, self.weights[i], j, self.weights[j])
    }

    pub fn into_weights(self) -> Vec<T> {
        self.weights
    }
}

/// Two-choice rule on (possibly stale) observed values: the smaller value
/// wins, ties go to the lower index.
pub fn lighter<T: PartialOrd>(i: usize, vi: T, j: usize, vj: T) -> usize {
    if vj < vi || (vj == vi && j < i) {
        j
    } else {
        i
    }
}
