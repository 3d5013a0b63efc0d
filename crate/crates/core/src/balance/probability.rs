use rand::Rng;

use crate::error::BalanceError;
use crate::scalar::Scalar;

/// Probabilities `p_i` of inserting into the `i`-th least loaded bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<T> {
    probs: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Scalar> ProbabilityVector<T> {
    /// Validates entries in `[0, 1]` summing to one (to within a rounding
    /// allowance proportional to `m` and the type's epsilon).
    pub fn new(probs: Vec<T>) -> Result<Self, BalanceError> {
        if probs.is_empty() {
            return Err(BalanceError::NoBins);
        }
        for &p in &probs {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(BalanceError::InvalidProbability(p.to_f64_lossy()));
            }
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = T::zero();
        for &p in &probs {
            acc = acc + p;
            cumulative.push(acc);
        }
        let slack = T::epsilon() * T::of_usize(4 * probs.len());
        if (acc - T::one()).abs() > slack {
            return Err(BalanceError::InvalidProbability(acc.to_f64_lossy()));
        }
        Ok(Self { probs, cumulative })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// `Σ_{i<=k} p_i` for `k = 1..=m`.
    pub fn prefix_sums(&self) -> &[T] {
        &self.cumulative
    }

    pub fn sum(&self) -> T {
        self.probs.iter().fold(T::zero(), |a, &p| a + p)
    }

    /// True when every prefix sum of `self` is at least the matching prefix
    /// sum of `other`, up to `tol`.
    pub fn majorizes(&self, other: &Self, tol: T) -> bool {
        self.len() == other.len()
            && self
                .cumulative
                .iter()
                .zip(&other.cumulative)
                .all(|(&a, &b)| a + tol >= b)
    }

    /// Draws a rank (0-based) by inverse transform sampling.
    pub fn sample_rank<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::from_f64_lossy(rng.random::<f64>());
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.len() - 1)
    }
}

fn check_bins(m: usize) -> Result<(), BalanceError> {
    if m == 0 {
        Err(BalanceError::NoBins)
    } else {
        Ok(())
    }
}

fn check_unit_interval(x: f64) -> Result<(), BalanceError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(BalanceError::InvalidProbability(x))
    }
}

/// Rank probabilities of the `(1 + β)`-choice process: with probability `β`
/// the lighter of two uniform bins, otherwise one uniform bin.
///
/// `p_i = (1 - β)/m + β (2/m (1 - (i-1)/m) - 1/m²)` for `i = 1..=m`.
pub fn one_plus_beta_probabilities<T: Scalar>(
    m: usize,
    beta: f64,
) -> Result<ProbabilityVector<T>, BalanceError> {
    check_bins(m)?;
    check_unit_interval(beta)?;
    let mf = m as f64;
    let probs = (1..=m)
        .map(|i| {
            let two_choice = 2.0 / mf * (1.0 - (i as f64 - 1.0) / mf) - 1.0 / (mf * mf);
            T::from_f64_lossy((1.0 - beta) / mf + beta * two_choice)
        })
        .collect();
    ProbabilityVector::new(probs)
}

/// Closed form of the prefix sums of [`one_plus_beta_probabilities`]:
/// `(k/m)(1 + β - β k/m)`.
pub fn one_plus_beta_prefix(m: usize, beta: f64, k: usize) -> f64 {
    let r = k as f64 / m as f64;
    r * (1.0 + beta - r * beta)
}

/// Worst-case rank probabilities of a step that always inserts into the
/// heavier of its two choices: `p_i = (2i - 1)/m²`.
pub fn bad_step_probabilities<T: Scalar>(m: usize) -> Result<ProbabilityVector<T>, BalanceError> {
    check_bins(m)?;
    let m2 = (m * m) as f64;
    let probs = (1..=m)
        .map(|i| T::from_f64_lossy((2 * i - 1) as f64 / m2))
        .collect();
    ProbabilityVector::new(probs)
}

/// Rank probabilities of a step that inserts into the lighter of its two
/// choices with probability `rho` and into the heavier one otherwise:
/// `p_i = (ρ 2(m-i) + 1 + (1-ρ) 2(i-1)) / m²`.
pub fn good_step_probabilities<T: Scalar>(
    m: usize,
    rho: f64,
) -> Result<ProbabilityVector<T>, BalanceError> {
    check_bins(m)?;
    check_unit_interval(rho)?;
    let m2 = (m * m) as f64;
    let probs = (1..=m)
        .map(|i| {
            let lighter = 2.0 * (m - i) as f64;
            let heavier = 2.0 * (i - 1) as f64;
            T::from_f64_lossy((rho * lighter + 1.0 + (1.0 - rho) * heavier) / m2)
        })
        .collect();
    ProbabilityVector::new(probs)
}
