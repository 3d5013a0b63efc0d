use crate::balance::load::LoadVector;
use crate::balance::weight::WeightDistribution;
use crate::error::BalanceError;
use crate::scalar::Scalar;

/// Constants of the exponential potential.
///
/// `epsilon = gamma / 6`, `beta = 2 gamma` and
/// `alpha = min(lambda / 2, epsilon / (6 S))` when derived from a good-step
/// margin `gamma`. The drift constant `c` has no closed form and is carried
/// only when a caller supplies one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams<T> {
    pub alpha: T,
    pub epsilon: T,
    pub gamma: T,
    pub beta: T,
    pub lambda: T,
    pub moment_bound: T,
    pub drift_c: Option<T>,
}

impl<T: Scalar> PotentialParams<T> {
    /// Parameters for a good-step margin `gamma` in `(0, 1/2]`; `lambda = 1`
    /// and `S = 1` for unit weights, `S = 8` for exponential weights.
    pub fn from_good_margin(gamma: f64, weight: &WeightDistribution) -> Result<Self, BalanceError> {
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(BalanceError::InvalidParameter(format!("good-step margin {gamma}")));
        }
        let s = if weight.is_unit() { 1.0 } else { 8.0 };
        let epsilon = gamma / 6.0;
        let lambda = 1.0;
        let alpha = (lambda / 2.0f64).min(epsilon / (6.0 * s));
        Ok(Self {
            alpha: T::from_f64_lossy(alpha),
            epsilon: T::from_f64_lossy(epsilon),
            gamma: T::from_f64_lossy(gamma),
            beta: T::from_f64_lossy(2.0 * gamma),
            lambda: T::from_f64_lossy(lambda),
            moment_bound: T::from_f64_lossy(s),
            drift_c: None,
        })
    }

    /// Replaces `epsilon` and recomputes `alpha` from it.
    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        let half_lambda = self.lambda / T::from_f64_lossy(2.0);
        self.alpha = half_lambda.min(epsilon / (T::from_f64_lossy(6.0) * self.moment_bound));
        self
    }

    /// Overrides `alpha` directly, leaving the other constants untouched.
    pub fn with_alpha(mut self, alpha: T) -> Self {
        self.alpha = alpha;
        self
    }
}

impl<T: Scalar> Default for PotentialParams<T> {
    /// Unit weights with the margin `gamma = 1/5` of contention-bounded steps.
    fn default() -> Self {
        Self::from_good_margin(0.2, &WeightDistribution::Unit).expect("valid default margin")
    }
}

/// Potentials and extremes of a load vector at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSnapshot<T> {
    pub step: u64,
    pub phi: T,
    pub psi: T,
    pub gamma: T,
    pub gap: T,
    pub max: T,
    pub min: T,
    pub mean: T,
}

fn guarded_exp<T: Scalar>(bin: usize, exponent: T) -> Result<T, BalanceError> {
    if exponent.abs() > T::EXP_LIMIT {
        return Err(BalanceError::PotentialOverflow {
            bin,
            exponent: exponent.to_f64_lossy(),
            limit: T::EXP_LIMIT.to_f64_lossy(),
        });
    }
    Ok(exponent.exp())
}

/// `Φ = Σ exp(α y_j)`, `Ψ = Σ exp(-α y_j)`, `Γ = Φ + Ψ` and the gap, computed
/// directly from the weights.
pub fn potential<T: Scalar>(
    loads: &LoadVector<T>,
    params: &PotentialParams<T>,
    step: u64,
) -> Result<PotentialSnapshot<T>, BalanceError> {
    let alpha = params.alpha;
    let mut phi = T::zero();
    let mut psi = T::zero();
    for (bin, y) in loads.centered().into_iter().enumerate() {
        phi = phi + guarded_exp(bin, alpha * y)?;
        psi = psi + guarded_exp(bin, -alpha * y)?;
    }
    let (max, min) = (loads.max(), loads.min());
    Ok(PotentialSnapshot {
        step,
        phi,
        psi,
        gamma: phi + psi,
        gap: max - min,
        max,
        min,
        mean: loads.mean(),
    })
}

const REBASE_INTERVAL: u64 = 1 << 12;

/// Maintains a load vector together with its potentials in O(1) amortized
/// time per insertion.
///
/// The sums are kept relative to a base weight `b`:
/// `up = Σ exp(α (x_j - b))`, `down = Σ exp(-α (x_j - b))`, so that
/// `Φ = up · exp(α (b - μ))` and `Ψ = down · exp(-α (b - μ))`. The base is
/// moved to the current mean, and both sums recomputed exactly, every
/// `REBASE_INTERVAL` insertions.
#[derive(Debug, Clone)]
pub struct PotentialTracker<T> {
    loads: LoadVector<T>,
    alpha: T,
    base: T,
    up: T,
    down: T,
    total: T,
    max: T,
    min: T,
    min_count: usize,
    updates: u64,
}

impl<T: Scalar> PotentialTracker<T> {
    pub fn new(loads: LoadVector<T>, params: &PotentialParams<T>) -> Result<Self, BalanceError> {
        let mut tracker = Self {
            alpha: params.alpha,
            base: T::zero(),
            up: T::zero(),
            down: T::zero(),
            total: loads.total(),
            max: loads.max(),
            min: loads.min(),
            min_count: 0,
            updates: 0,
            loads,
        };
        tracker.rebase()?;
        tracker.recount_min();
        Ok(tracker)
    }

    pub fn loads(&self) -> &LoadVector<T> {
        &self.loads
    }

    pub fn into_loads(self) -> LoadVector<T> {
        self.loads
    }

    pub fn total(&self) -> T {
        self.total
    }

    pub fn gap(&self) -> T {
        self.max - self.min
    }

    pub fn mean(&self) -> T {
        self.total / T::of_usize(self.loads.len())
    }

    fn rebase(&mut self) -> Result<(), BalanceError> {
        self.total = self.loads.total();
        let mu = self.mean();
        self.base = mu;
        let mut up = T::zero();
        let mut down = T::zero();
        for (bin, &x) in self.loads.weights().iter().enumerate() {
            let e = self.alpha * (x - mu);
            up = up + guarded_exp(bin, e)?;
            down = down + guarded_exp(bin, -e)?;
        }
        self.up = up;
        self.down = down;
        Ok(())
    }

    fn recount_min(&mut self) {
        self.min = self.loads.min();
        let min = self.min;
        self.min_count = self.loads.weights().iter().filter(|&&x| x == min).count();
    }

    /// Adds `weight` to `bin`.
    pub fn add(&mut self, bin: usize, weight: T) -> Result<(), BalanceError> {
        let old = self.loads.get(bin);
        let new = old + weight;
        let mu = (self.total + weight) / T::of_usize(self.loads.len());
        let exponent = self.alpha * (new - mu);
        if exponent.abs() > T::EXP_LIMIT {
            return Err(BalanceError::PotentialOverflow {
                bin,
                exponent: exponent.to_f64_lossy(),
                limit: T::EXP_LIMIT.to_f64_lossy(),
            });
        }
        self.loads.add(bin, weight);
        self.total = self.total + weight;
        let (eo, en) = (self.alpha * (old - self.base), self.alpha * (new - self.base));
        self.up = self.up + en.exp() - eo.exp();
        self.down = self.down + (-en).exp() - (-eo).exp();
        if new > self.max {
            self.max = new;
        }
        if old == self.min && weight > T::zero() {
            self.min_count -= 1;
            if self.min_count == 0 {
                self.recount_min();
            }
        }
        self.updates += 1;
        let drift = (self.alpha * (mu - self.base)).abs();
        if self.updates.is_multiple_of(REBASE_INTERVAL) || drift > T::from_f64_lossy(8.0) {
            self.rebase()?;
        }
        Ok(())
    }

    pub fn snapshot(&self, step: u64) -> PotentialSnapshot<T> {
        let mu = self.mean();
        let shift = self.alpha * (self.base - mu);
        let phi = self.up * shift.exp();
        let psi = self.down * (-shift).exp();
        PotentialSnapshot {
            step,
            phi,
            psi,
            gamma: phi + psi,
            gap: self.max - self.min,
            max: self.max,
            min: self.min,
            mean: mu,
        }
    }
}
