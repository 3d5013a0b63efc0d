use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::BalanceError;
use crate::scalar::Scalar;

/// Distribution of the weight added by one insertion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightDistribution {
    /// Every ball weighs exactly one.
    Unit,
    /// `W / divisor` where `W ~ Exp(rate)`. With `rate = 1/m` and
    /// `divisor = m` the mean is one.
    Exponential { rate: f64, divisor: f64 },
}

impl WeightDistribution {
    /// Exponential weights of mean one built from `W ~ Exp(1/m)` scaled by `1/m`.
    pub fn exponential_mean_one(m: usize) -> Result<Self, BalanceError> {
        if m == 0 {
            return Err(BalanceError::NoBins);
        }
        Self::exponential(1.0 / m as f64, m as f64)
    }

    pub fn exponential(rate: f64, divisor: f64) -> Result<Self, BalanceError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(BalanceError::InvalidParameter(format!("exponential rate {rate}")));
        }
        if !(divisor > 0.0 && divisor.is_finite()) {
            return Err(BalanceError::InvalidParameter(format!("weight divisor {divisor}")));
        }
        Ok(Self::Exponential { rate, divisor })
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Self::Unit)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Unit => 1.0,
            Self::Exponential { rate, divisor } => 1.0 / rate / divisor,
        }
    }

    /// Draws one weight. Unit weights consume no randomness.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            Self::Unit => T::one(),
            Self::Exponential { rate, divisor } => {
                let w = Exp::new(rate).expect("validated rate").sample(rng);
                T::from_f64_lossy(w / divisor)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn exponential_mean_is_one() {
        let d = WeightDistribution::exponential_mean_one(64).unwrap();
        assert_eq!(d.mean(), 1.0);
        let mut rng = stream_rng(11, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let w: f64 = d.sample(&mut rng);
            assert!(w > 0.0);
            sum += w;
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(WeightDistribution::exponential(0.0, 1.0).is_err());
        assert!(WeightDistribution::exponential(1.0, -2.0).is_err());
        assert_eq!(WeightDistribution::exponential_mean_one(0), Err(BalanceError::NoBins));
    }
}
