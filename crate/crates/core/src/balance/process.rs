//! Sequential allocation processes.

use std::io::{self, Write};

use rand::Rng;

use crate::balance::load::LoadVector;
use crate::balance::potential::{PotentialParams, PotentialSnapshot, PotentialTracker};
use crate::balance::probability::ProbabilityVector;
use crate::balance::weight::WeightDistribution;
use crate::error::BalanceError;
use crate::scalar::Scalar;

/// How a sequential step picks its bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Process {
    /// With probability `beta` the lighter of two uniform bins, otherwise a
    /// single uniform bin. `beta = 1` is the classic two-choice process.
    OnePlusBeta { beta: f64 },
    /// Two-choice, except that with probability `bad_fraction` the step is
    /// corrupted and inserts into the heavier of its two choices.
    Corrupted { bad_fraction: f64 },
}

impl Process {
    pub const TWO_CHOICE: Process = Process::OnePlusBeta { beta: 1.0 };

    fn validate(&self) -> Result<(), BalanceError> {
        let p = match *self {
            Process::OnePlusBeta { beta } => beta,
            Process::Corrupted { bad_fraction } => bad_fraction,
        };
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(BalanceError::InvalidProbability(p))
        }
    }

    /// Picks a bin. A coin is flipped only when the mixing probability is
    /// strictly between 0 and 1, so `beta = 1` draws exactly two indices,
    /// in the same order as a simulated increment reads them.
    pub fn choose<T: Scalar, R: Rng + ?Sized>(&self, loads: &LoadVector<T>, rng: &mut R) -> usize {
        let m = loads.len();
        let flip = |p: f64, rng: &mut R| {
            if p <= 0.0 {
                false
            } else if p >= 1.0 {
                true
            } else {
                rng.random::<f64>() < p
            }
        };
        match *self {
            Process::OnePlusBeta { beta } => {
                if flip(beta, rng) {
                    let i = rng.random_range(0..m);
                    let j = rng.random_range(0..m);
                    loads.lighter_of(i, j)
                } else {
                    rng.random_range(0..m)
                }
            }
            Process::Corrupted { bad_fraction } => {
                let bad = flip(bad_fraction, rng);
                let i = rng.random_range(0..m);
                let j = rng.random_range(0..m);
                let lighter = loads.lighter_of(i, j);
                if bad {
                    if lighter == i { j } else { i }
                } else {
                    lighter
                }
            }
        }
    }
}

/// Inserts one ball into the bin with rank drawn from `probs` (ranks ordered
/// by weight, ties by index) and returns that bin.
pub fn step_sequential<T: Scalar, R: Rng + ?Sized>(
    loads: &mut LoadVector<T>,
    probs: &ProbabilityVector<T>,
    weight: &WeightDistribution,
    rng: &mut R,
) -> Result<usize, BalanceError> {
    if probs.len() != loads.len() {
        return Err(BalanceError::LengthMismatch { expected: loads.len(), got: probs.len() });
    }
    let order = loads.ranked();
    let bin = order[probs.sample_rank(rng)];
    let w = weight.sample::<T, R>(rng);
    loads.add(bin, w);
    Ok(bin)
}

/// One two-choice insertion with the choices given explicitly.
pub fn two_choice_step<T: Scalar>(loads: &mut LoadVector<T>, i: usize, j: usize, weight: T) -> usize {
    let bin = loads.lighter_of(i, j);
    loads.add(bin, weight);
    bin
}

/// Parameters of a sequential run.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialConfig<T> {
    pub bins: usize,
    pub steps: u64,
    pub process: Process,
    pub weight: WeightDistribution,
    /// A snapshot is taken after every step `t` with `t % snapshot_every == 0`.
    pub snapshot_every: u64,
    pub params: PotentialParams<T>,
}

impl<T: Scalar> SequentialConfig<T> {
    pub fn new(bins: usize, steps: u64, beta: f64) -> Self {
        Self {
            bins,
            steps,
            process: Process::OnePlusBeta { beta },
            weight: WeightDistribution::Unit,
            snapshot_every: 1,
            params: PotentialParams::default(),
        }
    }
}

/// Snapshots of a run plus its final loads.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub snapshots: Vec<PotentialSnapshot<T>>,
    pub loads: LoadVector<T>,
    /// Largest gap over all steps, including those between snapshots.
    pub max_gap: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn max_gamma(&self) -> Option<T> {
        self.snapshots.iter().map(|s| s.gamma).reduce(T::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_trajectory_csv(out, &self.snapshots)
    }
}

/// Runs a sequential process from empty bins.
pub fn run_sequential<T: Scalar, R: Rng + ?Sized>(
    config: &SequentialConfig<T>,
    rng: &mut R,
) -> Result<Trajectory<T>, BalanceError> {
    config.process.validate()?;
    if config.snapshot_every == 0 {
        return Err(BalanceError::InvalidParameter("snapshot_every must be positive".into()));
    }
    let mut tracker = PotentialTracker::new(LoadVector::zeros(config.bins)?, &config.params)?;
    let mut snapshots = Vec::new();
    let mut max_gap = T::zero();
    for t in 1..=config.steps {
        let bin = config.process.choose(tracker.loads(), rng);
        let w = config.weight.sample::<T, R>(rng);
        tracker.add(bin, w)?;
        max_gap = max_gap.max(tracker.gap());
        if t.is_multiple_of(config.snapshot_every) {
            snapshots.push(tracker.snapshot(t));
        }
    }
    Ok(Trajectory { snapshots, loads: tracker.into_loads(), max_gap })
}

pub const TRAJECTORY_HEADER: &str = "step,phi,psi,gamma,gap,max,min,mean";

pub fn write_trajectory_csv<T: Scalar, W: Write>(
    mut out: W,
    snapshots: &[PotentialSnapshot<T>],
) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for s in snapshots {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.step, s.phi, s.psi, s.gamma, s.gap, s.max, s.min, s.mean
        )?;
    }
    Ok(())
}
