//! Sequential load-balancing processes and their potential functions.

mod load;
mod potential;
mod probability;
mod process;
mod weight;

pub use load::{lighter, LoadVector};
pub use potential::{potential, PotentialParams, PotentialSnapshot, PotentialTracker};
pub use probability::{
    bad_step_probabilities, good_step_probabilities, one_plus_beta_prefix,
    one_plus_beta_probabilities, ProbabilityVector,
};
pub use process::{
    run_sequential, step_sequential, two_choice_step, write_trajectory_csv, Process,
    SequentialConfig, Trajectory, TRAJECTORY_HEADER,
};
pub use weight::WeightDistribution;
