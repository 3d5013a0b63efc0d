//! Relaxed concurrent counters and queues built on the two-choice process.
//!
//! * [`balance`]: sequential `(1 + β)`-choice processes and exponential
//!   potentials, generic over the [`Scalar`] weight type.
//! * [`sim`]: replay of the asynchronous two-choice process under an
//!   oblivious adversary, with contention accounting.
//! * [`multicounter`] and [`multiqueue`]: the live, thread-safe structures.
//! * [`dlin`]: maps recorded histories to relaxation costs and tail statistics.
//! * [`stm`]: a word-based TL2 whose global clock can be a `MultiCounter`.
//! * [`workload`]: timed multi-threaded drivers for throughput and stress runs.

pub mod balance;
pub mod dlin;
mod error;
pub mod multicounter;
pub mod multiqueue;
pub mod rng;
mod scalar;
pub mod sim;
pub mod stm;
pub mod workload;

pub use error::{BalanceError, ScheduleError, StructureError};
pub use scalar::Scalar;

pub type LoadVector64 = balance::LoadVector<f64>;
pub type LoadVector32 = balance::LoadVector<f32>;
pub type PotentialParams64 = balance::PotentialParams<f64>;
pub type PotentialSnapshot64 = balance::PotentialSnapshot<f64>;
pub type ProbabilityVector64 = balance::ProbabilityVector<f64>;
pub type Trajectory64 = balance::Trajectory<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type SimOutcome64 = sim::SimOutcome<f64>;
