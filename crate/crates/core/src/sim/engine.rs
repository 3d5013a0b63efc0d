//! Replay of the asynchronous two-choice process on a fixed schedule.
//!
//! Reads copy the current weight of a bin chosen at the read event from the
//! thread's own random stream; the update adds one weight sample to the bin
//! whose copied value was smaller. Under an oblivious adversary this is
//! equivalent to drawing both indices at update time against values read at
//! the earlier read times, since the schedule never depends on the draws.

use rand::Rng;

use crate::balance::{lighter, LoadVector, PotentialParams, PotentialSnapshot, PotentialTracker, WeightDistribution};
use crate::error::ScheduleError;
use crate::rng::{stream_rng, StreamRng, AUX_STREAM_BASE};
use crate::scalar::Scalar;
use crate::sim::schedule::{AdversaryKind, Event, Phase, Schedule};

/// Ratio constant sufficient for the analysis to hold.
pub const ANALYSIS_RATIO: u64 = 1024;
/// Desk-scale default ratio.
pub const DEFAULT_RATIO: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub bins: usize,
    pub threads: usize,
    /// Ratio constant `C`; operations with contention above `C n` are bad.
    pub ratio: u64,
    pub total_ops: u64,
    pub adversary: AdversaryKind,
    /// Seed of the threads' random streams.
    pub seed: u64,
    /// Seed of the adversary; independent of `seed`.
    pub schedule_seed: u64,
    pub weight: WeightDistribution,
    pub params: PotentialParams<T>,
    /// One snapshot every `snapshot_every` completed updates.
    pub snapshot_every: u64,
    /// Counter reads sampled after each update (consumed by the cost recorder).
    pub reads_per_update: u32,
}

impl<T: Scalar> SimConfig<T> {
    pub fn new(bins: usize, threads: usize, ratio: u64, total_ops: u64, adversary: AdversaryKind) -> Self {
        Self {
            bins,
            threads,
            ratio,
            total_ops,
            adversary,
            seed: 1,
            schedule_seed: 1,
            weight: WeightDistribution::Unit,
            params: PotentialParams::default(),
            snapshot_every: 1,
            reads_per_update: 0,
        }
    }

    /// `C n`, the contention threshold and the window length.
    pub fn threshold(&self) -> u64 {
        self.ratio * self.threads as u64
    }

    /// Whether `m >= 4 C n`.
    pub fn in_analyzed_regime(&self) -> bool {
        self.bins as u64 >= 4 * self.threshold()
    }

    pub fn schedule(&self) -> Result<Schedule, ScheduleError> {
        Schedule::new(self.adversary, self.threads, self.total_ops, self.schedule_seed)
    }
}

/// One completed increment.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationRecord<T> {
    pub op: u64,
    pub thread: usize,
    /// Global step of the first read.
    pub start: u64,
    /// Global step of the update.
    pub finish: u64,
    /// 1-based position in update order.
    pub completion: u64,
    /// Distinct other operations with a step strictly inside `(start, finish)`.
    pub contention: u64,
    /// Other operations whose update landed strictly inside `(start, finish)`.
    /// Never exceeds `contention`.
    pub completed_within: u64,
    pub choice_i: usize,
    pub choice_j: usize,
    pub read_i: T,
    pub read_j: T,
    pub updated: usize,
    pub weight: T,
    /// The updated bin was no heavier than the other choice at update time.
    pub correct_choice: bool,
    /// No other operation read or wrote the updated bin inside `(start, finish)`.
    pub untouched: bool,
}

/// A counter read sampled right after an update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadProbe<T> {
    /// Number of updates applied before the read.
    pub after: u64,
    pub cell: usize,
    /// `m` times the weight of `cell`.
    pub value: T,
    /// `m` times the mean weight, i.e. the exact total.
    pub exact: T,
}

#[derive(Debug, Clone)]
pub struct SimOutcome<T> {
    pub loads: LoadVector<T>,
    pub records: Vec<OperationRecord<T>>,
    pub trajectory: Vec<PotentialSnapshot<T>>,
    pub reads: Vec<ReadProbe<T>>,
    /// Largest gap after any update.
    pub max_gap: T,
    pub steps: u64,
}

#[derive(Debug, Clone)]
struct Pending<T> {
    op: u64,
    start: u64,
    last_step: u64,
    contention: u64,
    completed_before: u64,
    choice_i: usize,
    read_i: T,
    choice_j: usize,
    read_j: T,
}

/// Last few accesses to a bin. An operation touches a bin at most twice
/// before its update, so the latest foreign access inside its interval is
/// always among the last three.
#[derive(Debug, Clone, Copy, Default)]
struct AccessRing {
    entries: [(u64, u64); 3],
    len: usize,
    head: usize,
}

impl AccessRing {
    fn push(&mut self, step: u64, op: u64) {
        self.entries[self.head] = (step, op);
        self.head = (self.head + 1) % 3;
        self.len = (self.len + 1).min(3);
    }

    fn foreign_since(&self, since: u64, op: u64) -> bool {
        self.entries[..self.len].iter().any(|&(s, o)| s > since && o != op)
    }
}

fn phase_error(e: &Event) -> ScheduleError {
    ScheduleError::PhaseOrder { op: e.op, thread: e.thread, phase: e.phase.name() }
}

/// Replays `events` (for example [`Schedule::events`]) against `config`.
pub fn simulate<T: Scalar, I: IntoIterator<Item = Event>>(
    config: &SimConfig<T>,
    events: I,
) -> Result<SimOutcome<T>, ScheduleError> {
    if config.threads == 0 {
        return Err(ScheduleError::NoThreads);
    }
    if config.snapshot_every == 0 {
        return Err(crate::BalanceError::InvalidParameter("snapshot_every must be positive".into()).into());
    }
    let m = config.bins;
    let mut tracker = PotentialTracker::new(LoadVector::zeros(m)?, &config.params)?;
    let mut rngs: Vec<StreamRng> = (0..config.threads).map(|t| stream_rng(config.seed, t as u64)).collect();
    let mut read_rng = stream_rng(config.seed, AUX_STREAM_BASE + 2);
    let mut pending: Vec<Option<Pending<T>>> = vec![None; config.threads];
    let mut access = vec![AccessRing::default(); m];
    let mut seen_ops = std::collections::HashSet::new();
    let mut out = SimOutcome {
        loads: LoadVector::zeros(m)?,
        records: Vec::new(),
        trajectory: Vec::new(),
        reads: Vec::new(),
        max_gap: T::zero(),
        steps: 0,
    };
    let m_scalar = T::of_usize(m);

    for (step, e) in events.into_iter().enumerate() {
        let step = step as u64;
        if e.thread >= config.threads {
            return Err(ScheduleError::UnknownThread { thread: e.thread, threads: config.threads });
        }
        // validate phase order for this thread
        let prev_step = match (&pending[e.thread], e.phase) {
            (None, Phase::Read1) => {
                if !seen_ops.insert(e.op) {
                    return Err(phase_error(&e));
                }
                None
            }
            (Some(p), Phase::Read1) => {
                return Err(ScheduleError::ThreadBusy { op: e.op, thread: e.thread, pending: p.op })
            }
            (Some(p), _) if p.op != e.op => {
                return Err(ScheduleError::ThreadBusy { op: e.op, thread: e.thread, pending: p.op })
            }
            (Some(p), Phase::Read2) if p.last_step == p.start => Some(p.last_step),
            (Some(p), Phase::Update) if p.last_step > p.start => Some(p.last_step),
            _ => return Err(phase_error(&e)),
        };

        // contention: count this operation once for every other pending
        // operation whose interval it enters
        for (t, slot) in pending.iter_mut().enumerate() {
            if t == e.thread {
                continue;
            }
            if let Some(x) = slot {
                if prev_step.is_none_or(|p| p < x.start) {
                    x.contention += 1;
                }
            }
        }

        let rng = &mut rngs[e.thread];
        match e.phase {
            Phase::Read1 => {
                let i = rng.random_range(0..m);
                access[i].push(step, e.op);
                pending[e.thread] = Some(Pending {
                    op: e.op,
                    start: step,
                    last_step: step,
                    contention: 0,
                    completed_before: out.records.len() as u64,
                    choice_i: i,
                    read_i: tracker.loads().get(i),
                    choice_j: 0,
                    read_j: T::zero(),
                });
            }
            Phase::Read2 => {
                let j = rng.random_range(0..m);
                access[j].push(step, e.op);
                let p = pending[e.thread].as_mut().expect("validated above");
                p.choice_j = j;
                p.read_j = tracker.loads().get(j);
                p.last_step = step;
            }
            Phase::Update => {
                let p = pending[e.thread].take().expect("validated above");
                let bin = lighter(p.choice_i, p.read_i, p.choice_j, p.read_j);
                let other = if bin == p.choice_i { p.choice_j } else { p.choice_i };
                let loads = tracker.loads();
                let correct_choice = loads.get(bin) <= loads.get(other);
                let untouched = !access[bin].foreign_since(p.start, p.op);
                access[bin].push(step, p.op);
                let w: T = config.weight.sample(rng);
                tracker.add(bin, w)?;
                let completion = out.records.len() as u64 + 1;
                out.max_gap = out.max_gap.max(tracker.gap());
                if completion.is_multiple_of(config.snapshot_every) {
                    out.trajectory.push(tracker.snapshot(completion));
                }
                for _ in 0..config.reads_per_update {
                    let cell = read_rng.random_range(0..m);
                    out.reads.push(ReadProbe {
                        after: completion,
                        cell,
                        value: m_scalar * tracker.loads().get(cell),
                        exact: tracker.total(),
                    });
                }
                out.records.push(OperationRecord {
                    op: p.op,
                    thread: e.thread,
                    start: p.start,
                    finish: step,
                    completion,
                    contention: p.contention,
                    completed_within: completion - 1 - p.completed_before,
                    choice_i: p.choice_i,
                    choice_j: p.choice_j,
                    read_i: p.read_i,
                    read_j: p.read_j,
                    updated: bin,
                    weight: w,
                    correct_choice,
                    untouched,
                });
            }
        }
        out.steps = step + 1;
    }
    out.loads = tracker.into_loads();
    Ok(out)
}

/// Generates the configured schedule and replays it.
pub fn run_simulation<T: Scalar>(config: &SimConfig<T>) -> Result<SimOutcome<T>, ScheduleError> {
    let schedule = config.schedule()?;
    simulate(config, schedule.events())
}

pub const OPS_HEADER: &str = "op,thread,start,finish,contention,choice_i,choice_j,updated,correct";

pub fn write_ops_csv<T: Scalar, W: std::io::Write>(mut out: W, records: &[OperationRecord<T>]) -> std::io::Result<()> {
    writeln!(out, "{OPS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.op, r.thread, r.start, r.finish, r.contention, r.choice_i, r.choice_j, r.updated, r.correct_choice
        )?;
    }
    Ok(())
}
