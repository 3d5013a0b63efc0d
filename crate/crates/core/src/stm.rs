//! Word-based TL2 over an array of integer cells, with either an exact
//! fetch-and-add global clock or a MultiCounter clock that writes versions
//! `Δ` into the future.
//!
//! The MultiCounter mode is safe with high probability only: if the
//! counter's skew ever exceeds `Δ`, a commit can be validated against a
//! stale read version. Callers check state afterwards (see
//! [`StmRun::consistent`]).

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::multicounter::MultiCounter;
use crate::rng::{stream_rng, StreamRng, AUX_STREAM_BASE};
use crate::workload::pin_current;
use crate::StructureError;

const LOCK_BIT: u64 = 1;

/// Version lock plus value. The lock word is `version << 1 | locked`.
#[derive(Debug, Default)]
pub struct VersionedCell {
    lock: AtomicU64,
    value: AtomicU64,
}

impl VersionedCell {
    pub fn version(&self) -> u64 {
        self.lock.load(Ordering::Acquire) >> 1
    }

    pub fn is_locked(&self) -> bool {
        self.lock.load(Ordering::Acquire) & LOCK_BIT != 0
    }

    pub fn value(&self) -> u64 {
        self.value.load(Ordering::Acquire)
    }
}

/// Which global clock drives read and write versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockKind {
    Exact,
    MultiCounter { cells: usize, delta: u64 },
}

impl ClockKind {
    /// MultiCounter clock with the default offset for `cells`.
    pub fn multicounter(cells: usize) -> Self {
        ClockKind::MultiCounter { cells, delta: default_delta(cells) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClockKind::Exact => "exact",
            ClockKind::MultiCounter { .. } => "multicounter",
        }
    }

    pub fn delta(&self) -> u64 {
        match *self {
            ClockKind::Exact => 0,
            ClockKind::MultiCounter { delta, .. } => delta,
        }
    }
}

/// `16 m ln m`, rounded up and at least 1: well above the skew a
/// MultiCounter over `m` cells shows with high probability.
pub fn default_delta(cells: usize) -> u64 {
    let m = cells as f64;
    ((16.0 * m * m.ln()).ceil() as u64).max(1)
}

#[derive(Debug)]
enum Clock {
    Exact(AtomicU64),
    Multi { counter: MultiCounter, delta: u64 },
}

/// Why a transaction gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Abort {
    /// The cell was locked by another committer.
    Locked { cell: usize },
    /// The cell carries a version newer than the read version.
    Future { cell: usize, version: u64 },
    /// The lock word changed while the value was being read.
    Changed { cell: usize },
    /// Read-set validation at commit failed.
    Invalid { cell: usize },
}

/// Per-thread clock state: random stream for MultiCounter draws and the
/// largest timestamp this thread has encountered.
#[derive(Debug)]
pub struct ThreadClock {
    rng: StreamRng,
    t_max: u64,
}

impl ThreadClock {
    pub fn new(thread: u64, seed: u64) -> Self {
        Self { rng: stream_rng(seed, AUX_STREAM_BASE + 64 + thread), t_max: 0 }
    }

    pub fn t_max(&self) -> u64 {
        self.t_max
    }
}

/// The transactional memory: `objects` cells plus the global clock.
#[derive(Debug)]
pub struct Stm {
    cells: Box<[VersionedCell]>,
    clock: Clock,
}

impl Stm {
    pub fn new(objects: usize, kind: ClockKind) -> Result<Self, StructureError> {
        if objects == 0 {
            return Err(StructureError::NotPositive { what: "object count" });
        }
        let clock = match kind {
            ClockKind::Exact => Clock::Exact(AtomicU64::new(0)),
            ClockKind::MultiCounter { cells, delta } => Clock::Multi { counter: MultiCounter::new(cells)?, delta },
        };
        Ok(Self { cells: (0..objects).map(|_| VersionedCell::default()).collect(), clock })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, i: usize) -> &VersionedCell {
        &self.cells[i]
    }

    /// Sum of all values. Exact only when no commit is in flight.
    pub fn total(&self) -> u64 {
        self.cells.iter().map(VersionedCell::value).sum()
    }

    fn read_clock(&self, tc: &mut ThreadClock) -> u64 {
        match &self.clock {
            Clock::Exact(g) => g.load(Ordering::SeqCst),
            Clock::Multi { counter, .. } => {
                tc.t_max = tc.t_max.max(counter.read(&mut tc.rng));
                tc.t_max
            }
        }
    }

    pub fn begin(&self, tc: &mut ThreadClock) -> Tx<'_> {
        Tx { stm: self, rv: self.read_clock(tc), reads: Vec::new(), writes: Vec::new() }
    }

    /// Bookkeeping after an abort. A future-version abort under the
    /// MultiCounter clock bumps the counter so that a lone thread still
    /// advances time past the version it tripped on.
    pub fn note_abort(&self, abort: &Abort, tc: &mut ThreadClock) {
        if let (Abort::Future { .. }, Clock::Multi { counter, .. }) = (abort, &self.clock) {
            counter.increment(&mut tc.rng);
        }
    }

    /// Runs `body` until it commits, returning its result, the write
    /// version and the number of aborts.
    pub fn atomically<R>(
        &self,
        tc: &mut ThreadClock,
        backoff_spins: u32,
        mut body: impl FnMut(&mut Tx<'_>) -> Result<R, Abort>,
    ) -> (R, u64, u64) {
        let mut aborts = 0u64;
        loop {
            let mut tx = self.begin(tc);
            let outcome = body(&mut tx).and_then(|r| tx.commit(tc).map(|wv| (r, wv)));
            match outcome {
                Ok((r, wv)) => return (r, wv, aborts),
                Err(a) => {
                    self.note_abort(&a, tc);
                    aborts += 1;
                    let spins = backoff_spins.saturating_mul(aborts.min(16) as u32);
                    (0..spins).for_each(|_| std::hint::spin_loop());
                }
            }
        }
    }
}

/// An active transaction with its read version and redo log.
#[derive(Debug)]
pub struct Tx<'s> {
    stm: &'s Stm,
    rv: u64,
    /// `(cell, version seen)`.
    reads: Vec<(usize, u64)>,
    /// `(cell, new value)`, one entry per cell.
    writes: Vec<(usize, u64)>,
}

impl<'s> Tx<'s> {
    pub fn read_version(&self) -> u64 {
        self.rv
    }

    /// Reads a cell; pending writes of this transaction are returned as is.
    pub fn read(&mut self, cell: usize) -> Result<u64, Abort> {
        if let Some(&(_, v)) = self.writes.iter().find(|(c, _)| *c == cell) {
            return Ok(v);
        }
        let c = &self.stm.cells[cell];
        let pre = c.lock.load(Ordering::Acquire);
        if pre & LOCK_BIT != 0 {
            return Err(Abort::Locked { cell });
        }
        if pre >> 1 > self.rv {
            return Err(Abort::Future { cell, version: pre >> 1 });
        }
        let value = c.value.load(Ordering::Acquire);
        if c.lock.load(Ordering::Acquire) != pre {
            return Err(Abort::Changed { cell });
        }
        self.reads.push((cell, pre >> 1));
        Ok(value)
    }

    pub fn write(&mut self, cell: usize, value: u64) {
        match self.writes.iter_mut().find(|(c, _)| *c == cell) {
            Some(w) => w.1 = value,
            None => self.writes.push((cell, value)),
        }
    }

    /// Runs the commit protocol to completion; returns the write version.
    pub fn commit(self, tc: &mut ThreadClock) -> Result<u64, Abort> {
        let mut c = self.committer();
        loop {
            match c.step(tc) {
                CommitStep::Pending => {}
                CommitStep::Committed(wv) => return Ok(wv),
                CommitStep::Aborted(a) => return Err(a),
            }
        }
    }

    /// The commit protocol as an explicit state machine, one shared-memory
    /// step per [`Committer::step`].
    pub fn committer(mut self) -> Committer<'s> {
        self.writes.sort_unstable_by_key(|w| w.0);
        Committer { tx: self, phase: CommitPhase::Lock(0), wv: 0, prior: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CommitPhase {
    Lock(usize),
    Clock,
    Validate(usize),
    Write(usize),
    Done,
}

/// Progress of a [`Committer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitStep {
    Pending,
    Committed(u64),
    Aborted(Abort),
}

/// Commit in progress: locks the write set in address order, takes a
/// write version, validates the read set, then writes and releases.
#[derive(Debug)]
pub struct Committer<'s> {
    tx: Tx<'s>,
    phase: CommitPhase,
    wv: u64,
    /// Versions of the write cells at the moment they were locked.
    prior: Vec<u64>,
}

impl Committer<'_> {
    fn release_locked(&mut self) {
        for (k, &(cell, _)) in self.tx.writes.iter().enumerate().take(self.prior.len()) {
            self.tx.stm.cells[cell].lock.store(self.prior[k] << 1, Ordering::Release);
        }
        self.prior.clear();
    }

    fn abort(&mut self, a: Abort) -> CommitStep {
        self.release_locked();
        self.phase = CommitPhase::Done;
        CommitStep::Aborted(a)
    }

    pub fn step(&mut self, tc: &mut ThreadClock) -> CommitStep {
        let stm = self.tx.stm;
        match self.phase {
            CommitPhase::Lock(k) if k < self.tx.writes.len() => {
                let cell = self.tx.writes[k].0;
                let word = &stm.cells[cell].lock;
                let cur = word.load(Ordering::Acquire);
                if cur & LOCK_BIT != 0
                    || word.compare_exchange(cur, cur | LOCK_BIT, Ordering::AcqRel, Ordering::Acquire).is_err()
                {
                    return self.abort(Abort::Locked { cell });
                }
                self.prior.push(cur >> 1);
                self.phase = CommitPhase::Lock(k + 1);
            }
            CommitPhase::Lock(_) => self.phase = CommitPhase::Clock,
            CommitPhase::Clock => {
                self.wv = match &stm.clock {
                    Clock::Exact(g) => g.fetch_add(1, Ordering::SeqCst) + 1,
                    Clock::Multi { counter, delta } => {
                        let seen = self.tx.reads.iter().map(|r| r.1).chain(self.prior.iter().copied());
                        tc.t_max = seen.fold(tc.t_max.max(self.tx.rv), u64::max);
                        counter.increment(&mut tc.rng);
                        tc.t_max + delta
                    }
                };
                self.phase = CommitPhase::Validate(0);
            }
            CommitPhase::Validate(k) if k < self.tx.reads.len() => {
                let cell = self.tx.reads[k].0;
                let word = stm.cells[cell].lock.load(Ordering::Acquire);
                let mine = self.tx.writes.binary_search_by_key(&cell, |w| w.0).is_ok();
                if (word & LOCK_BIT != 0 && !mine) || word >> 1 > self.tx.rv {
                    return self.abort(Abort::Invalid { cell });
                }
                self.phase = CommitPhase::Validate(k + 1);
            }
            CommitPhase::Validate(_) => self.phase = CommitPhase::Write(0),
            CommitPhase::Write(k) if k < self.tx.writes.len() => {
                let (cell, value) = self.tx.writes[k];
                let c = &stm.cells[cell];
                c.value.store(value, Ordering::Release);
                c.lock.store(self.wv << 1, Ordering::Release);
                self.phase = CommitPhase::Write(k + 1);
            }
            CommitPhase::Write(_) => {
                self.prior.clear();
                self.phase = CommitPhase::Done;
                return CommitStep::Committed(self.wv);
            }
            CommitPhase::Done => panic!("committer stepped after finishing"),
        }
        CommitStep::Pending
    }
}

/// Parameters of a timed STM benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StmBenchConfig {
    pub threads: usize,
    pub objects: usize,
    pub duration: Duration,
    pub clock: ClockKind,
    pub seed: u64,
    pub pin: bool,
    /// Spin iterations per abort before retrying, scaled by the abort
    /// streak. Zero retries immediately.
    pub backoff_spins: u32,
}

/// Result of one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct StmRun {
    pub commits: u64,
    pub aborts: u64,
    pub elapsed: Duration,
    pub commits_per_sec: f64,
    pub aborts_per_commit: f64,
    /// Final sum of the array.
    pub total: u64,
    /// `total == 2 * commits`.
    pub consistent: bool,
}

pub const STM_HEADER: &str = "threads,objects,clock,delta,commits_per_sec,aborts_per_commit,consistent";

/// Each worker repeatedly picks two random cells and increments both in
/// one transaction, retrying on abort.
pub fn run_stm_benchmark(cfg: &StmBenchConfig) -> Result<StmRun, StructureError> {
    if cfg.threads == 0 {
        return Err(StructureError::NotPositive { what: "thread count" });
    }
    let stm = Stm::new(cfg.objects, cfg.clock)?;
    let stop = AtomicBool::new(false);
    let start = Instant::now();
    let per_thread: Vec<(u64, u64)> = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|t| {
                let (stm, stop) = (&stm, &stop);
                s.spawn(move || {
                    if cfg.pin {
                        pin_current(t);
                    }
                    let mut rng = stream_rng(cfg.seed, t as u64);
                    let mut tc = ThreadClock::new(t as u64, cfg.seed);
                    let (mut commits, mut aborts) = (0u64, 0u64);
                    while !stop.load(Ordering::Relaxed) {
                        let a = rng.random_range(0..cfg.objects);
                        let b = rng.random_range(0..cfg.objects);
                        let (_, _, n) = stm.atomically(&mut tc, cfg.backoff_spins, |tx| {
                            let va = tx.read(a)?;
                            tx.write(a, va + 1);
                            let vb = tx.read(b)?;
                            tx.write(b, vb + 1);
                            Ok(())
                        });
                        commits += 1;
                        aborts += n;
                    }
                    (commits, aborts)
                })
            })
            .collect();
        thread::sleep(cfg.duration);
        stop.store(true, Ordering::Relaxed);
        handles.into_iter().map(|h| h.join().expect("stm worker panicked")).collect()
    });
    let elapsed = start.elapsed();
    let commits: u64 = per_thread.iter().map(|r| r.0).sum();
    let aborts: u64 = per_thread.iter().map(|r| r.1).sum();
    let total = stm.total();
    Ok(StmRun {
        commits,
        aborts,
        elapsed,
        commits_per_sec: commits as f64 / elapsed.as_secs_f64(),
        aborts_per_commit: if commits == 0 { 0.0 } else { aborts as f64 / commits as f64 },
        total,
        consistent: total == 2 * commits,
    })
}
