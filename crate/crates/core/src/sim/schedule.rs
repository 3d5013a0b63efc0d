//! Oblivious schedules of read/read/update steps.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::error::ScheduleError;
use crate::rng::{stream_rng, StreamRng, AUX_STREAM_BASE};

/// Low-level step of an increment operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Read1,
    Read2,
    Update,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Read1 => "read1",
            Phase::Read2 => "read2",
            Phase::Update => "update",
        }
    }
}

/// One shared-memory step: `thread` performs `phase` of operation `op`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub thread: usize,
    pub op: u64,
    pub phase: Phase,
}

/// Adversary strategies. All of them are fixed before any coin is flipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryKind {
    /// One operation at a time, threads taking turns.
    Serial,
    /// Threads take one step each in rotation; thread `t` starts its first
    /// operation in round `t mod 3`, which staggers the phases.
    RoundRobin,
    /// Each step belongs to a uniformly random thread (drawn from the
    /// schedule seed).
    RandomInterleave,
    /// `block` operations read back-to-back, then update back-to-back.
    Stampede { block: usize },
    /// A stampede of all `n` threads followed by `serial_len` serial
    /// operations, repeated.
    BlockReset { serial_len: u64 },
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryKind::Serial => write!(f, "serial"),
            AdversaryKind::RoundRobin => write!(f, "round-robin"),
            AdversaryKind::RandomInterleave => write!(f, "random-interleave"),
            AdversaryKind::Stampede { block } => write!(f, "stampede({block})"),
            AdversaryKind::BlockReset { serial_len } => write!(f, "block-reset({serial_len})"),
        }
    }
}

/// A schedule is a pure function of its kind, thread count, operation
/// budget and seed. Events are generated lazily by [`Schedule::events`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    kind: AdversaryKind,
    threads: usize,
    total_ops: u64,
    seed: u64,
}

impl Schedule {
    pub fn new(kind: AdversaryKind, threads: usize, total_ops: u64, seed: u64) -> Result<Self, ScheduleError> {
        if threads == 0 {
            return Err(ScheduleError::NoThreads);
        }
        if let AdversaryKind::Stampede { block } = kind {
            if block == 0 || block > threads {
                return Err(ScheduleError::BlockTooLarge { block, threads });
            }
        }
        Ok(Self { kind, threads, total_ops, seed })
    }

    pub fn kind(&self) -> AdversaryKind {
        self.kind
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn total_ops(&self) -> u64 {
        self.total_ops
    }

    pub fn events(&self) -> ScheduleIter {
        ScheduleIter::new(self)
    }
}

impl IntoIterator for &Schedule {
    type Item = Event;
    type IntoIter = ScheduleIter;

    fn into_iter(self) -> ScheduleIter {
        self.events()
    }
}

/// Lazy event stream of a [`Schedule`].
#[derive(Debug, Clone)]
pub struct ScheduleIter {
    kind: AdversaryKind,
    threads: usize,
    total_ops: u64,
    started: u64,
    buffered: VecDeque<Event>,
    // step-level generators
    pending: Vec<Option<(u64, Phase)>>,
    turn: u64,
    rng: StreamRng,
    block_rotation: usize,
    in_serial_stretch: bool,
}

impl ScheduleIter {
    fn new(s: &Schedule) -> Self {
        Self {
            kind: s.kind,
            threads: s.threads,
            total_ops: s.total_ops,
            started: 0,
            buffered: VecDeque::new(),
            pending: vec![None; s.threads],
            turn: 0,
            rng: stream_rng(s.seed, AUX_STREAM_BASE + 1),
            block_rotation: 0,
            in_serial_stretch: false,
        }
    }

    fn remaining(&self) -> u64 {
        self.total_ops - self.started
    }

    fn next_op(&mut self) -> u64 {
        let op = self.started;
        self.started += 1;
        op
    }

    fn push_serial(&mut self, count: u64) {
        for _ in 0..count.min(self.remaining()) {
            let thread = self.block_rotation;
            self.block_rotation = (self.block_rotation + 1) % self.threads;
            let op = self.next_op();
            for phase in [Phase::Read1, Phase::Read2, Phase::Update] {
                self.buffered.push_back(Event { thread, op, phase });
            }
        }
    }

    fn push_stampede(&mut self, block: usize) {
        let count = (block as u64).min(self.remaining()) as usize;
        let mut ops = Vec::with_capacity(count);
        for k in 0..count {
            let thread = (self.block_rotation + k) % self.threads;
            ops.push((thread, self.next_op()));
        }
        self.block_rotation = (self.block_rotation + count) % self.threads;
        for phase in [Phase::Read1, Phase::Read2, Phase::Update] {
            for &(thread, op) in &ops {
                self.buffered.push_back(Event { thread, op, phase });
            }
        }
    }

    /// Advances `thread` by one step, starting a new operation when idle.
    fn step_thread(&mut self, thread: usize) -> Option<Event> {
        let (op, phase) = match self.pending[thread] {
            Some((op, Phase::Read1)) => (op, Phase::Read2),
            Some((op, Phase::Read2)) => (op, Phase::Update),
            Some((_, Phase::Update)) | None => {
                if self.remaining() == 0 {
                    self.pending[thread] = None;
                    return None;
                }
                (self.next_op(), Phase::Read1)
            }
        };
        self.pending[thread] = if phase == Phase::Update { None } else { Some((op, phase)) };
        Some(Event { thread, op, phase })
    }

    fn any_pending(&self) -> bool {
        self.pending.iter().any(Option::is_some)
    }

    fn next_round_robin(&mut self) -> Option<Event> {
        let n = self.threads as u64;
        loop {
            if self.remaining() == 0 && !self.any_pending() {
                return None;
            }
            let thread = (self.turn % n) as usize;
            let round = self.turn / n;
            self.turn += 1;
            if self.pending[thread].is_none() && round < (thread as u64 % 3) {
                continue;
            }
            if let Some(e) = self.step_thread(thread) {
                return Some(e);
            }
        }
    }

    fn next_random(&mut self) -> Option<Event> {
        let eligible: Vec<usize> = if self.remaining() > 0 {
            (0..self.threads).collect()
        } else {
            (0..self.threads).filter(|&t| self.pending[t].is_some()).collect()
        };
        if eligible.is_empty() {
            return None;
        }
        let thread = eligible[self.rng.random_range(0..eligible.len())];
        self.step_thread(thread)
    }
}

impl Iterator for ScheduleIter {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if let Some(e) = self.buffered.pop_front() {
            return Some(e);
        }
        match self.kind {
            AdversaryKind::RoundRobin => return self.next_round_robin(),
            AdversaryKind::RandomInterleave => return self.next_random(),
            _ => {}
        }
        if self.remaining() == 0 {
            return None;
        }
        match self.kind {
            AdversaryKind::Serial => self.push_serial(1),
            AdversaryKind::Stampede { block } => self.push_stampede(block),
            AdversaryKind::BlockReset { serial_len } => {
                if self.in_serial_stretch && serial_len > 0 {
                    self.push_serial(serial_len);
                } else {
                    self.push_stampede(self.threads);
                }
                self.in_serial_stretch = !self.in_serial_stretch;
            }
            AdversaryKind::RoundRobin | AdversaryKind::RandomInterleave => unreachable!(),
        }
        self.buffered.pop_front()
    }
}
