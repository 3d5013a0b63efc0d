//! Timed multi-threaded drivers for the live structures, with optional
//! core pinning.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::multicounter::{CounterCell, MultiCounterOf, PackedCell, PaddedCell};
use crate::multiqueue::MultiQueue;
use crate::rng::stream_rng;
use crate::StructureError;

/// Hardware threads visible to this process.
pub fn hardware_threads() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Pins the calling thread to core `index % cores`. Returns whether the
/// pin took effect; failure is logged and otherwise ignored.
pub fn pin_current(index: usize) -> bool {
    let Some(cores) = core_affinity::get_core_ids().filter(|c| !c.is_empty()) else {
        log::warn!("core list unavailable; thread {index} left unpinned");
        return false;
    };
    let core = cores[index % cores.len()];
    let ok = core_affinity::set_for_current(core);
    if ok {
        log::debug!("thread {index} pinned to core {}", core.id);
    } else {
        log::warn!("pinning thread {index} to core {} failed", core.id);
    }
    ok
}

/// Runs `work(thread)` on `threads` scoped threads until `duration`
/// elapses, then joins them. Workers poll the returned flag.
fn timed<F, R>(threads: usize, duration: Duration, pin: bool, work: F) -> (Vec<R>, Duration)
where
    F: Fn(usize, &AtomicBool) -> R + Sync,
    R: Send,
{
    let stop = AtomicBool::new(false);
    let start = Instant::now();
    let results = thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (work, stop) = (&work, &stop);
                s.spawn(move || {
                    if pin {
                        pin_current(t);
                    }
                    work(t, stop)
                })
            })
            .collect();
        thread::sleep(duration);
        stop.store(true, Ordering::Relaxed);
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    (results, start.elapsed())
}

/// Operations between checks of the stop flag.
const BATCH: u64 = 256;

/// Which counter a throughput run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterKind {
    /// One shared atomic with `fetch_add`, the exact baseline.
    Exact,
    /// MultiCounter with packed cells.
    Multi,
    /// MultiCounter with one cell per cache block.
    MultiPadded,
}

impl CounterKind {
    pub fn name(self) -> &'static str {
        match self {
            CounterKind::Exact => "exact",
            CounterKind::Multi => "multi",
            CounterKind::MultiPadded => "multi-padded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterRun {
    pub increments: u64,
    pub elapsed: Duration,
    pub ops_per_sec: f64,
    /// Quiescent total equals the number of increments performed.
    pub conserved: bool,
}

fn run_multi<C: CounterCell>(threads: usize, cells: usize, duration: Duration, seed: u64, pin: bool) -> CounterRun {
    let counter = MultiCounterOf::<C>::new(cells).expect("cells checked positive");
    let (counts, elapsed) = timed(threads, duration, pin, |t, stop| {
        let mut rng = stream_rng(seed, t as u64);
        let mut done = 0u64;
        while !stop.load(Ordering::Relaxed) {
            for _ in 0..BATCH {
                counter.increment(&mut rng);
            }
            done += BATCH;
        }
        done
    });
    let increments = counts.iter().sum();
    finish(increments, elapsed, counter.exact_total() == increments)
}

fn finish(increments: u64, elapsed: Duration, conserved: bool) -> CounterRun {
    CounterRun { increments, elapsed, ops_per_sec: increments as f64 / elapsed.as_secs_f64(), conserved }
}

/// Increment throughput with `threads` workers. MultiCounter runs use
/// `ratio * threads` cells.
pub fn counter_throughput(
    kind: CounterKind,
    threads: usize,
    ratio: usize,
    duration: Duration,
    seed: u64,
    pin: bool,
) -> Result<CounterRun, StructureError> {
    if threads == 0 {
        return Err(StructureError::NotPositive { what: "thread count" });
    }
    if ratio == 0 {
        return Err(StructureError::NotPositive { what: "cells per thread" });
    }
    let cells = ratio * threads;
    Ok(match kind {
        CounterKind::Multi => run_multi::<PackedCell>(threads, cells, duration, seed, pin),
        CounterKind::MultiPadded => run_multi::<PaddedCell>(threads, cells, duration, seed, pin),
        CounterKind::Exact => {
            let counter = AtomicU64::new(0);
            let (counts, elapsed) = timed(threads, duration, pin, |_, stop| {
                let mut done = 0u64;
                while !stop.load(Ordering::Relaxed) {
                    for _ in 0..BATCH {
                        counter.fetch_add(1, Ordering::SeqCst);
                    }
                    done += BATCH;
                }
                done
            });
            let increments = counts.iter().sum();
            finish(increments, elapsed, counter.load(Ordering::SeqCst) == increments)
        }
    })
}

/// Bit set over one producer's sequence numbers, allocated in segments on
/// first touch so memory tracks the number of elements produced.
struct SeenBits {
    segments: Box<[OnceLock<Box<[AtomicU64]>>]>,
}

const SEGMENT_WORDS: usize = 1 << 14;
const SEGMENT_BITS: u64 = (SEGMENT_WORDS * 64) as u64;
const MAX_SEGMENTS: usize = 1 << 14;

impl SeenBits {
    fn new() -> Self {
        Self { segments: (0..MAX_SEGMENTS).map(|_| OnceLock::new()).collect() }
    }

    /// Marks `seq`; returns false if it was already marked.
    fn mark(&self, seq: u64) -> bool {
        let seg = (seq / SEGMENT_BITS) as usize;
        let words = self.segments[seg].get_or_init(|| (0..SEGMENT_WORDS).map(|_| AtomicU64::new(0)).collect());
        let bit = seq % SEGMENT_BITS;
        let mask = 1u64 << (bit % 64);
        words[(bit / 64) as usize].fetch_or(mask, Ordering::Relaxed) & mask == 0
    }

    /// Number of sequence numbers below `produced` that were never marked.
    fn missing(&self, produced: u64) -> u64 {
        (0..produced)
            .filter(|&s| {
                let seg = (s / SEGMENT_BITS) as usize;
                let bit = s % SEGMENT_BITS;
                !self.segments[seg]
                    .get()
                    .is_some_and(|w| w[(bit / 64) as usize].load(Ordering::Relaxed) & (1 << (bit % 64)) != 0)
            })
            .count() as u64
    }
}

/// Outcome of a mixed enqueue/dequeue stress run.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueStress {
    pub enqueued: u64,
    pub dequeued: u64,
    /// Dequeues that found both probed queues empty.
    pub empty_probes: u64,
    /// Elements left at the end and removed by the drain.
    pub drained: u64,
    /// Elements enqueued but never removed.
    pub lost: u64,
    /// Removals of an element that had already been removed.
    pub duplicated: u64,
    /// Elements handed out by a queue below its previous head.
    pub order_violations: u64,
    pub elapsed: Duration,
    pub ops_per_sec: f64,
}

impl QueueStress {
    pub fn is_clean(&self) -> bool {
        self.lost == 0 && self.duplicated == 0 && self.order_violations == 0
    }
}

/// Every worker flips a fair coin per operation between enqueue and
/// dequeue. Each element is `(producer, seq)`; removals are checked off in
/// per-producer bit sets, and the final drain accounts for the rest.
pub fn queue_stress(
    threads: usize,
    queues: usize,
    duration: Duration,
    seed: u64,
    pin: bool,
) -> Result<QueueStress, StructureError> {
    if threads == 0 {
        return Err(StructureError::NotPositive { what: "thread count" });
    }
    let q = MultiQueue::<(u32, u64)>::new(queues)?;
    let seen: Vec<SeenBits> = (0..threads).map(|_| SeenBits::new()).collect();
    let duplicated = AtomicU64::new(0);
    let max_seq = MAX_SEGMENTS as u64 * SEGMENT_BITS;
    let record = |(p, s): (u32, u64)| {
        if !seen[p as usize].mark(s) {
            duplicated.fetch_add(1, Ordering::Relaxed);
        }
    };
    let (per_thread, elapsed) = timed(threads, duration, pin, |t, stop| {
        let mut h = q.handle(t as u32, seed);
        let mut coin = stream_rng(seed, crate::rng::AUX_STREAM_BASE + 16 + t as u64);
        let (mut produced, mut removed, mut empty) = (0u64, 0u64, 0u64);
        while !stop.load(Ordering::Relaxed) && produced < max_seq {
            for _ in 0..BATCH {
                if coin.random::<bool>() && produced < max_seq {
                    h.enqueue((t as u32, produced));
                    produced += 1;
                } else if let Some(d) = h.dequeue() {
                    record(d.value);
                    removed += 1;
                } else {
                    empty += 1;
                }
            }
        }
        (produced, removed, empty)
    });
    let drained_items = q.drain();
    let drained = drained_items.len() as u64;
    drained_items.into_iter().for_each(|d| record(d.value));
    let lost = per_thread.iter().zip(&seen).map(|(&(p, _, _), bits)| bits.missing(p)).sum();
    let enqueued: u64 = per_thread.iter().map(|r| r.0).sum();
    let dequeued: u64 = per_thread.iter().map(|r| r.1).sum();
    let empty_probes: u64 = per_thread.iter().map(|r| r.2).sum();
    Ok(QueueStress {
        enqueued,
        dequeued,
        empty_probes,
        drained,
        lost,
        duplicated: duplicated.load(Ordering::Relaxed),
        order_violations: q.order_violations(),
        elapsed,
        ops_per_sec: (enqueued + dequeued + empty_probes) as f64 / elapsed.as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seen_bits_flag_duplicates_and_gaps() {
        let bits = SeenBits::new();
        assert!(bits.mark(0));
        assert!(bits.mark(SEGMENT_BITS + 3));
        assert!(!bits.mark(0));
        assert_eq!(bits.missing(1), 0);
        assert_eq!(bits.missing(SEGMENT_BITS + 4), SEGMENT_BITS + 2);
    }

    #[test]
    fn short_runs_conserve() {
        for kind in [CounterKind::Exact, CounterKind::Multi, CounterKind::MultiPadded] {
            let r = counter_throughput(kind, 2, 2, Duration::from_millis(20), 1, false).unwrap();
            assert!(r.conserved && r.increments > 0, "{}", kind.name());
        }
        assert!(counter_throughput(CounterKind::Multi, 0, 1, Duration::ZERO, 1, false).is_err());
        let s = queue_stress(2, 4, Duration::from_millis(20), 1, true).unwrap();
        assert!(s.is_clean(), "{s:?}");
        assert_eq!(s.enqueued, s.dequeued + s.drained);
    }
}
