//! The relaxed MultiQueue: `m` locked FIFO queues stamped by a shared
//! logical clock, uniform enqueue and two-choice dequeue.

use std::collections::VecDeque;
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use rand::Rng;

use crate::rng::{stream_rng, StreamRng};
use crate::StructureError;

/// Sentinel top stamp of an empty queue; loses every comparison.
const EMPTY: u64 = u64::MAX;
/// `try_lock` attempts on the chosen queue before redrawing both choices.
const LOCK_SPINS: usize = 8;

/// Total order on elements: clock stamp, then enqueuing thread, then that
/// thread's sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    pub stamp: u64,
    pub thread: u32,
    pub seq: u64,
}

#[derive(Debug)]
struct Lane<E> {
    items: Mutex<LaneItems<E>>,
    /// Stamp at the head, readable without the lock.
    top: AtomicU64,
}

#[derive(Debug)]
struct LaneItems<E> {
    queue: VecDeque<(Key, E)>,
    last_released: Option<u64>,
}

/// A removed element with the queue it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dequeued<E> {
    pub key: Key,
    pub queue: usize,
    pub value: E,
}

#[derive(Debug)]
pub struct MultiQueue<E> {
    lanes: Box<[Lane<E>]>,
    clock: AtomicU64,
    order_violations: AtomicU64,
}

impl<E> MultiQueue<E> {
    pub fn new(m: usize) -> Result<Self, StructureError> {
        if m == 0 {
            return Err(StructureError::NotPositive { what: "queue count" });
        }
        let lanes = (0..m)
            .map(|_| Lane {
                items: Mutex::new(LaneItems { queue: VecDeque::new(), last_released: None }),
                top: AtomicU64::new(EMPTY),
            })
            .collect();
        Ok(Self { lanes, clock: AtomicU64::new(0), order_violations: AtomicU64::new(0) })
    }

    pub fn queues(&self) -> usize {
        self.lanes.len()
    }

    /// Next stamp the clock will hand out.
    pub fn clock(&self) -> u64 {
        self.clock.load(Ordering::SeqCst)
    }

    /// Per-queue order violations seen by `DeleteMin`. Always zero unless
    /// the structure is broken.
    pub fn order_violations(&self) -> u64 {
        self.order_violations.load(Ordering::SeqCst)
    }

    /// Per-thread handle holding the random stream and tiebreak sequence.
    pub fn handle(&self, thread: u32, seed: u64) -> QueueHandle<'_, E> {
        QueueHandle { queue: self, thread, seq: 0, rng: stream_rng(seed, thread as u64) }
    }

    /// Appends `value` to queue `lane`. The stamp is read under the queue's
    /// lock, so every queue stays sorted and stamps respect real time.
    pub fn enqueue_into(&self, lane: usize, value: E, thread: u32, seq: u64) -> Key {
        let l = &self.lanes[lane];
        let mut items = l.items.lock();
        let key = Key { stamp: self.clock.fetch_add(1, Ordering::SeqCst), thread, seq };
        if items.queue.is_empty() {
            l.top.store(key.stamp, Ordering::Release);
        }
        items.queue.push_back((key, value));
        key
    }

    /// Two-choice removal with the first probe pair given; later probes
    /// (after losing a lock race) draw from `rng`.
    pub fn dequeue_from<R: Rng + ?Sized>(&self, i: usize, j: usize, rng: &mut R) -> Option<Dequeued<E>> {
        self.probe(i, j, rng, false).map(|(d, _)| d)
    }

    fn probe<R: Rng + ?Sized>(
        &self,
        mut i: usize,
        mut j: usize,
        rng: &mut R,
        sequenced: bool,
    ) -> Option<(Dequeued<E>, Option<u64>)> {
        let m = self.lanes.len();
        loop {
            let ti = self.lanes[i].top.load(Ordering::Acquire);
            let tj = self.lanes[j].top.load(Ordering::Acquire);
            if ti == EMPTY && tj == EMPTY {
                return None;
            }
            let lane = if tj < ti { j } else { i };
            if let Some(d) = self.try_delete_min(lane, sequenced) {
                return Some(d);
            }
            i = rng.random_range(0..m);
            j = rng.random_range(0..m);
        }
    }

    /// Takes one clock tick. Recorders use it to place invocations and
    /// responses on the same timeline as the stamps.
    pub fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst)
    }

    /// `DeleteMin` on one queue, giving up if the lock stays busy or the
    /// queue turned out empty. With `sequenced`, also ticks the clock while
    /// holding the lock.
    fn try_delete_min(&self, lane: usize, sequenced: bool) -> Option<(Dequeued<E>, Option<u64>)> {
        let l = &self.lanes[lane];
        let mut items = (0..LOCK_SPINS).find_map(|_| {
            let g = l.items.try_lock();
            if g.is_none() {
                std::hint::spin_loop();
            }
            g
        })?;
        let (key, value) = items.queue.pop_front()?;
        let seq = sequenced.then(|| self.tick());
        l.top.store(items.queue.front().map_or(EMPTY, |(k, _)| k.stamp), Ordering::Release);
        if items.last_released.is_some_and(|prev| prev >= key.stamp) {
            self.order_violations.fetch_add(1, Ordering::SeqCst);
            log::error!("queue {lane} released stamp {} out of order", key.stamp);
        }
        items.last_released = Some(key.stamp);
        Some((Dequeued { key, queue: lane, value }, seq))
    }

    /// Empties every queue (each in its own order). For teardown only.
    pub fn drain(&self) -> Vec<Dequeued<E>> {
        let mut out = Vec::new();
        for (lane, l) in self.lanes.iter().enumerate() {
            let mut items = l.items.lock();
            out.extend(items.queue.drain(..).map(|(key, value)| Dequeued { key, queue: lane, value }));
            l.top.store(EMPTY, Ordering::Release);
        }
        out
    }

    /// Number of stored elements. Exact only when quiescent.
    pub fn len(&self) -> usize {
        self.lanes.iter().map(|l| l.items.lock().queue.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One thread's view of a [`MultiQueue`].
#[derive(Debug)]
pub struct QueueHandle<'a, E> {
    queue: &'a MultiQueue<E>,
    thread: u32,
    seq: u64,
    rng: StreamRng,
}

impl<E> QueueHandle<'_, E> {
    /// Inserts into a uniformly random queue.
    pub fn enqueue(&mut self, value: E) -> Key {
        let lane = self.rng.random_range(0..self.queue.queues());
        let seq = self.seq;
        self.seq += 1;
        self.queue.enqueue_into(lane, value, self.thread, seq)
    }

    /// Removes the head of the better of two random queues, or `None` when
    /// both probed queues are empty.
    pub fn dequeue(&mut self) -> Option<Dequeued<E>> {
        let m = self.queue.queues();
        let i = self.rng.random_range(0..m);
        let j = self.rng.random_range(0..m);
        self.queue.dequeue_from(i, j, &mut self.rng)
    }

    /// [`Self::dequeue`] that also returns a clock tick taken under the
    /// winning queue's lock, i.e. at the linearization point. An empty
    /// result ticks after the probes.
    pub fn dequeue_sequenced(&mut self) -> (Option<Dequeued<E>>, u64) {
        let m = self.queue.queues();
        let i = self.rng.random_range(0..m);
        let j = self.rng.random_range(0..m);
        match self.queue.probe(i, j, &mut self.rng, true) {
            Some((d, seq)) => (Some(d), seq.expect("sequenced probe ticks")),
            None => (None, self.queue.tick()),
        }
    }
}

/// Shadow set of live stamps answering rank queries in `O(log n)`.
///
/// Backed by a Fenwick tree indexed by stamp, so memory grows with the
/// largest stamp seen. Stamps from one [`MultiQueue`] clock are dense.
#[derive(Debug, Clone, Default)]
pub struct RankOracle {
    tree: Vec<u32>,
    live: Vec<bool>,
    count: usize,
}

impl RankOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, stamp: u64) -> bool {
        self.live.get(stamp as usize).copied().unwrap_or(false)
    }

    fn grow(&mut self, stamp: usize) {
        if stamp < self.live.len() {
            return;
        }
        let cap = (stamp + 1).next_power_of_two().max(64);
        self.live.resize(cap, false);
        self.tree = vec![0; cap + 1];
        for (s, _) in self.live.iter().enumerate().filter(|(_, &l)| l) {
            let mut k = s + 1;
            while k <= cap {
                self.tree[k] += 1;
                k += k & k.wrapping_neg();
            }
        }
    }

    fn update(&mut self, stamp: usize, add: bool) {
        let mut k = stamp + 1;
        while k < self.tree.len() {
            if add {
                self.tree[k] += 1;
            } else {
                self.tree[k] -= 1;
            }
            k += k & k.wrapping_neg();
        }
    }

    /// Adds a stamp; returns false if it was already live.
    pub fn insert(&mut self, stamp: u64) -> bool {
        let s = stamp as usize;
        self.grow(s);
        if self.live[s] {
            return false;
        }
        self.live[s] = true;
        self.count += 1;
        self.update(s, true);
        true
    }

    pub fn remove(&mut self, stamp: u64) -> Result<(), StructureError> {
        if !self.contains(stamp) {
            return Err(StructureError::UnknownKey { stamp });
        }
        let s = stamp as usize;
        self.live[s] = false;
        self.count -= 1;
        self.update(s, false);
        Ok(())
    }

    /// Number of live stamps strictly smaller than `stamp`.
    pub fn rank_of(&self, stamp: u64) -> Result<u64, StructureError> {
        if !self.contains(stamp) {
            return Err(StructureError::UnknownKey { stamp });
        }
        let mut k = stamp as usize;
        let mut sum = 0u64;
        while k > 0 {
            sum += self.tree[k] as u64;
            k &= k - 1;
        }
        Ok(sum)
    }
}

/// Rank of one dequeued element at the moment it was removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSample {
    pub seq: u64,
    pub rank: u64,
    pub queue: usize,
    pub stamp: u64,
}

pub const RANK_HEADER: &str = "seq,rank,queue,stamp";

pub fn write_rank_csv<W: Write>(mut out: W, samples: &[RankSample]) -> io::Result<()> {
    writeln!(out, "{RANK_HEADER}")?;
    for s in samples {
        writeln!(out, "{},{},{},{}", s.seq, s.rank, s.queue, s.stamp)?;
    }
    Ok(())
}

/// Single-threaded quality run: `prefill` enqueues, then `dequeues`
/// two-choice removals, each ranked against the exact live set.
pub fn rank_experiment(m: usize, prefill: u64, dequeues: u64, seed: u64) -> Result<Vec<RankSample>, StructureError> {
    let q = MultiQueue::<()>::new(m)?;
    let mut oracle = RankOracle::new();
    let mut h = q.handle(0, seed);
    for _ in 0..prefill {
        oracle.insert(h.enqueue(()).stamp);
    }
    let mut out = Vec::with_capacity(dequeues as usize);
    for seq in 0..dequeues {
        let Some(d) = h.dequeue() else { continue };
        let rank = oracle.rank_of(d.key.stamp)?;
        oracle.remove(d.key.stamp)?;
        out.push(RankSample { seq, rank, queue: d.queue, stamp: d.key.stamp });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_queue_is_fifo() {
        let q = MultiQueue::new(1).unwrap();
        let mut h = q.handle(0, 1);
        let a = h.enqueue('a');
        let b = h.enqueue('b');
        h.enqueue('c');
        assert!(b.stamp > a.stamp);
        let out: Vec<char> = (0..3).map(|_| h.dequeue().unwrap().value).collect();
        assert_eq!(out, vec!['a', 'b', 'c']);
        assert!(h.dequeue().is_none());
        assert!(MultiQueue::<u8>::new(0).is_err());
    }

    #[test]
    fn smaller_head_wins() {
        let q = MultiQueue::new(2).unwrap();
        let mut rng = stream_rng(0, 0);
        for k in 0..8u32 {
            // stamps 0..8, evens to queue 0 and odds to queue 1
            q.enqueue_into((k % 2) as usize, k, 0, k as u64);
        }
        q.dequeue_from(0, 1, &mut rng);
        q.dequeue_from(0, 1, &mut rng);
        // heads are now 2 (queue 0) and 3 (queue 1)
        assert_eq!(q.dequeue_from(1, 0, &mut rng).unwrap().key.stamp, 2);
        // an empty queue loses
        let e = MultiQueue::new(2).unwrap();
        e.enqueue_into(1, 9u8, 0, 0);
        assert_eq!(e.dequeue_from(0, 1, &mut rng).unwrap().value, 9);
        assert!(e.dequeue_from(0, 1, &mut rng).is_none());
    }

    #[test]
    fn oracle_ranks() {
        let mut o = RankOracle::new();
        assert!(o.insert(7));
        assert_eq!(o.rank_of(7), Ok(0));
        for s in [1, 5, 9] {
            o.insert(s);
        }
        o.remove(7).unwrap();
        assert_eq!(o.rank_of(9), Ok(2));
        assert_eq!(o.rank_of(1), Ok(0));
        assert_eq!(o.rank_of(7), Err(StructureError::UnknownKey { stamp: 7 }));
        assert!(o.remove(100).is_err());
        // growth keeps existing members
        o.insert(10_000);
        assert_eq!(o.rank_of(10_000), Ok(3));
        assert_eq!(o.len(), 4);
    }

    #[test]
    fn drain_returns_everything() {
        let q = MultiQueue::new(4).unwrap();
        let mut h = q.handle(0, 3);
        for k in 0..100 {
            h.enqueue(k);
        }
        let mut vals: Vec<i32> = q.drain().into_iter().map(|d| d.value).collect();
        vals.sort_unstable();
        assert_eq!(vals, (0..100).collect::<Vec<_>>());
        assert!(q.is_empty());
        assert!(h.dequeue().is_none());
    }

    #[test]
    fn rank_csv() {
        let mut buf = Vec::new();
        write_rank_csv(&mut buf, &[RankSample { seq: 0, rank: 3, queue: 1, stamp: 9 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "seq,rank,queue,stamp\n0,3,1,9\n");
    }
}
