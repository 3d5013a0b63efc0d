//! Relaxation costs of recorded histories.
//!
//! A history lists completed operations with a sequence number fixing one
//! linearization. Costs are measured against the strict sequential object
//! at that point: how far a counter read is from the true count, and how
//! many live elements a dequeue skipped. The recorded order is one valid
//! mapping, so costs are an upper-bound witness; [`cost_profiles`]
//! enumerates every mapping of a small history.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use thiserror::Error;

use crate::multicounter::{CounterCell, MultiCounterOf};
use crate::multiqueue::{MultiQueue, RankOracle};
use crate::rng::{stream_rng, AUX_STREAM_BASE};
use crate::sim::SimOutcome;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DlinError {
    #[error("operation {seq} responds at {respond}, before its invocation at {invoke}")]
    ResponseBeforeInvocation { seq: u64, invoke: u64, respond: u64 },
    #[error("sequence number {0} appears twice")]
    DuplicateSeq(u64),
    #[error("operation {first} finished before {second} started but is ordered after it")]
    RealTimeOrder { first: u64, second: u64 },
    #[error("operation {seq}: {kind} does not apply to a {object}")]
    KindMismatch { seq: u64, kind: OpKind, object: ObjectKind },
    #[error("operation {seq}: {kind} needs a {field} value")]
    MissingValue { seq: u64, kind: OpKind, field: &'static str },
    #[error("operation {seq}: element {element} was enqueued twice")]
    DuplicateElement { seq: u64, element: u64 },
    #[error("operation {seq}: element {element} is not in the queue")]
    UnknownElement { seq: u64, element: u64 },
    #[error("operation {seq}: value {value} is not an integer")]
    NonIntegral { seq: u64, value: f64 },
    #[error("no cost samples")]
    NoSamples,
    #[error("history has {0} operations; brute force is limited to {MAX_BRUTE_FORCE}")]
    TooLarge(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Increment,
    Read,
    Enqueue,
    Dequeue,
}

impl OpKind {
    pub fn code(self) -> &'static str {
        match self {
            OpKind::Increment => "inc",
            OpKind::Read => "read",
            OpKind::Enqueue => "enq",
            OpKind::Dequeue => "deq",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for OpKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inc" => Ok(OpKind::Increment),
            "read" => Ok(OpKind::Read),
            "enq" => Ok(OpKind::Enqueue),
            "deq" => Ok(OpKind::Dequeue),
            other => Err(format!("unknown operation kind {other:?}")),
        }
    }
}

/// The sequential object a history is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Counter,
    Queue,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectKind::Counter => "counter",
            ObjectKind::Queue => "queue",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Simulator,
    LiveThreads,
}

/// One completed operation. `seq` is its position in the recorded
/// linearization; `invoke` and `respond` are on a shared timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryOp {
    pub seq: u64,
    pub thread: u32,
    pub kind: OpKind,
    pub invoke: u64,
    pub respond: u64,
    pub arg: Option<u64>,
    pub ret: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    pub source: Source,
    /// Sorted by `seq`.
    pub ops: Vec<HistoryOp>,
}

pub const HISTORY_HEADER: &str = "seq,thread,kind,invoke,respond,arg,ret";

impl History {
    pub fn new(source: Source, mut ops: Vec<HistoryOp>) -> Self {
        ops.sort_by_key(|o| o.seq);
        Self { source, ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Checks intervals, unique sequence numbers, and that the recorded
    /// order never puts an operation before one that finished before it
    /// started.
    pub fn validate(&self) -> Result<(), DlinError> {
        for (k, op) in self.ops.iter().enumerate() {
            if op.respond < op.invoke {
                return Err(DlinError::ResponseBeforeInvocation { seq: op.seq, invoke: op.invoke, respond: op.respond });
            }
            if k > 0 && self.ops[k - 1].seq == op.seq {
                return Err(DlinError::DuplicateSeq(op.seq));
            }
        }
        // Real time is violated iff some later-ordered op finished before an
        // earlier-ordered one started: scan from the back keeping the
        // earliest response seen so far.
        let mut min_respond_after: Option<(u64, u64)> = None;
        for op in self.ops.iter().rev() {
            if let Some((respond, seq)) = min_respond_after {
                if respond < op.invoke {
                    return Err(DlinError::RealTimeOrder { first: seq, second: op.seq });
                }
            }
            if min_respond_after.is_none_or(|(r, _)| op.respond < r) {
                min_respond_after = Some((op.respond, op.seq));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{HISTORY_HEADER}")?;
        let opt = |v: Option<u64>| v.map_or(String::new(), |x| x.to_string());
        for o in &self.ops {
            writeln!(out, "{},{},{},{},{},{},{}", o.seq, o.thread, o.kind, o.invoke, o.respond, opt(o.arg), opt(o.ret))?;
        }
        Ok(())
    }

    /// Parses the line format written by [`History::write_csv`]. Blank
    /// lines, `#` comments and the header are skipped.
    pub fn read_csv<R: BufRead>(source: Source, input: R) -> Result<Self, DlinError> {
        let mut ops = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let line_no = k + 1;
            let err = |msg: String| DlinError::Parse { line: line_no, msg };
            let line = line.map_err(|e| err(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == HISTORY_HEADER {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str, name: &str| s.trim().parse::<u64>().map_err(|_| err(format!("bad {name} {s:?}")));
            let opt = |s: &str, name: &str| if s.trim().is_empty() { Ok(None) } else { num(s, name).map(Some) };
            ops.push(HistoryOp {
                seq: num(f[0], "seq")?,
                thread: f[1].trim().parse().map_err(|_| err(format!("bad thread {:?}", f[1])))?,
                kind: f[2].trim().parse().map_err(err)?,
                invoke: num(f[3], "invoke")?,
                respond: num(f[4], "respond")?,
                arg: opt(f[5], "arg")?,
                ret: opt(f[6], "ret")?,
            });
        }
        Ok(Self::new(source, ops))
    }
}

/// Cost of one operation under the recorded linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSample {
    pub seq: u64,
    pub kind: OpKind,
    pub cost: f64,
}

/// Replays `history` in `seq` order against the strict object. Counter
/// reads cost `|ret - count|` and increments cost 0 (`m` is implied by the
/// returned values); a dequeue costs the number of live elements enqueued
/// before the one it returned, or every live element if it returned empty.
pub fn linearize_costs(history: &History, object: ObjectKind) -> Result<Vec<CostSample>, DlinError> {
    history.validate()?;
    replay(&history.ops, object)
}

fn replay(ops: &[HistoryOp], object: ObjectKind) -> Result<Vec<CostSample>, DlinError> {
    let mut out = Vec::with_capacity(ops.len());
    let mut count = 0u64;
    let mut oracle = RankOracle::new();
    let mut ordinal: HashMap<u64, u64> = HashMap::new();
    let mut enqueued = 0u64;
    for op in ops {
        let mismatch = || DlinError::KindMismatch { seq: op.seq, kind: op.kind, object };
        let cost = match (object, op.kind) {
            (ObjectKind::Counter, OpKind::Increment) => {
                count += 1;
                0.0
            }
            (ObjectKind::Counter, OpKind::Read) => {
                let ret = op.ret.ok_or(DlinError::MissingValue { seq: op.seq, kind: op.kind, field: "ret" })?;
                ret.abs_diff(count) as f64
            }
            (ObjectKind::Queue, OpKind::Enqueue) => {
                let element = op.arg.ok_or(DlinError::MissingValue { seq: op.seq, kind: op.kind, field: "arg" })?;
                if ordinal.insert(element, enqueued).is_some() {
                    return Err(DlinError::DuplicateElement { seq: op.seq, element });
                }
                oracle.insert(enqueued);
                enqueued += 1;
                0.0
            }
            (ObjectKind::Queue, OpKind::Dequeue) => match op.ret {
                None => oracle.len() as f64,
                Some(element) => {
                    let unknown = DlinError::UnknownElement { seq: op.seq, element };
                    let &pos = ordinal.get(&element).ok_or(unknown.clone())?;
                    let rank = oracle.rank_of(pos).map_err(|_| unknown)?;
                    oracle.remove(pos).expect("rank_of succeeded");
                    rank as f64
                }
            },
            _ => return Err(mismatch()),
        };
        out.push(CostSample { seq: op.seq, kind: op.kind, cost });
    }
    Ok(out)
}

/// Share of costs above `R m ln m` for one `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exceedance {
    pub r: f64,
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub samples: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
    pub exceedance: Vec<Exceedance>,
}

/// Nearest-rank quantile of sorted data: the `ceil(q N)`-th smallest.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

pub fn tail_report(costs: &[f64], m: usize, r_values: &[f64]) -> Result<TailReport, DlinError> {
    if costs.is_empty() {
        return Err(DlinError::NoSamples);
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let scale = m as f64 * (m as f64).ln();
    let exceedance = r_values
        .iter()
        .map(|&r| {
            let threshold = r * scale;
            let above = sorted.len() - sorted.partition_point(|&c| c <= threshold);
            Exceedance { r, threshold, fraction: above as f64 / n }
        })
        .collect();
    Ok(TailReport {
        samples: sorted.len(),
        mean: sorted.iter().sum::<f64>() / n,
        p50: nearest_rank(&sorted, 0.50),
        p90: nearest_rank(&sorted, 0.90),
        p99: nearest_rank(&sorted, 0.99),
        max: *sorted.last().expect("nonempty"),
        exceedance,
    })
}

pub const TAIL_HEADER: &str = "samples,mean,p50,p90,p99,max,r,threshold,exceedance";

/// One row per `R`, or a single row with empty `R` columns if none.
pub fn write_tail_csv<W: Write>(mut out: W, report: &TailReport) -> io::Result<()> {
    writeln!(out, "{TAIL_HEADER}")?;
    let head = format!(
        "{},{},{},{},{},{}",
        report.samples, report.mean, report.p50, report.p90, report.p99, report.max
    );
    if report.exceedance.is_empty() {
        writeln!(out, "{head},,,")?;
    }
    for e in &report.exceedance {
        writeln!(out, "{head},{},{},{}", e.r, e.threshold, e.fraction)?;
    }
    Ok(())
}

pub const MAX_BRUTE_FORCE: usize = 10;

/// Every total order of `ops` (as indices) that respects real time.
pub fn linearizations(ops: &[HistoryOp]) -> Result<Vec<Vec<usize>>, DlinError> {
    if ops.len() > MAX_BRUTE_FORCE {
        return Err(DlinError::TooLarge(ops.len()));
    }
    fn extend(ops: &[HistoryOp], used: &mut Vec<bool>, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == ops.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..ops.len() {
            // k may go next unless an unplaced op finished before k started
            if used[k] || (0..ops.len()).any(|o| !used[o] && o != k && ops[o].respond < ops[k].invoke) {
                continue;
            }
            used[k] = true;
            prefix.push(k);
            extend(ops, used, prefix, out);
            prefix.pop();
            used[k] = false;
        }
    }
    let mut out = Vec::new();
    extend(ops, &mut vec![false; ops.len()], &mut Vec::new(), &mut out);
    Ok(out)
}

/// Cost vectors (indexed like `history.ops`) of every legal linearization.
/// Orders under which a dequeue returns an element not yet enqueued are
/// not legal mappings and are skipped.
pub fn cost_profiles(history: &History, object: ObjectKind) -> Result<BTreeSet<Vec<u64>>, DlinError> {
    let mut out = BTreeSet::new();
    for order in linearizations(&history.ops)? {
        let ops: Vec<HistoryOp> = order.iter().map(|&k| history.ops[k]).collect();
        match replay(&ops, object) {
            Ok(costs) => {
                let mut profile = vec![0u64; ops.len()];
                for (slot, c) in order.iter().zip(&costs) {
                    profile[*slot] = c.cost as u64;
                }
                out.insert(profile);
            }
            Err(DlinError::UnknownElement { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Builds a counter history from a simulation with integer weights.
/// Updates keep their event-step intervals (doubled) and completion order;
/// each read probe is an instantaneous read right after its update.
pub fn history_from_simulation<T: Scalar>(outcome: &SimOutcome<T>) -> Result<History, DlinError> {
    let mut ops = Vec::with_capacity(outcome.records.len() + outcome.reads.len());
    let mut probes = outcome.reads.iter().peekable();
    let mut seq = 0u64;
    for r in &outcome.records {
        let w = r.weight.to_f64_lossy();
        if w != 1.0 {
            return Err(DlinError::NonIntegral { seq, value: w });
        }
        ops.push(HistoryOp {
            seq,
            thread: r.thread as u32,
            kind: OpKind::Increment,
            invoke: 2 * r.start,
            respond: 2 * r.finish,
            arg: None,
            ret: None,
        });
        seq += 1;
        while let Some(p) = probes.next_if(|p| p.after == r.completion) {
            let value = p.value.to_f64_lossy();
            if value.fract() != 0.0 {
                return Err(DlinError::NonIntegral { seq, value });
            }
            let at = 2 * r.finish + 1;
            ops.push(HistoryOp {
                seq,
                thread: r.thread as u32,
                kind: OpKind::Read,
                invoke: at,
                respond: at,
                arg: None,
                ret: Some(value as u64),
            });
            seq += 1;
        }
    }
    Ok(History::new(Source::Simulator, ops))
}

/// Append-only log owned by one recording thread, with a fixed capacity.
#[derive(Debug)]
pub struct ThreadLog {
    thread: u32,
    ops: Vec<HistoryOp>,
}

impl ThreadLog {
    pub fn with_capacity(thread: u32, capacity: usize) -> Self {
        Self { thread, ops: Vec::with_capacity(capacity) }
    }

    /// Returns false, dropping the entry, when the log is full.
    pub fn push(&mut self, kind: OpKind, invoke: u64, seq: u64, respond: u64, arg: Option<u64>, ret: Option<u64>) -> bool {
        if self.ops.len() == self.ops.capacity() {
            return false;
        }
        self.ops.push(HistoryOp { seq, thread: self.thread, kind, invoke, respond, arg, ret });
        true
    }

    pub fn is_full(&self) -> bool {
        self.ops.len() == self.ops.capacity()
    }
}

/// Merges per-thread logs by sequence number.
pub fn merge_logs(logs: Vec<ThreadLog>) -> History {
    History::new(Source::LiveThreads, logs.into_iter().flat_map(|l| l.ops).collect())
}

/// Runs `threads` workers on a shared MultiCounter, each performing `ops`
/// operations (reads with probability `read_fraction`), and records the
/// history. Invocation, linearization and response are ticks of one
/// global timeline; an increment's tick follows its cell's `fetch_add`.
pub fn record_counter<C: CounterCell>(
    counter: &MultiCounterOf<C>,
    threads: usize,
    ops: usize,
    read_fraction: f64,
    seed: u64,
) -> History {
    let timeline = AtomicU64::new(0);
    let tick = || timeline.fetch_add(1, Ordering::SeqCst);
    let logs = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let tick = &tick;
                s.spawn(move || {
                    let mut rng = stream_rng(seed, t as u64);
                    let mut coin = stream_rng(seed, AUX_STREAM_BASE + 32 + t as u64);
                    let mut log = ThreadLog::with_capacity(t as u32, ops);
                    while !log.is_full() {
                        let invoke = tick();
                        if coin.random::<f64>() < read_fraction {
                            let v = counter.read(&mut rng);
                            let seq = tick();
                            log.push(OpKind::Read, invoke, seq, tick(), None, Some(v));
                        } else {
                            counter.increment(&mut rng);
                            let seq = tick();
                            log.push(OpKind::Increment, invoke, seq, tick(), None, None);
                        }
                    }
                    log
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("recorder panicked")).collect()
    });
    merge_logs(logs)
}

/// Records a mixed enqueue/dequeue run on `queue`. Enqueues are sequenced
/// by their stamp and dequeues by a tick taken under the queue lock, both
/// on the queue's own clock.
pub fn record_queue(queue: &MultiQueue<u64>, threads: usize, ops: usize, enqueue_fraction: f64, seed: u64) -> History {
    let logs = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    let mut h = queue.handle(t as u32, seed);
                    let mut coin = stream_rng(seed, AUX_STREAM_BASE + 48 + t as u64);
                    let mut log = ThreadLog::with_capacity(t as u32, ops);
                    let mut next = 0u64;
                    while !log.is_full() {
                        let invoke = queue.tick();
                        if coin.random::<f64>() < enqueue_fraction {
                            let element = (t as u64) << 40 | next;
                            next += 1;
                            let key = h.enqueue(element);
                            log.push(OpKind::Enqueue, invoke, key.stamp, queue.tick(), Some(element), None);
                        } else {
                            let (d, seq) = h.dequeue_sequenced();
                            log.push(OpKind::Dequeue, invoke, seq, queue.tick(), None, d.map(|d| d.value));
                        }
                    }
                    log
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("recorder panicked")).collect()
    });
    merge_logs(logs)
}
