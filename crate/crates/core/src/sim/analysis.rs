//! Good/bad classification, windowed bad-operation counts and drift reports.

use std::io::{self, Write};

use crate::balance::PotentialSnapshot;
use crate::scalar::Scalar;
use crate::sim::engine::OperationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Good,
    Bad,
}

/// Good iff contention is at most `threshold` (`C n`).
pub fn label(contention: u64, threshold: u64) -> Label {
    if contention <= threshold {
        Label::Good
    } else {
        Label::Bad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassSummary {
    pub total: u64,
    pub good: u64,
    pub bad: u64,
    pub fraction_good: f64,
    /// Among good operations, fraction that updated the true minimum of the pair.
    pub correct_given_good: f64,
    pub correct_given_bad: f64,
    /// Among good operations, fraction whose updated bin no other operation
    /// accessed during their execution.
    pub untouched_given_good: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: Vec<Label>,
    pub summary: ClassSummary,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classify_operations<T>(records: &[OperationRecord<T>], threshold: u64) -> Classification {
    let labels: Vec<Label> = records.iter().map(|r| label(r.contention, threshold)).collect();
    let (mut good, mut good_correct, mut bad_correct, mut good_untouched) = (0, 0, 0, 0);
    for (r, l) in records.iter().zip(&labels) {
        match l {
            Label::Good => {
                good += 1;
                good_correct += r.correct_choice as u64;
                good_untouched += r.untouched as u64;
            }
            Label::Bad => bad_correct += r.correct_choice as u64,
        }
    }
    let total = records.len() as u64;
    let bad = total - good;
    Classification {
        labels,
        summary: ClassSummary {
            total,
            good,
            bad,
            fraction_good: ratio(good, total),
            correct_given_good: ratio(good_correct, good),
            correct_given_bad: ratio(bad_correct, bad),
            untouched_given_good: ratio(good_untouched, good),
        },
    }
}

/// A window of `C n` consecutive completions containing `threads` or more
/// operations with contention above `C n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowViolation {
    /// Index (in completion order) of the first operation of the window.
    pub first: usize,
    pub bad: usize,
}

/// Which interval count decides whether an operation is bad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContentionMeasure {
    /// Distinct other operations with any step inside the interval.
    #[default]
    Scheduled,
    /// Other operations whose update landed inside the interval. The
    /// window bound is a theorem for this measure on every schedule; the
    /// scheduled measure can exceed it by up to `n - 1` and breaks the bound
    /// on skewed schedules with `n >= 3`.
    Completed,
}

impl ContentionMeasure {
    pub fn of<T>(self, r: &OperationRecord<T>) -> u64 {
        match self {
            ContentionMeasure::Scheduled => r.contention,
            ContentionMeasure::Completed => r.completed_within,
        }
    }
}

/// Slides a window of `ratio * threads` operations (in completion order)
/// over `records` and reports every window holding at least `threads` bad
/// operations. Windows shorter than full length at the end are not checked.
pub fn cons_ops_violations<T>(records: &[OperationRecord<T>], threads: usize, ratio: u64) -> Vec<WindowViolation> {
    cons_ops_violations_by(records, threads, ratio, ContentionMeasure::Scheduled)
}

/// [`cons_ops_violations`] with an explicit contention measure.
pub fn cons_ops_violations_by<T>(
    records: &[OperationRecord<T>],
    threads: usize,
    ratio: u64,
    measure: ContentionMeasure,
) -> Vec<WindowViolation> {
    let window = (ratio * threads as u64) as usize;
    let threshold = window as u64;
    if window == 0 || records.len() < window {
        return Vec::new();
    }
    let bad: Vec<bool> = records.iter().map(|r| measure.of(r) > threshold).collect();
    let mut count = bad[..window].iter().filter(|&&b| b).count();
    let mut out = Vec::new();
    for first in 0..=records.len() - window {
        if first > 0 {
            count -= bad[first - 1] as usize;
            count += bad[first + window - 1] as usize;
        }
        if count >= threads {
            out.push(WindowViolation { first, bad: count });
        }
    }
    out
}

/// Potential statistics of one window of `C n` operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats<T> {
    pub index: usize,
    /// Completion index (1-based) of the first and last operation.
    pub first_op: u64,
    pub last_op: u64,
    pub max_gamma: T,
    pub end_gamma: T,
    pub bad_ops: u64,
    /// `end_gamma > flag_multiple * m`.
    pub flagged: bool,
}

/// Splits the run into consecutive windows of `window` completions and
/// reports the largest and the final `Γ` of each, using the snapshots whose
/// step falls inside the window.
pub fn drift_report<T: Scalar>(
    trajectory: &[PotentialSnapshot<T>],
    records: &[OperationRecord<T>],
    bins: usize,
    window: u64,
    flag_multiple: f64,
) -> Vec<WindowStats<T>> {
    assert!(window > 0, "window must be positive");
    let limit = T::from_f64_lossy(flag_multiple * bins as f64);
    let mut out: Vec<WindowStats<T>> = Vec::new();
    let mut snaps = trajectory.iter().peekable();
    for (index, chunk) in records.chunks(window as usize).enumerate() {
        let first_op = index as u64 * window + 1;
        let last_op = first_op + chunk.len() as u64 - 1;
        let bad_ops = chunk.iter().filter(|r| r.contention > window).count() as u64;
        let mut max_gamma: Option<T> = None;
        let mut end_gamma: Option<T> = None;
        while let Some(s) = snaps.peek() {
            if s.step > last_op {
                break;
            }
            if s.step >= first_op {
                max_gamma = Some(max_gamma.map_or(s.gamma, |g| g.max(s.gamma)));
                end_gamma = Some(s.gamma);
            }
            snaps.next();
        }
        let (Some(max_gamma), Some(end_gamma)) = (max_gamma, end_gamma) else {
            continue;
        };
        out.push(WindowStats {
            index,
            first_op,
            last_op,
            max_gamma,
            end_gamma,
            bad_ops,
            flagged: end_gamma > limit,
        });
    }
    out
}

pub const WINDOW_HEADER: &str = "window,first_op,last_op,max_gamma,end_gamma,bad_ops,flagged";

pub fn write_windows_csv<T: Scalar, W: Write>(mut out: W, windows: &[WindowStats<T>]) -> io::Result<()> {
    writeln!(out, "{WINDOW_HEADER}")?;
    for w in windows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            w.index, w.first_op, w.last_op, w.max_gamma, w.end_gamma, w.bad_ops, w.flagged
        )?;
    }
    Ok(())
}
