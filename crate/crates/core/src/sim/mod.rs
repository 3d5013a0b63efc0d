//! Asynchronous two-choice process under an oblivious adversary.

mod analysis;
mod engine;
mod schedule;

pub use analysis::{
    classify_operations, cons_ops_violations, cons_ops_violations_by, drift_report, label, write_windows_csv, ClassSummary, ContentionMeasure,
    Classification, Label, WindowStats, WindowViolation, WINDOW_HEADER,
};
pub use engine::{
    run_simulation, simulate, write_ops_csv, OperationRecord, ReadProbe, SimConfig, SimOutcome,
    DEFAULT_RATIO, OPS_HEADER, ANALYSIS_RATIO,
};
pub use schedule::{AdversaryKind, Event, Phase, Schedule, ScheduleIter};
