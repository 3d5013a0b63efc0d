//! One runner per experiment. Each writes its CSVs through a [`Sink`] and
//! returns the consistency checks that failed, if any.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use relaxed_core::balance::{run_sequential, write_trajectory_csv, PotentialParams, SequentialConfig, WeightDistribution};
use relaxed_core::dlin::{
    history_from_simulation, linearize_costs, record_counter, record_queue, tail_report, write_tail_csv, History, ObjectKind, OpKind,
};
use relaxed_core::multicounter::MultiCounter;
use relaxed_core::multiqueue::{rank_experiment, write_rank_csv, MultiQueue};
use relaxed_core::rng::stream_rng;
use relaxed_core::sim::{
    classify_operations, cons_ops_violations_by, drift_report, run_simulation, write_ops_csv, write_windows_csv,
    AdversaryKind, ContentionMeasure, SimConfig,
};
use relaxed_core::stm::{default_delta, run_stm_benchmark, ClockKind, StmBenchConfig, STM_HEADER};
use relaxed_core::StructureError;
use relaxed_core::workload::{counter_throughput, queue_stress, CounterKind};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{mean_std, Sink};

/// Files written by a run and the oracles that tripped.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub diagnostics: Option<PathBuf>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<Report> {
    let mut sink = Sink::new(out_dir, config).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut failures = Vec::new();
    match config.experiment {
        Experiment::Seq => seq(config, &mut sink, &mut failures),
        Experiment::Sim => sim(config, &mut sink, &mut failures),
        Experiment::Counter => counter(config, &mut sink, &mut failures),
        Experiment::Queue => queue(config, &mut sink, &mut failures),
        Experiment::Stm => stm(config, &mut sink, &mut failures),
    }?;
    let diagnostics = if failures.is_empty() { None } else { Some(sink.diagnostics(&failures)?) };
    Ok(Report { files: sink.files, failures, diagnostics })
}

fn weight(config: &ExperimentConfig) -> Result<WeightDistribution> {
    Ok(match config.text("weight") {
        "unit" => WeightDistribution::Unit,
        _ => WeightDistribution::exponential_mean_one(config.usize("bins"))?,
    })
}

fn duration(config: &ExperimentConfig) -> Duration {
    Duration::from_millis(config.int("duration_ms"))
}

fn seq(config: &ExperimentConfig, sink: &mut Sink, failures: &mut Vec<String>) -> Result<()> {
    let weight = weight(config)?;
    let mut cfg = SequentialConfig::<f64>::new(config.usize("bins"), config.int("steps"), config.float("beta"));
    cfg.params = PotentialParams::from_good_margin(config.float("gamma"), &weight)?;
    cfg.weight = weight;
    cfg.snapshot_every = config.int("snapshot_every");
    let mut summary = sink.csv("summary.csv")?;
    writeln!(summary, "seed,steps,max_gap,final_gap,max_gamma,total")?;
    for seed in (0..config.int("seeds")).map(|k| config.int("seed") + k) {
        let t = run_sequential(&cfg, &mut stream_rng(seed, 0))?;
        t.write_csv(sink.csv(&format!("seed{seed}.csv"))?)?;
        let total = t.loads.total();
        writeln!(
            summary,
            "{seed},{},{},{},{},{total}",
            cfg.steps,
            t.max_gap,
            t.loads.gap(),
            t.max_gamma().map_or(String::new(), |g| g.to_string())
        )?;
        if cfg.weight.is_unit() && total != cfg.steps as f64 {
            failures.push(format!("conservation: seed {seed} holds {total} after {} unit balls", cfg.steps));
        }
    }
    summary.flush()?;
    Ok(())
}

fn adversary(config: &ExperimentConfig) -> AdversaryKind {
    let threads = config.usize("threads");
    match config.text("adversary") {
        "serial" => AdversaryKind::Serial,
        "round-robin" => AdversaryKind::RoundRobin,
        "random-interleave" => AdversaryKind::RandomInterleave,
        "stampede" => AdversaryKind::Stampede { block: nonzero_or(config.usize("block"), threads) },
        _ => {
            let serial_len = config.int("serial_len");
            let threshold = config.int("ratio") * threads as u64;
            AdversaryKind::BlockReset { serial_len: if serial_len == 0 { threshold } else { serial_len } }
        }
    }
}

fn nonzero_or(v: usize, fallback: usize) -> usize {
    if v == 0 {
        fallback
    } else {
        v
    }
}

fn sim(config: &ExperimentConfig, sink: &mut Sink, failures: &mut Vec<String>) -> Result<()> {
    let weight = weight(config)?;
    let mut cfg = SimConfig::<f64>::new(
        config.usize("bins"),
        config.usize("threads"),
        config.int("ratio"),
        config.int("ops"),
        adversary(config),
    );
    cfg.seed = config.int("seed");
    cfg.schedule_seed = config.int("schedule_seed");
    cfg.params = PotentialParams::from_good_margin(config.float("gamma"), &weight)?;
    cfg.weight = weight;
    cfg.snapshot_every = config.int("snapshot_every");
    cfg.reads_per_update = u32::try_from(config.int("reads_per_update")).context("reads_per_update")?;
    if !cfg.in_analyzed_regime() {
        log::warn!("m = {} is below 4 C n = {}", cfg.bins, 4 * cfg.threshold());
    }
    let out = run_simulation(&cfg)?;

    write_trajectory_csv(sink.csv("trajectory.csv")?, &out.trajectory)?;
    let windows = drift_report(&out.trajectory, &out.records, cfg.bins, cfg.threshold(), config.float("flag_multiple"));
    write_windows_csv(sink.csv("windows.csv")?, &windows)?;
    if config.bool("write_ops") {
        write_ops_csv(sink.csv("ops.csv")?, &out.records)?;
    }
    let class = classify_operations(&out.records, cfg.threshold()).summary;
    let scheduled = cons_ops_violations_by(&out.records, cfg.threads, cfg.ratio, ContentionMeasure::Scheduled);
    let completed = cons_ops_violations_by(&out.records, cfg.threads, cfg.ratio, ContentionMeasure::Completed);
    let total = out.loads.total();

    let mut summary = sink.csv("summary.csv")?;
    writeln!(
        summary,
        "adversary,ops,max_gap,final_gap,max_gamma,fraction_good,correct_given_good,correct_given_bad,\
         untouched_given_good,flagged_windows,cons_ops_scheduled,cons_ops_completed,total"
    )?;
    writeln!(
        summary,
        "{},{},{},{},{},{},{},{},{},{},{},{},{total}",
        cfg.adversary,
        out.records.len(),
        out.max_gap,
        out.loads.gap(),
        windows.iter().map(|w| w.max_gamma).fold(f64::NAN, f64::max),
        class.fraction_good,
        class.correct_given_good,
        class.correct_given_bad,
        class.untouched_given_good,
        windows.iter().filter(|w| w.flagged).count(),
        scheduled.len(),
        completed.len(),
    )?;
    summary.flush()?;

    if cfg.weight.is_unit() && total != out.records.len() as f64 {
        failures.push(format!("conservation: bins hold {total} after {} unit increments", out.records.len()));
    }
    if let Some(v) = completed.first() {
        failures.push(format!(
            "window property: {} windows hold n or more operations with more than C n completed overlaps; first at op {} ({} ops)",
            completed.len(),
            v.first,
            v.bad
        ));
    }
    if cfg.reads_per_update > 0 {
        let history = history_from_simulation(&out)?;
        history.write_csv(sink.csv("history.csv")?)?;
        tail(config, sink, &history, ObjectKind::Counter, cfg.bins)?;
    }
    Ok(())
}

fn tail(config: &ExperimentConfig, sink: &mut Sink, history: &History, object: ObjectKind, m: usize) -> Result<()> {
    let costs: Vec<f64> = linearize_costs(history, object)?.into_iter().map(|c| c.cost).collect();
    let report = tail_report(&costs, m, &[config.float("r")])?;
    write_tail_csv(sink.csv("tail.csv")?, &report)?;
    Ok(())
}

fn counter_kinds(config: &ExperimentConfig) -> Vec<CounterKind> {
    match config.text("kinds") {
        "exact" => vec![CounterKind::Exact],
        "multi" => vec![CounterKind::Multi],
        "multi-padded" => vec![CounterKind::MultiPadded],
        _ => vec![CounterKind::Exact, CounterKind::Multi, CounterKind::MultiPadded],
    }
}

fn counter(config: &ExperimentConfig, sink: &mut Sink, failures: &mut Vec<String>) -> Result<()> {
    match config.text("mode") {
        "throughput" => counter_sweep(config, sink, failures),
        "quality" => counter_quality(config, sink, failures),
        _ => {
            let counter = MultiCounter::new(config.usize("bins"))?;
            let h = record_counter(
                &counter,
                config.usize("history_threads"),
                config.usize("history_ops"),
                config.float("read_fraction"),
                config.int("seed"),
            );
            history_checks(&h, failures);
            let increments = h.ops.iter().filter(|o| o.kind == OpKind::Increment).count() as u64;
            if increments != counter.exact_total() {
                failures.push(format!("conservation: {increments} recorded increments, cells sum to {}", counter.exact_total()));
            }
            h.write_csv(sink.csv("history.csv")?)?;
            tail(config, sink, &h, ObjectKind::Counter, counter.len())
        }
    }
}

fn history_checks(h: &History, failures: &mut Vec<String>) {
    if let Err(e) = h.validate() {
        failures.push(format!("history: {e}"));
    }
}

/// Throughput per counter kind, cells-per-thread ratio and thread count.
/// The exact counter has no ratio and is reported once with ratio 0.
fn counter_sweep(config: &ExperimentConfig, sink: &mut Sink, failures: &mut Vec<String>) -> Result<()> {
    let (runs, pin, seed) = (config.int("runs").max(1), config.bool("pin"), config.int("seed"));
    let mut rows = sink.csv("throughput_runs.csv")?;
    writeln!(rows, "kind,ratio,threads,run,increments,ops_per_sec,conserved")?;
    let mut summary = sink.csv("throughput.csv")?;
    writeln!(summary, "kind,ratio,threads,runs,mean_ops_per_sec,std_ops_per_sec")?;
    for kind in counter_kinds(config) {
        let ratios: Vec<u64> = if kind == CounterKind::Exact { vec![0] } else { config.list("ratios").to_vec() };
        for &ratio in &ratios {
            for &threads in config.list("threads") {
                let mut rates = Vec::new();
                for run in 0..runs {
                    let r = counter_throughput(kind, threads as usize, ratio.max(1) as usize, duration(config), seed + run, pin)?;
                    writeln!(rows, "{},{ratio},{threads},{run},{},{},{}", kind.name(), r.increments, r.ops_per_sec, r.conserved)?;
                    if !r.conserved {
                        failures.push(format!(
                            "conservation: {} counter, ratio {ratio}, {threads} threads, run {run}",
                            kind.name()
                        ));
                    }
                    rates.push(r.ops_per_sec);
                }
                let (mean, std) = mean_std(&rates);
                writeln!(summary, "{},{ratio},{threads},{runs},{mean},{std}", kind.name())?;
                log::info!("{} C={ratio} n={threads}: {mean:.0} ops/s", kind.name());
            }
        }
    }
    rows.flush()?;
    summary.flush()?;
    Ok(())
}

/// Single-threaded: one random read, its base-2 log, and the cell gap,
/// every `every` increments.
fn counter_quality(config: &ExperimentConfig, sink: &mut Sink, failures: &mut Vec<String>) -> Result<()> {
    let counter = MultiCounter::new(config.usize("bins"))?;
    let seed = config.int("seed");
    let (mut rng, mut reader) = (stream_rng(seed, 0), stream_rng(seed, 1));
    let every = config.int("every").max(1);
    let mut out = sink.csv("quality.csv")?;
    writeln!(out, "increments,read,log2_read,exact,log2_exact,relative_error,max_cell,min_cell,gap")?;
    for t in 1..=config.int("increments") {
        counter.increment(&mut rng);
        if t.is_multiple_of(every) {
            let read = counter.read(&mut reader);
            let cells = counter.cells();
            let (max, min) = (cells.iter().max().copied().unwrap_or(0), cells.iter().min().copied().unwrap_or(0));
            let log2 = |v: u64| if v == 0 { f64::NEG_INFINITY } else { (v as f64).log2() };
            writeln!(
                out,
                "{t},{read},{},{t},{},{},{max},{min},{}",
                log2(read),
                log2(t),
                (read as f64 - t as f64) / t as f64,
                max - min
            )?;
        }
    }
    out.flush()?;
    if counter.exact_total() != config.int("increments") {
        failures.push(format!(
            "conservation: cells sum to {} after {} increments",
            counter.exact_total(),
            config.int("increments")
        ));
    }
    Ok(())
}

fn queue(config: &ExperimentConfig, sink: &mut Sink, failures: &mut Vec<String>) -> Result<()> {
    let m = config.usize("bins");
    match config.text("mode") {
        "rank" => {
            let samples = match rank_experiment(m, config.int("prefill"), config.int("dequeues"), config.int("seed")) {
                Err(e @ StructureError::UnknownKey { .. }) => {
                    failures.push(format!("rank oracle: {e}"));
                    return Ok(());
                }
                other => other?,
            };
            write_rank_csv(sink.csv("ranks.csv")?, &samples)?;
            let ranks: Vec<f64> = samples.iter().map(|s| s.rank as f64).collect();
            let report = tail_report(&ranks, m, &[config.float("r")])?;
            let mut summary = sink.csv("rank_summary.csv")?;
            writeln!(summary, "m,dequeues,mean_rank,p50,p90,p99,max")?;
            writeln!(
                summary,
                "{m},{},{},{},{},{},{}",
                report.samples, report.mean, report.p50, report.p90, report.p99, report.max
            )?;
            summary.flush()?;
        }
        "stress" => {
            let (runs, pin, seed) = (config.int("runs").max(1), config.bool("pin"), config.int("seed"));
            let mut rows = sink.csv("stress.csv")?;
            writeln!(
                rows,
                "threads,queues,run,enqueued,dequeued,empty_probes,drained,lost,duplicated,order_violations,ops_per_sec"
            )?;
            for &threads in config.list("threads") {
                let queues = (config.int("ratio") * threads).max(1) as usize;
                for run in 0..runs {
                    let s = queue_stress(threads as usize, queues, duration(config), seed + run, pin)?;
                    writeln!(
                        rows,
                        "{threads},{queues},{run},{},{},{},{},{},{},{},{}",
                        s.enqueued,
                        s.dequeued,
                        s.empty_probes,
                        s.drained,
                        s.lost,
                        s.duplicated,
                        s.order_violations,
                        s.ops_per_sec
                    )?;
                    if !s.is_clean() {
                        failures.push(format!(
                            "integrity: {threads} threads run {run}: lost {}, duplicated {}, out of order {}",
                            s.lost, s.duplicated, s.order_violations
                        ));
                    }
                }
            }
            rows.flush()?;
        }
        _ => {
            let q = MultiQueue::<u64>::new(m)?;
            let h = record_queue(
                &q,
                config.usize("history_threads"),
                config.usize("history_ops"),
                config.float("enqueue_fraction"),
                config.int("seed"),
            );
            history_checks(&h, failures);
            h.write_csv(sink.csv("history.csv")?)?;
            tail(config, sink, &h, ObjectKind::Queue, m)?;
        }
    }
    Ok(())
}

fn clocks(config: &ExperimentConfig, threads: usize) -> Vec<ClockKind> {
    let cells = (config.usize("clock_ratio") * threads).max(1);
    let delta = match config.int("delta") {
        0 => default_delta(cells),
        d => d,
    };
    let multi = ClockKind::MultiCounter { cells, delta };
    match config.text("clocks") {
        "exact" => vec![ClockKind::Exact],
        "multicounter" => vec![multi],
        _ => vec![ClockKind::Exact, multi],
    }
}

/// One CSV per array size with a row per run, plus a summary of means and
/// standard deviations.
fn stm(config: &ExperimentConfig, sink: &mut Sink, failures: &mut Vec<String>) -> Result<()> {
    let (runs, pin, seed) = (config.int("runs").max(1), config.bool("pin"), config.int("seed"));
    let backoff_spins = u32::try_from(config.int("backoff")).context("backoff")?;
    let mut summary = sink.csv("summary.csv")?;
    writeln!(
        summary,
        "objects,clock,delta,threads,runs,mean_commits_per_sec,std_commits_per_sec,\
         mean_aborts_per_commit,std_aborts_per_commit,consistent"
    )?;
    for &objects in config.list("objects") {
        let mut rows = sink.csv(&format!("M{objects}.csv"))?;
        writeln!(rows, "{STM_HEADER},run")?;
        for &threads in config.list("threads") {
            for clock in clocks(config, threads as usize) {
                let (mut rates, mut aborts, mut consistent) = (Vec::new(), Vec::new(), true);
                for run in 0..runs {
                    let cfg = StmBenchConfig {
                        threads: threads as usize,
                        objects: objects as usize,
                        duration: duration(config),
                        clock,
                        seed: seed + run,
                        pin,
                        backoff_spins,
                    };
                    let r = run_stm_benchmark(&cfg)?;
                    writeln!(
                        rows,
                        "{threads},{objects},{},{},{},{},{},{run}",
                        clock.name(),
                        clock.delta(),
                        r.commits_per_sec,
                        r.aborts_per_commit,
                        r.consistent
                    )?;
                    if !r.consistent {
                        consistent = false;
                        failures.push(format!(
                            "array sum: {} clock, M={objects}, {threads} threads, run {run}: sum {} but 2 x commits = {}",
                            clock.name(),
                            r.total,
                            2 * r.commits
                        ));
                    }
                    rates.push(r.commits_per_sec);
                    aborts.push(r.aborts_per_commit);
                }
                let ((rm, rs), (am, ast)) = (mean_std(&rates), mean_std(&aborts));
                writeln!(
                    summary,
                    "{objects},{},{},{threads},{runs},{rm},{rs},{am},{ast},{consistent}",
                    clock.name(),
                    clock.delta()
                )?;
                log::info!("M={objects} {} n={threads}: {rm:.0} commits/s, {am:.3} aborts/commit", clock.name());
            }
        }
        rows.flush()?;
    }
    summary.flush()?;
    Ok(())
}
