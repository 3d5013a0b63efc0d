//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria the hardware or the process itself cannot meet are listed in
//! `EXPECTED_RED` and reported red without failing the run. Every other
//! failure does fail it.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxed_core::balance::{one_plus_beta_probabilities, run_sequential, SequentialConfig};
use relaxed_core::dlin::{
    cost_profiles, history_from_simulation, linearizations, linearize_costs, record_counter, record_queue,
    tail_report, History, HistoryOp, ObjectKind, OpKind, Source,
};
use relaxed_core::multicounter::MultiCounter;
use relaxed_core::multiqueue::{rank_experiment, MultiQueue};
use relaxed_core::rng::stream_rng;
use relaxed_core::sim::{
    classify_operations, cons_ops_violations, drift_report, run_simulation, AdversaryKind, SimConfig,
};
use relaxed_core::stm::{run_stm_benchmark, ClockKind, StmBenchConfig};
use relaxed_core::workload::{hardware_threads, queue_stress};

/// Gap bound 8 lies below the two-choice constant at m = 64 (per-step
/// gaps reach 10 to 12); the scaling comparison needs 8 hardware threads.
const EXPECTED_RED: &[u32] = &[2, 11];

/// Frozen per-seed maxima of the m = 64 sequential runs, seeds 1..=5.
const SEQ_MAX_GAP: [f64; 5] = [11.0, 10.0, 10.0, 12.0, 10.0];
/// End-of-window `Γ / m` bound for the simulator runs.
const WINDOW_GAMMA_K: f64 = 2.0001;

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn criterion(id: u32, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = f();
    let v = Verdict { id, pass, detail, elapsed: start.elapsed() };
    println!(
        "C{:<2} {} ({:.1}s) {}",
        v.id,
        if v.pass { "PASS" } else { "FAIL" },
        v.elapsed.as_secs_f64(),
        v.detail
    );
    v
}

fn conservation() -> (bool, String) {
    let mut ok = true;
    let mut detail = String::new();
    let t = run_sequential(&SequentialConfig::<f64>::new(64, 1_000_000, 1.0), &mut stream_rng(1, 0)).unwrap();
    ok &= t.loads.total() == 1e6;
    write!(detail, "sequential {} / 1000000", t.loads.total()).unwrap();

    for kind in [AdversaryKind::Stampede { block: 4 }, AdversaryKind::RandomInterleave] {
        let out = run_simulation(&SimConfig::<f64>::new(256, 4, 16, 200_000, kind)).unwrap();
        ok &= out.loads.total() == out.records.len() as f64 && out.records.len() == 200_000;
        write!(detail, "; {kind} {} / {}", out.loads.total(), out.records.len()).unwrap();
    }

    let counter = MultiCounter::new(32).unwrap();
    let (threads, per_thread) = (8u64, 250_000u64);
    thread::scope(|s| {
        for t in 0..threads {
            let counter = &counter;
            s.spawn(move || {
                let mut rng = stream_rng(3, t);
                for _ in 0..per_thread {
                    counter.increment(&mut rng);
                }
            });
        }
    });
    ok &= counter.exact_total() == threads * per_thread;
    write!(detail, "; live counter {} / {}", counter.exact_total(), threads * per_thread).unwrap();
    (ok, detail)
}

fn sequential_gap() -> (bool, String) {
    let mut cfg = SequentialConfig::<f64>::new(64, 1_000_000, 1.0);
    cfg.snapshot_every = 1;
    let mut worst = Vec::new();
    for seed in 1..=5u64 {
        let t = run_sequential(&cfg, &mut stream_rng(seed, 0)).unwrap();
        worst.push(t.snapshots.iter().map(|s| s.gap).fold(0.0, f64::max));
    }
    let frozen = worst == SEQ_MAX_GAP;
    let pass = worst.iter().all(|&g| g <= 8.0);
    (pass, format!("max gap per seed {worst:?} (bound 8, matches frozen: {frozen})"))
}

fn prefix_formula() -> (bool, String) {
    let mut worst_sum = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    for m in 1..=1024usize {
        for beta in [0.0, 0.25, 0.5, 1.0] {
            let p = one_plus_beta_probabilities::<f64>(m, beta).unwrap();
            worst_sum = worst_sum.max((p.sum() - 1.0).abs());
            let mf = m as f64;
            let mut prefix = 0.0;
            for (k, &pk) in p.probs().iter().enumerate() {
                prefix += pk;
                let r = (k + 1) as f64 / mf;
                let approx = r * (1.0 + beta - r * beta);
                worst_excess = worst_excess.max((prefix - approx).abs() - 2.0 / (mf * mf));
            }
        }
    }
    let pass = worst_sum <= 1e-12 && worst_excess <= 0.0;
    (pass, format!("max |sum - 1| = {worst_sum:.2e}; max prefix error minus 2/m^2 = {worst_excess:.2e}"))
}

fn divergence() -> (bool, String) {
    let limit = 4.0 * 64f64.log2();
    let gap = |beta: f64| {
        let mut cfg = SequentialConfig::<f64>::new(64, 1_000_000, beta);
        cfg.snapshot_every = 1_000;
        run_sequential(&cfg, &mut stream_rng(4, 0)).unwrap().max_gap
    };
    let (g0, g1) = (gap(0.0), gap(1.0));
    (g0 > limit && g1 <= limit, format!("beta=0 gap {g0}, beta=1 gap {g1}, limit {limit}"))
}

fn window_property() -> (bool, String) {
    let mut schedules = 0;
    let mut violations = 0;
    for n in [2usize, 4, 8] {
        for c in [4u64, 16] {
            let kinds = [
                AdversaryKind::Serial,
                AdversaryKind::RoundRobin,
                AdversaryKind::RandomInterleave,
                AdversaryKind::Stampede { block: n },
                AdversaryKind::Stampede { block: (n / 2).max(1) },
                AdversaryKind::BlockReset { serial_len: c * n as u64 },
            ];
            for kind in kinds {
                for seed in 0..28u64 {
                    let mut cfg = SimConfig::<f64>::new(32, n, c, 2_000, kind);
                    cfg.seed = seed;
                    cfg.schedule_seed = 1_000 + seed;
                    cfg.snapshot_every = 2_000;
                    let out = run_simulation(&cfg).unwrap();
                    violations += cons_ops_violations(&out.records, n, c).len();
                    schedules += 1;
                }
            }
        }
    }
    (violations == 0, format!("{violations} violating windows over {schedules} schedules"))
}

fn untouched_good_ops() -> (bool, String) {
    let mut cfg = SimConfig::<f64>::new(256, 4, 16, 200_000, AdversaryKind::Stampede { block: 4 });
    assert!(cfg.in_analyzed_regime());
    cfg.snapshot_every = 200_000;
    cfg.seed = 6;
    let out = run_simulation(&cfg).unwrap();
    let s = classify_operations(&out.records, cfg.threshold()).summary;
    let pass = s.good >= 100_000 && s.untouched_given_good >= 0.67;
    (pass, format!("Pr[untouched | good] = {:.4} over {} good ops (bound 0.67)", s.untouched_given_good, s.good))
}

fn asynchronous_gap() -> (bool, String) {
    let (n, c, m) = (4usize, 16u64, 256usize);
    let gap_bound = 6.0 * (m as f64).ln();
    let mut worst_gap = 0.0f64;
    let mut worst_k = 0.0f64;
    for kind in [AdversaryKind::Stampede { block: n }, AdversaryKind::BlockReset { serial_len: c * n as u64 }] {
        for seed in 1..=5u64 {
            let mut cfg = SimConfig::<f64>::new(m, n, c, 1_000_000, kind);
            cfg.seed = seed;
            cfg.schedule_seed = seed;
            cfg.snapshot_every = cfg.threshold();
            let out = run_simulation(&cfg).unwrap();
            worst_gap = worst_gap.max(out.max_gap);
            let windows = drift_report(&out.trajectory, &out.records, m, cfg.threshold(), WINDOW_GAMMA_K);
            worst_k = windows.iter().map(|w| w.end_gamma / m as f64).fold(worst_k, f64::max);
        }
    }
    let pass = worst_gap <= gap_bound && worst_k <= WINDOW_GAMMA_K;
    (
        pass,
        format!("max gap {worst_gap} (bound {gap_bound:.2}); max end-of-window Gamma/m {worst_k:.6} (K = {WINDOW_GAMMA_K})"),
    )
}

fn queue_rank() -> (bool, String) {
    let m = 64usize;
    let samples = rank_experiment(m, 1_000_000, 500_000, 1).unwrap();
    let ranks: Vec<f64> = samples.iter().map(|s| s.rank as f64).collect();
    let r = tail_report(&ranks, m, &[]).unwrap();
    let p99_bound = 8.0 * m as f64 * (m as f64).ln();
    let pass = samples.len() == 500_000 && r.mean <= 2.0 * m as f64 && r.p99 <= p99_bound;
    (pass, format!("mean rank {:.2} (bound {}), p99 {} (bound {p99_bound:.0}), max {}", r.mean, 2 * m, r.p99, r.max))
}

fn queue_integrity(threads: usize) -> (bool, String) {
    let s = queue_stress(threads, 2 * threads, Duration::from_secs(10), 9, true).unwrap();
    (
        s.is_clean() && s.enqueued > 0 && s.dequeued > 0,
        format!(
            "{threads} threads: {} enqueued, {} dequeued, {} drained, lost {}, duplicated {}, out of order {}",
            s.enqueued, s.dequeued, s.drained, s.lost, s.duplicated, s.order_violations
        ),
    )
}

struct StmSeries {
    objects: usize,
    clock: &'static str,
    commits_per_sec: f64,
    aborts_per_commit: f64,
    consistent: usize,
    runs: usize,
}

fn stm_runs(threads: usize) -> Vec<StmSeries> {
    let mut out = Vec::new();
    for objects in [10_000usize, 100_000] {
        for clock in [ClockKind::Exact, ClockKind::multicounter(4 * threads)] {
            let runs: Vec<_> = (0..10u64)
                .map(|seed| {
                    run_stm_benchmark(&StmBenchConfig {
                        threads,
                        objects,
                        duration: Duration::from_secs(1),
                        clock,
                        seed,
                        pin: true,
                        backoff_spins: 0,
                    })
                    .unwrap()
                })
                .collect();
            let k = runs.len() as f64;
            out.push(StmSeries {
                objects,
                clock: clock.name(),
                commits_per_sec: runs.iter().map(|r| r.commits_per_sec).sum::<f64>() / k,
                aborts_per_commit: runs.iter().map(|r| r.aborts_per_commit).sum::<f64>() / k,
                consistent: runs.iter().filter(|r| r.consistent).count(),
                runs: runs.len(),
            });
        }
    }
    out
}

fn stm_safety(series: &[StmSeries]) -> (bool, String) {
    let pass = series.iter().all(|s| s.consistent == s.runs);
    let detail = series
        .iter()
        .map(|s| format!("{} M={}: {}/{} consistent", s.clock, s.objects, s.consistent, s.runs))
        .collect::<Vec<_>>()
        .join("; ");
    (pass, detail)
}

/// Returns the overall verdict and whether the abort-rate knee held.
fn stm_direction(series: &[StmSeries], threads: usize) -> (bool, bool, String) {
    let find = |objects: usize, clock: &str| {
        series.iter().find(|s| s.objects == objects && s.clock == clock).expect("series present")
    };
    let (exact, multi) = (find(100_000, "exact"), find(100_000, "multicounter"));
    let scaling = if threads >= 8 {
        let ok = multi.commits_per_sec >= exact.commits_per_sec;
        format!(
            "{} at M=100K: multicounter {:.0} vs exact {:.0} commits/s",
            if ok { "scaling holds" } else { "scaling fails" },
            multi.commits_per_sec,
            exact.commits_per_sec
        )
    } else {
        format!(
            "scaling unattainable: {threads} hardware thread(s), 8 required (measured multicounter {:.0} vs exact {:.0} commits/s)",
            multi.commits_per_sec, exact.commits_per_sec
        )
    };
    let scaling_ok = threads >= 8 && multi.commits_per_sec >= exact.commits_per_sec;
    let (a10k, a100k) = (find(10_000, "multicounter").aborts_per_commit, multi.aborts_per_commit);
    let knee = a10k > a100k;
    let detail = format!(
        "{scaling}; knee {}: aborts/commit {a10k:.4} at M=10K vs {a100k:.4} at M=100K",
        if knee { "holds" } else { "fails" }
    );
    (scaling_ok && knee, knee, detail)
}

/// Random history of up to 8 ops whose return values follow one random
/// real-time-respecting order.
fn random_history(rng: &mut ChaCha8Rng, object: ObjectKind) -> History {
    let len = rng.random_range(2..=8);
    let mut ops: Vec<HistoryOp> = (0..len)
        .map(|k| {
            let invoke = rng.random_range(0..12);
            HistoryOp {
                seq: k,
                thread: k as u32,
                kind: OpKind::Increment,
                invoke,
                respond: invoke + rng.random_range(0..8),
                arg: None,
                ret: None,
            }
        })
        .collect();
    let orders = linearizations(&ops).unwrap();
    let order = &orders[rng.random_range(0..orders.len())];
    let (mut count, mut live, mut next) = (0u64, Vec::new(), 0u64);
    for (seq, &k) in order.iter().enumerate() {
        let op = &mut ops[k];
        op.seq = seq as u64;
        match object {
            ObjectKind::Counter if rng.random_bool(0.5) => count += 1,
            ObjectKind::Counter => {
                op.kind = OpKind::Read;
                op.ret = Some(count + rng.random_range(0..3));
            }
            ObjectKind::Queue if live.is_empty() || rng.random_bool(0.5) => {
                op.kind = OpKind::Enqueue;
                op.arg = Some(next);
                live.push(next);
                next += 1;
            }
            ObjectKind::Queue => {
                op.kind = OpKind::Dequeue;
                op.ret = Some(live.remove(rng.random_range(0..live.len())));
            }
        }
    }
    History::new(Source::Simulator, ops)
}

fn recorder() -> (bool, String) {
    let costs = |h: &History, object| -> Vec<f64> {
        linearize_costs(h, object).unwrap().into_iter().map(|c| c.cost).collect()
    };
    let counter = MultiCounter::new(1).unwrap();
    let queue = MultiQueue::new(1).unwrap();
    let serial = costs(&record_counter(&counter, 1, 50_000, 0.5, 12), ObjectKind::Counter)
        .into_iter()
        .chain(costs(&record_queue(&queue, 1, 50_000, 0.5, 12), ObjectKind::Queue))
        .filter(|&c| c != 0.0)
        .count();

    let (n, c, m) = (4usize, 16u64, 256usize);
    let mut cfg = SimConfig::<f64>::new(m, n, c, 200_000, AdversaryKind::Stampede { block: n });
    cfg.reads_per_update = 1;
    cfg.snapshot_every = 200_000;
    cfg.seed = 12;
    let out = run_simulation(&cfg).unwrap();
    let h = history_from_simulation(&out).unwrap();
    let reads: Vec<f64> = linearize_costs(&h, ObjectKind::Counter)
        .unwrap()
        .into_iter()
        .filter(|s| s.kind == OpKind::Read)
        .map(|s| s.cost)
        .collect();
    let p99 = tail_report(&reads, m, &[]).unwrap().p99;
    let p99_bound = 6.0 * m as f64 * (m as f64).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mismatches = 0;
    let mut checked = 0;
    for object in [ObjectKind::Counter, ObjectKind::Queue] {
        for _ in 0..500 {
            let h = random_history(&mut rng, object);
            let profiles: BTreeSet<Vec<u64>> = cost_profiles(&h, object).unwrap();
            let recorded: Vec<u64> = costs(&h, object).iter().map(|&c| c as u64).collect();
            mismatches += usize::from(!profiles.contains(&recorded));
            checked += 1;
        }
    }
    let overlapping: Vec<HistoryOp> = (0..8u64)
        .map(|k| HistoryOp {
            seq: k,
            thread: k as u32,
            kind: if k < 6 { OpKind::Increment } else { OpKind::Read },
            invoke: 0,
            respond: 10,
            arg: None,
            ret: (k >= 6).then_some(6),
        })
        .collect();
    let full = linearizations(&overlapping).unwrap().len();
    let h = History::new(Source::LiveThreads, overlapping);
    let zero_profile = cost_profiles(&h, ObjectKind::Counter).unwrap().contains(&vec![0; 8]);

    let pass = serial == 0 && p99 <= p99_bound && mismatches == 0 && full == 40_320 && zero_profile;
    (
        pass,
        format!(
            "serial nonzero costs {serial}; simulator read p99 {p99} (bound {p99_bound:.0}); \
             brute force {mismatches} mismatches over {checked} histories, 8 overlapping ops give {full} orders"
        ),
    )
}

fn main() {
    let threads = hardware_threads();
    println!("acceptance: {threads} hardware thread(s)");
    let mut verdicts = vec![
        criterion(1, conservation),
        criterion(2, sequential_gap),
        criterion(3, prefix_formula),
        criterion(4, divergence),
        criterion(5, window_property),
        criterion(6, untouched_good_ops),
        criterion(7, asynchronous_gap),
        criterion(8, queue_rank),
        criterion(9, || queue_integrity(threads)),
    ];
    let mut series = Vec::new();
    verdicts.push(criterion(10, || {
        series = stm_runs(threads);
        stm_safety(&series)
    }));
    let mut knee = false;
    verdicts.push(criterion(11, || {
        let (pass, k, detail) = stm_direction(&series, threads);
        knee = k;
        (pass, detail)
    }));
    verdicts.push(criterion(12, recorder));

    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} PASS", verdicts.len());
    let unexpected: Vec<u32> =
        verdicts.iter().filter(|v| !v.pass && !EXPECTED_RED.contains(&v.id)).map(|v| v.id).collect();
    for v in verdicts.iter().filter(|v| !v.pass && EXPECTED_RED.contains(&v.id)) {
        println!("acceptance: C{} red as expected", v.id);
    }
    assert!(knee, "the abort-rate knee must hold even where the scaling half is unattainable");
    assert!(unexpected.is_empty(), "unexpected FAIL: {unexpected:?}");
}
