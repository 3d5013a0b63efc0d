use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxed_core::dlin::{
    cost_profiles, history_from_simulation, linearizations, linearize_costs, record_counter, record_queue,
    tail_report, History, HistoryOp, ObjectKind, OpKind, Source,
};
use relaxed_core::multicounter::MultiCounter;
use relaxed_core::multiqueue::MultiQueue;
use relaxed_core::sim::{run_simulation, AdversaryKind, SimConfig, ANALYSIS_RATIO};

fn costs(h: &History, object: ObjectKind) -> Vec<f64> {
    linearize_costs(h, object).unwrap().into_iter().map(|c| c.cost).collect()
}

#[test]
fn serial_recordings_cost_nothing() {
    let counter = MultiCounter::new(1).unwrap();
    let h = record_counter(&counter, 1, 5_000, 0.5, 3);
    assert_eq!(h.len(), 5_000);
    assert!(costs(&h, ObjectKind::Counter).iter().all(|&c| c == 0.0));

    let queue = MultiQueue::new(1).unwrap();
    let h = record_queue(&queue, 1, 5_000, 0.6, 3);
    assert!(costs(&h, ObjectKind::Queue).iter().all(|&c| c == 0.0));
}

#[test]
fn concurrent_recordings_are_well_formed() {
    let counter = MultiCounter::new(16).unwrap();
    let h = record_counter(&counter, 4, 20_000, 0.3, 4);
    h.validate().unwrap();
    let increments = h.ops.iter().filter(|o| o.kind == OpKind::Increment).count() as u64;
    assert_eq!(counter.exact_total(), increments);
    let report = tail_report(&costs(&h, ObjectKind::Counter), 16, &[8.0]).unwrap();
    assert!(report.p50 <= report.p90 && report.p90 <= report.p99 && report.p99 <= report.max);

    let queue = MultiQueue::new(8).unwrap();
    let h = record_queue(&queue, 4, 20_000, 0.55, 4);
    h.validate().unwrap();
    // every returned element was live under the recorded order
    let c = costs(&h, ObjectKind::Queue);
    assert_eq!(c.len(), 80_000);
}

#[test]
fn history_file_round_trip() {
    let queue = MultiQueue::new(4).unwrap();
    let h = record_queue(&queue, 2, 500, 0.5, 5);
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    let back = History::read_csv(Source::LiveThreads, buf.as_slice()).unwrap();
    assert_eq!(back.ops, h.ops);
}

#[test]
fn single_thread_simulation_read_costs() {
    let m = 64;
    let mut cfg = SimConfig::<f64>::new(m, 1, 1, 1_000_000, AdversaryKind::Serial);
    cfg.reads_per_update = 1;
    cfg.seed = 21;
    let out = run_simulation(&cfg).unwrap();
    let h = history_from_simulation(&out).unwrap();
    let reads: Vec<f64> = linearize_costs(&h, ObjectKind::Counter)
        .unwrap()
        .into_iter()
        .filter(|c| c.kind == OpKind::Read)
        .map(|c| c.cost)
        .collect();
    assert_eq!(reads.len(), 1_000_000);
    let report = tail_report(&reads, m, &[6.0]).unwrap();
    let bound = 6.0 * m as f64 * (m as f64).ln();
    assert!(report.p99 <= bound, "p99 {} > {bound}", report.p99);
}

#[test]
fn analyzed_regime_exceedance_is_rare() {
    let (n, m) = (2, 8 * ANALYSIS_RATIO as usize);
    let mut cfg = SimConfig::<f64>::new(m, n, ANALYSIS_RATIO, 200_000, AdversaryKind::Stampede { block: n });
    assert!(cfg.in_analyzed_regime());
    cfg.reads_per_update = 1;
    cfg.seed = 8;
    let out = run_simulation(&cfg).unwrap();
    let h = history_from_simulation(&out).unwrap();
    let reads: Vec<f64> = linearize_costs(&h, ObjectKind::Counter)
        .unwrap()
        .into_iter()
        .filter(|c| c.kind == OpKind::Read)
        .map(|c| c.cost)
        .collect();
    let report = tail_report(&reads, m, &[8.0]).unwrap();
    assert!(report.exceedance[0].fraction <= 1e-3, "{report:?}");
}

/// A random history of at most 8 operations: random intervals, one random
/// real-time order, and return values of a relaxed object along it.
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

#[test]
fn brute_force_profiles_ignore_how_overlaps_were_recorded() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for object in [ObjectKind::Counter, ObjectKind::Queue] {
        for _ in 0..300 {
            let h = random_history(&mut rng, object);
            let profiles = cost_profiles(&h, object).unwrap();
            // the recorded mapping is one of the enumerated ones
            let recorded: Vec<u64> = costs(&h, object).iter().map(|&c| c as u64).collect();
            assert!(profiles.contains(&recorded));
            // relabel with other real-time orders that are legal mappings:
            // same possible profiles, and the relabelled costs appear
            // among them
            let orders = linearizations(&h.ops).unwrap();
            for _ in 0..6 {
                let order = &orders[rng.random_range(0..orders.len())];
                let mut ops = h.ops.clone();
                for (seq, &k) in order.iter().enumerate() {
                    ops[k].seq = seq as u64;
                }
                let relabelled = History::new(Source::Simulator, ops);
                relabelled.validate().unwrap();
                let Ok(c) = linearize_costs(&relabelled, object) else { continue };
                let mut by_op = vec![0u64; c.len()];
                for (slot, s) in relabelled.ops.iter().zip(&c) {
                    let original = h.ops.iter().position(|o| o.thread == slot.thread).unwrap();
                    by_op[original] = s.cost as u64;
                }
                assert!(profiles.contains(&by_op));
                let mut re = cost_profiles(&relabelled, object).unwrap().into_iter().collect::<Vec<_>>();
                let mut orig = profiles.iter().cloned().collect::<Vec<_>>();
                // profiles are indexed by position in seq order, so map back
                let perm: Vec<usize> = relabelled
                    .ops
                    .iter()
                    .map(|o| h.ops.iter().position(|x| x.thread == o.thread).unwrap())
                    .collect();
                for p in &mut re {
                    let mut q = vec![0u64; p.len()];
                    for (k, &v) in p.iter().enumerate() {
                        q[perm[k]] = v;
                    }
                    *p = q;
                }
                re.sort();
                orig.sort();
                assert_eq!(re, orig);
            }
        }
    }
}

#[test]
fn fully_overlapping_eight_ops() {
    let ops: Vec<HistoryOp> = (0..8u64)
        .map(|k| HistoryOp {
            seq: k,
            thread: k as u32,
            kind: if k < 6 { OpKind::Increment } else { OpKind::Read },
            invoke: 0,
            respond: 10,
            arg: None,
            ret: (k >= 6).then_some(3),
        })
        .collect();
    let h = History::new(Source::LiveThreads, ops);
    assert_eq!(linearizations(&h.ops).unwrap().len(), 40_320);
    let profiles = cost_profiles(&h, ObjectKind::Counter).unwrap();
    // some mapping places both reads after exactly three increments
    assert!(profiles.iter().any(|p| p.iter().all(|&c| c == 0)));
}
