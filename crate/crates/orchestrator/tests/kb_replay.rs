use lmo_core::VehicleState;
use lmo_orchestrator::KnowledgeBase;
use parking_lot::Mutex;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::sync::Arc;

fn st(id: &str, t: i64) -> VehicleState {
    VehicleState::builder(id, t).speed(t as f64 / 1000.0).build()
}

proptest! {
    #[test]
    fn shuffled_replay_keeps_the_newest(
        stream in prop::collection::vec((0usize..6, 0i64..5000), 1..200).prop_shuffle()
    ) {
        let kb = KnowledgeBase::new(i64::MAX / 4);
        let mut newest: BTreeMap<String, i64> = BTreeMap::new();
        for (id, t) in &stream {
            let id = format!("v{id}");
            let replaced = kb.upsert(st(&id, *t));
            let prev = newest.get(&id).copied();
            prop_assert_eq!(replaced, prev.is_none_or(|p| *t > p));
            newest.entry(id).and_modify(|p| *p = (*p).max(*t)).or_insert(*t);
        }
        let snap = kb.snapshot(None);
        prop_assert_eq!(snap.states.len(), newest.len());
        for s in &snap.states {
            prop_assert_eq!(s.timestamp_ms, newest[&s.vehicle_id]);
        }
    }

    #[test]
    fn sweep_leaves_nothing_stale(times in prop::collection::vec(0i64..10_000, 1..50), now in 0i64..12_000) {
        let kb = KnowledgeBase::new(1000);
        for (i, t) in times.iter().enumerate() {
            kb.upsert(st(&format!("v{i}"), *t));
        }
        let expected_evicted = times.iter().filter(|t| now - **t > 1000).count();
        prop_assert_eq!(kb.sweep(now), expected_evicted);
        prop_assert!(kb.snapshot(None).states.iter().all(|s| now - s.timestamp_ms <= 1000));
    }
}

#[derive(Debug, Clone)]
enum Op {
    Upsert(VehicleState),
    Sweep(i64),
}

/// Writers and a sweeper mutate concurrently while readers copy. Each
/// mutation reports the version it produced, so the writes can be replayed
/// in order on one thread; every snapshot must equal the replayed map at its
/// own version.
#[test]
fn snapshots_match_a_sequential_replay() {
    const HORIZON: i64 = 400;
    let kb = Arc::new(KnowledgeBase::new(HORIZON));
    let log: Arc<Mutex<Vec<(u64, Op)>>> = Arc::default();
    let mut threads = Vec::new();
    for w in 0..3 {
        let (kb, log) = (kb.clone(), log.clone());
        threads.push(std::thread::spawn(move || {
            for k in 0..2000i64 {
                let s = st(&format!("w{w}-{}", k % 7), k);
                let (changed, version) = kb.upsert_versioned(s.clone());
                if changed {
                    log.lock().push((version, Op::Upsert(s)));
                }
            }
        }));
    }
    {
        let (kb, log) = (kb.clone(), log.clone());
        threads.push(std::thread::spawn(move || {
            for now in (0..2400).step_by(7) {
                let (evicted, version) = kb.sweep_versioned(now);
                if evicted > 0 {
                    log.lock().push((version, Op::Sweep(now)));
                }
            }
        }));
    }
    let readers: Vec<_> = (0..2)
        .map(|_| {
            let kb = kb.clone();
            std::thread::spawn(move || (0..300).map(|_| kb.snapshot(None)).collect::<Vec<_>>())
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    let snapshots: Vec<_> = readers.into_iter().flat_map(|r| r.join().unwrap()).collect();

    let mut ops = log.lock().clone();
    ops.sort_by_key(|(v, _)| *v);
    assert!(ops.windows(2).all(|w| w[0].0 < w[1].0), "versions are unique");
    let mut by_version: BTreeMap<u64, BTreeMap<String, VehicleState>> = BTreeMap::new();
    let mut model: BTreeMap<String, VehicleState> = BTreeMap::new();
    by_version.insert(0, model.clone());
    for (v, op) in ops {
        match op {
            Op::Upsert(s) => {
                model.insert(s.vehicle_id.clone(), s);
            }
            Op::Sweep(now) => model.retain(|_, s| now - s.timestamp_ms <= HORIZON),
        }
        by_version.insert(v, model.clone());
    }
    for snap in &snapshots {
        let expected: Vec<VehicleState> = by_version[&snap.version].values().cloned().collect();
        assert_eq!(snap.states, expected, "snapshot at version {}", snap.version);
    }
}
