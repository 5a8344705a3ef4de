use fitwave::engine::FnHook;
use fitwave::observables::wave_observables;
use fitwave::{run, theory, EngineKind, EventKind, ModelParams, PopulationState, RunSchedule};
use proptest::prelude::*;

fn engine() -> impl Strategy<Value = EngineKind> {
    prop_oneof![Just(EngineKind::Faithful), Just(EngineKind::Effective)]
}

/// Small populations with `0 < mu < s`.
fn params() -> impl Strategy<Value = ModelParams> {
    (2u64..400, 0.02f64..0.6, 0.01f64..0.5).prop_map(|(n, s, frac)| ModelParams::new(n, frac * s, s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_event_conserves_population(p in params(), kind in engine(), seed in any::<u64>()) {
        let sched = RunSchedule::uniform(20.0, 5).unwrap();
        let mut bad = None;
        let mut prev: Option<u128> = None;
        let mut hook = FnHook(|e: &fitwave::engine::Event, st: &PopulationState| {
            if bad.is_some() {
                return;
            }
            if st.n() != p.n() || st.band_counts().iter().sum::<u64>() != p.n() {
                bad = Some(format!("size changed at t = {}", e.time));
            } else if let Err(msg) = st.check_invariants() {
                bad = Some(msg);
            } else if let Some(before) = prev {
                let step = st.mutation_sum() as i128 - before as i128;
                let expect = match e.kind {
                    EventKind::Mutation { .. } => 1,
                    EventKind::Replacement { dying, parent } => parent as i128 - dying as i128,
                };
                if step != expect {
                    bad = Some(format!("mutation sum moved by {step}, expected {expect}"));
                }
            }
            prev = Some(st.mutation_sum());
        });
        let traj = run(&p, &sched, kind, seed, &mut hook).unwrap();
        prop_assert!(bad.is_none(), "{:?}", bad);
        for snap in &traj.snapshots {
            prop_assert_eq!(snap.n(), p.n());
            prop_assert!(snap.front_lead() >= 0.0);
            prop_assert!(snap.mean() >= snap.j_min as f64 && snap.mean() <= snap.j_max() as f64);
            prop_assert!(*snap.counts.first().unwrap() > 0 && *snap.counts.last().unwrap() > 0);
        }
        let c = traj.counters;
        prop_assert_eq!(c.total, c.mutations + c.replacements + c.null_replacements);
    }

    #[test]
    fn replaying_the_log_reproduces_the_final_state(p in params(), kind in engine(), seed in any::<u64>()) {
        let sched = RunSchedule::uniform(15.0, 2).unwrap().with_event_log(true);
        let traj = run(&p, &sched, kind, seed, &mut fitwave::engine::NoHook).unwrap();
        let log = traj.log.as_ref().unwrap();
        let mut state = log.initial.clone();
        let mut last = 0.0;
        for e in &log.events {
            prop_assert!(e.time >= last);
            last = e.time;
            match e.kind {
                EventKind::Mutation { from } => state.apply_mutation(from).unwrap(),
                EventKind::Replacement { dying, parent } => state.apply_replacement(dying, parent).unwrap(),
            }
        }
        prop_assert_eq!(state.band_counts(), traj.final_state.band_counts());
        prop_assert_eq!(state.j_min(), traj.final_state.j_min());
        prop_assert_eq!(state.mutation_sum(), traj.final_state.mutation_sum());
    }

    #[test]
    fn runs_are_deterministic(p in params(), kind in engine(), seed in any::<u64>()) {
        let sched = RunSchedule::uniform(10.0, 4).unwrap().with_threshold_watch(true);
        let a = run(&p, &sched, kind, seed, &mut fitwave::engine::NoHook).unwrap();
        let b = run(&p, &sched, kind, seed, &mut fitwave::engine::NoHook).unwrap();
        prop_assert_eq!(&a.snapshots, &b.snapshots);
        prop_assert_eq!(&a.tau, &b.tau);
        prop_assert_eq!(a.counters.total, b.counters.total);
    }

    #[test]
    fn wave_observables_are_consistent(
        n in 50u64..2000,
        s in 0.05f64..0.3,
        frac in 0.005f64..0.1,
        seed in any::<u64>(),
    ) {
        let p = ModelParams::new(n, frac * s, s).unwrap();
        let sc = theory::scales(&p).unwrap();
        let sched = RunSchedule::uniform(2.5 * sc.a_n, 26).unwrap().with_threshold_watch(true);
        let traj = run(&p, &sched, EngineKind::Effective, seed, &mut fitwave::engine::NoHook).unwrap();
        prop_assert_eq!(traj.tau(0), Some(0.0));
        let queries: Vec<f64> = (0..=25).map(|i| 0.1 * i as f64).collect();
        let rec = wave_observables(&traj, &sc, &queries).unwrap();
        prop_assert_eq!(rec.rows.len(), traj.snapshots.len());
        for row in &rec.rows {
            prop_assert!(row.front_lead >= 0.0);
            prop_assert!(row.j_min as f64 <= row.mean && row.mean <= row.j_max as f64);
        }
        for w in rec.tau.windows(2) {
            prop_assert!(w[0].j < w[1].j);
        }
        for r in &rec.tau {
            prop_assert_eq!(r.gamma, r.tau + sc.a_n);
        }
        // j(t) is nondecreasing and d(t) stays within half a gap of the midpoint
        let mut last_j = None;
        for q in &rec.queries {
            if let Some(j) = q.j {
                prop_assert!(last_j.is_none_or(|l| j >= l));
                last_j = Some(j);
            } else {
                prop_assert!(last_j.is_none());
            }
            if let Some(d) = q.d {
                prop_assert!(d.abs() <= 0.5 + 1e-12, "d = {}", d);
            }
        }
    }
}
